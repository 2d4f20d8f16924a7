#!/usr/bin/env python3
"""Writes synthetic logs in the HSDPA row layout:

    unix_ts  ms_since_start  lat  lon  bytes_since_last  ms_since_last

tram.log: about 1.2 Mbps on average, strongly varying, with short outages.
ferry.log: about 2 Mbps on average, slower fades, rare deep drops.
"""
import math
import random
import sys
from pathlib import Path


def gen(name, seed, seconds, mean_kbps, sigma, corr, outage_rate, outage_len, start_lat, start_lon):
    rng = random.Random(seed)
    rows = []
    t_ms = 0
    level = 0.0
    outage = 0
    unix0 = 1_201_000_000 + seed
    lat, lon = start_lat, start_lon
    while t_ms < seconds * 1000:
        gap = rng.randint(950, 1080)
        level = corr * level + math.sqrt(1 - corr * corr) * rng.gauss(0.0, sigma)
        kbps = mean_kbps * math.exp(level - sigma * sigma / 2)
        if outage == 0 and rng.random() < outage_rate:
            outage = rng.randint(*outage_len)
        if outage > 0:
            kbps *= rng.uniform(0.0, 0.08)
            outage -= 1
        nbytes = int(kbps * 1000 / 8 * gap / 1000)
        lat += rng.uniform(-2e-5, 2e-5)
        lon += rng.uniform(0.0, 4e-5)
        rows.append(f"{unix0 + t_ms // 1000} {t_ms} {lat:.6f} {lon:.6f} {nbytes} {gap}")
        t_ms += gap
    return rows


def main(out_dir):
    out = Path(out_dir)
    tram = gen("tram", 11, 600, 1200.0, 0.75, 0.85, 0.015, (2, 6), 59.9139, 10.7522)
    ferry = gen("ferry", 23, 600, 2000.0, 0.45, 0.95, 0.006, (3, 8), 59.9020, 10.7300)
    (out / "tram.log").write_text("\n".join(tram) + "\n")
    (out / "ferry.log").write_text("\n".join(ferry) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)
