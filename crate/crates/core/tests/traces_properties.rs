use proptest::prelude::*;
use qubo_abr::{convert_hsdpa, parse_trace, predict_throughput, HsdpaColumns, Trace};

proptest! {
    #[test]
    fn canonical_text_round_trips(
        rates in prop::collection::vec(0.0..10_000.0f64, 2..60),
        interval in prop_oneof![Just(0.25), Just(0.5), Just(1.0), Just(2.0)],
    ) {
        let mut rates = rates;
        rates[0] += 1.0;
        let trace = Trace::from_rates(&rates, interval).unwrap();
        prop_assert_eq!(parse_trace(&trace.to_text()).unwrap(), trace);
    }

    #[test]
    fn harmonic_mean_is_at_most_arithmetic(
        history in prop::collection::vec(1.0..10_000.0f64, 1..20),
        k in 1usize..25,
    ) {
        let h = predict_throughput(&history, k).unwrap();
        let recent = &history[history.len().saturating_sub(k)..];
        let mean = recent.iter().sum::<f64>() / recent.len() as f64;
        prop_assert!(h <= mean * (1.0 + 1e-12));
        let constant = recent.iter().all(|&x| x == recent[0]);
        if !constant {
            prop_assert!(h < mean);
        }
    }

    #[test]
    fn constant_history_predicts_itself(x in 1.0..10_000.0f64, n in 1usize..10, k in 1usize..10) {
        let h = predict_throughput(&vec![x; n], k).unwrap();
        prop_assert!((h - x).abs() <= 1e-9 * x);
    }

    #[test]
    fn hsdpa_conversion_yields_valid_traces_or_errors(
        rows in prop::collection::vec((0u64..3000, -10i64..2_000_000, any::<bool>()), 1..30),
        fixed in prop::option::of(200.0..2000.0f64),
    ) {
        let mut ts = 1_000_000u64;
        let mut text = String::new();
        for (gap, bytes, garbage) in &rows {
            ts += gap;
            if *garbage && *bytes % 7 == 0 {
                text.push_str(&format!("1288 {ts} 59.9 10.7 abc 1000\n"));
            } else {
                text.push_str(&format!("1288 {ts} 59.9 10.7 {bytes} 1000\n"));
            }
        }
        let columns = HsdpaColumns { interval_ms: fixed, ..HsdpaColumns::default() };
        if let Ok(trace) = convert_hsdpa(&text, &columns) {
            let samples = trace.samples();
            prop_assert_eq!(samples[0].start, 0.0);
            prop_assert!(samples.windows(2).all(|w| w[1].start > w[0].start));
            prop_assert!(samples.iter().all(|s| s.kbps >= 0.0 && s.kbps.is_finite()));
            prop_assert!(samples.iter().any(|s| s.kbps > 0.0));
            prop_assert!(trace.total_duration() > samples[samples.len() - 1].start);
            prop_assert!(Trace::new(samples.to_vec(), trace.total_duration()).is_ok());
        }
    }
}

#[test]
fn hsdpa_rows_convert_to_kbps() {
    let text = "1 0 0 0 250000 1000\n2 1000 0 0 250000 1000\n";
    let t = convert_hsdpa(text, &HsdpaColumns::default()).unwrap();
    let rates: Vec<f64> = t.samples().iter().map(|s| s.kbps).collect();
    assert_eq!(rates, vec![2000.0, 2000.0]);
    let one = convert_hsdpa("1 0 0 0 125000 1000\n", &HsdpaColumns::default()).unwrap();
    assert_eq!(one.samples()[0].kbps, 1000.0);
}

#[test]
fn predictor_examples() {
    let h = predict_throughput(&[1000.0, 2000.0], 2).unwrap();
    assert!((h - 4000.0 / 3.0).abs() < 1e-9);
    assert_eq!(predict_throughput(&[10.0, 20.0, 30.0], 1).unwrap(), 30.0);
    assert!(predict_throughput(&[], 5).is_err());
}
