use proptest::prelude::*;
use qubo_abr::abr::{
    build_onehot, build_quality_term, build_switch_term, build_window_model, decode,
    layout_variables, plan_assignment, AbrQuboConfig, AbrWindow, BufferForecast,
};
use qubo_abr::{solve_exhaustive, BitAssignment, BitrateLadder, QuboModel, Solver};

#[derive(Debug, Clone)]
struct Instance {
    ladder: BitrateLadder,
    window: AbrWindow,
    budgets: Vec<u64>,
    plan: Vec<usize>,
    config: AbrQuboConfig,
}

fn ladder_strategy(max_levels: usize) -> impl Strategy<Value = BitrateLadder> {
    prop::collection::vec(50.0..1500.0f64, 2..=max_levels).prop_map(|steps| {
        let mut rate = 0.0;
        let bitrates: Vec<f64> = steps.iter().map(|s| {
            rate += s;
            rate.round()
        }).collect();
        BitrateLadder::with_map(bitrates, qubo_abr::QualityMap::Linear).unwrap()
    })
}

fn instance_strategy(max_w: usize, max_levels: usize, max_k: usize) -> impl Strategy<Value = Instance> {
    (ladder_strategy(max_levels), 1..=max_w, 1..=max_k, 0.0..3.0f64, 0.0..3.0f64, any::<bool>())
        .prop_flat_map(|(ladder, w, k, a, b, has_prev)| {
            let l = ladder.len();
            let top = ladder.segment_kilobits(l - 1, 4.0);
            (
                Just(ladder),
                prop::collection::vec(0.0..1.5 * top, w),
                prop::collection::vec(0..l, w),
                0..l,
                Just((k, a, b, has_prev)),
            )
        })
        .prop_map(|(ladder, budgets, plan, prev, (k, a, b, has_prev))| {
            let prev_quality = has_prev.then(|| ladder.quality(prev));
            let window = AbrWindow::uniform(&ladder, plan.len(), 4.0, 60.0, prev_quality);
            Instance {
                ladder,
                window,
                budgets: budgets.iter().map(|m| m.floor() as u64).collect(),
                plan,
                config: AbrQuboConfig {
                    quality_weight: a,
                    switch_weight: b,
                    slack_bits: k,
                    window: 5,
                    ..AbrQuboConfig::default()
                },
            }
        })
}

fn forecast(inst: &Instance) -> BufferForecast {
    BufferForecast::new(vec![0.0; inst.budgets.len()], inst.budgets.clone(), &inst.window)
}

/// Test-side quantization: (unit, ceil(S/U) per level, floor(M/U)) or None.
fn quantize(sizes: &[f64], budget: u64, k: usize) -> Option<(u64, Vec<u64>, u64)> {
    let smin = sizes.iter().cloned().fold(f64::INFINITY, f64::min);
    if (budget as f64) < smin {
        return None;
    }
    let unit = (((budget as f64 - smin + 1.0) / 2f64.powi(k as i32)).ceil() as u64).max(1);
    let units = sizes.iter().map(|s| (s / unit as f64).ceil() as u64).collect();
    Some((unit, units, budget / unit))
}

/// Smallest |units + s - target| over all slack values s.
fn min_slack_residual(units: u64, target: u64, k: usize) -> i64 {
    (0..1i64 << k)
        .map(|s| (units as i64 + s - target as i64).abs())
        .min()
        .unwrap()
}

/// Sum of a few floats, sorted by magnitude and compensated.
fn exact_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in v {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn objective(inst: &Instance, plan: &[usize]) -> f64 {
    let (a, b) = (inst.config.quality_weight, inst.config.switch_weight);
    let mut prev = inst.window.prev_quality;
    let mut total = 0.0;
    for &l in plan {
        let q = inst.ladder.quality(l);
        total -= a * q;
        if let Some(p) = prev {
            total += b * (q - p) * (q - p);
        }
        prev = Some(q);
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn energy_decomposes_at_one_hot_points(inst in instance_strategy(5, 6, 8)) {
        let f = forecast(&inst);
        let (model, layout, rows) = build_window_model(&inst.config, &inst.ladder, &inst.window, &f).unwrap();
        let penalties = inst.config.penalties(&inst.ladder);
        let (hi, lo) = model.energy_split(&plan_assignment(&layout, &rows, &inst.plan)).unwrap();
        // penalties reach 1e12, so the difference is formed without rounding the large parts
        let mut diff = vec![hi, lo];
        for (n, &l) in inst.plan.iter().enumerate() {
            if let Some((_, units, target)) = quantize(&inst.window.sizes[n], inst.budgets[n], inst.config.slack_bits) {
                let r2 = min_slack_residual(units[l], target, inst.config.slack_bits).pow(2) as f64;
                let p = penalties.rebuffer * r2;
                diff.push(-p);
                diff.push(-penalties.rebuffer.mul_add(r2, -p));
            }
        }
        let expected = objective(&inst, &inst.plan);
        diff.push(-expected);
        let delta = exact_sum(&diff);
        prop_assert!(delta.abs() <= 1e-6,
            "energy {hi}+{lo} expected {expected} delta {delta}");
    }

    #[test]
    fn feasible_plans_admit_zero_penalty_slack(inst in instance_strategy(5, 6, 8)) {
        let f = forecast(&inst);
        let (_, _, rows) = build_window_model(&inst.config, &inst.ladder, &inst.window, &f).unwrap();
        for (n, &l) in inst.plan.iter().enumerate() {
            let size = inst.window.sizes[n][l];
            match (quantize(&inst.window.sizes[n], inst.budgets[n], inst.config.slack_bits), &rows[n]) {
                (Some((unit, units, target)), Some(row)) => {
                    prop_assert_eq!(row.unit, unit);
                    if size <= (unit * target) as f64 {
                        prop_assert_eq!(row.residual(l), 0);
                    }
                    if row.residual(l) == 0 {
                        prop_assert!(size <= inst.budgets[n] as f64);
                        prop_assert!(units[l] <= target);
                    }
                }
                (None, None) => {}
                (q, r) => prop_assert!(false, "feasibility mismatch at {}: {:?} vs {:?}", n, q, r),
            }
        }
    }

    #[test]
    fn onehot_penalty_is_zero_exactly_on_one_hot_rows(
        w in 1..5usize, l in 2..6usize, lambda in 0.1..100.0f64, mask in any::<u64>(),
    ) {
        let layout = layout_variables(w, l, 1);
        let mut m = QuboModel::new(layout.num_bits());
        build_onehot(&mut m, &layout, lambda).unwrap();
        let x = BitAssignment::from_mask(mask, layout.num_bits());
        let one_hot = (0..w).all(|n| (0..l).filter(|&j| x.get(layout.selection(n, j))).count() == 1);
        let e = m.energy(&x).unwrap();
        prop_assert_eq!(e.abs() < 1e-12, one_hot);
        prop_assert!(e >= -1e-12);
    }

    #[test]
    fn quality_is_nonpositive_and_switching_nonnegative(inst in instance_strategy(5, 6, 2)) {
        let layout = layout_variables(inst.plan.len(), inst.ladder.len(), 1);
        let x = {
            let mut x = BitAssignment::zeros(layout.num_bits());
            for (n, &l) in inst.plan.iter().enumerate() {
                x.set(layout.selection(n, l), true);
            }
            x
        };
        let mut q = QuboModel::new(layout.num_bits());
        build_quality_term(&mut q, &layout, &inst.ladder, inst.config.quality_weight).unwrap();
        let mut s = QuboModel::new(layout.num_bits());
        build_switch_term(&mut s, &layout, &inst.ladder, inst.config.switch_weight, inst.window.prev_quality).unwrap();
        prop_assert!(q.energy(&x).unwrap() <= 0.0);
        prop_assert!(s.energy(&x).unwrap() >= -1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn joint_scaling_keeps_the_argmin(inst in instance_strategy(2, 3, 3), k in 0.05..20.0f64) {
        let f = forecast(&inst);
        let (m1, ..) = build_window_model(&inst.config, &inst.ladder, &inst.window, &f).unwrap();
        let scaled = inst.config.scaled(&inst.ladder, k);
        let (m2, ..) = build_window_model(&scaled, &inst.ladder, &inst.window, &f).unwrap();
        let (r1, r2) = (solve_exhaustive(&m1).unwrap(), solve_exhaustive(&m2).unwrap());
        let tol = 1e-9 * (1.0 + r2.energy.abs());
        prop_assert!((m2.energy(&r1.assignment).unwrap() - r2.energy).abs() <= tol);
        prop_assert!((m1.energy(&r2.assignment).unwrap() - r1.energy).abs() <= tol / k.min(1.0));
    }

    #[test]
    fn chain_matches_exhaustive_on_windows(inst in instance_strategy(2, 3, 3)) {
        let f = forecast(&inst);
        let (model, layout, _) = build_window_model(&inst.config, &inst.ladder, &inst.window, &f).unwrap();
        let chain = Solver::Chain.solve_structured(&model, &layout.chain_structure()).unwrap();
        let exact = solve_exhaustive(&model).unwrap();
        prop_assert!((chain.energy - exact.energy).abs() < 1e-9);
    }

    #[test]
    fn single_position_without_switching_picks_best_fitting_level(
        inst in instance_strategy(1, 6, 8), a in 0.1..3.0f64,
    ) {
        let config = AbrQuboConfig { quality_weight: a, switch_weight: 0.0, ..inst.config.clone() };
        let f = forecast(&inst);
        let (model, layout, rows) = build_window_model(&config, &inst.ladder, &inst.window, &f).unwrap();
        let r = Solver::Chain.solve_structured(&model, &layout.chain_structure()).unwrap();
        let d = decode(&layout, &r.assignment, &inst.window, &f);
        // enumerate: highest level whose quantized size fits, lowest if none
        let expected = match &rows[0] {
            Some(row) => (0..inst.ladder.len()).rev().find(|&l| row.level_units[l] <= row.target).unwrap_or(0),
            None => inst.ladder.len() - 1,
        };
        let expected_decoded = match &rows[0] {
            Some(_) => expected,
            None => 0,
        };
        prop_assert_eq!(d.levels[0], expected_decoded);
        if rows[0].is_some() {
            prop_assert!(!d.violations[0]);
        }
    }
}
