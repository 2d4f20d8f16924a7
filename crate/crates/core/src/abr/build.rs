use serde::{Deserialize, Serialize};

use super::{
    decode, layout_variables, AbrError, AbrQuboConfig, AbrWindow, BufferForecast, Penalties,
    VariableLayout,
};
use crate::annealer::{SolveResult, Solver};
use crate::ladder::BitrateLadder;
use crate::qubo::{BitAssignment, QuboError, QuboModel};

/// Adds `weight * (sum_i c_i x_i + constant)^2`. Indices must be distinct.
pub fn add_squared_linear(
    model: &mut QuboModel,
    terms: &[(usize, f64)],
    constant: f64,
    weight: f64,
) -> Result<(), QuboError> {
    for (a, &(i, ci)) in terms.iter().enumerate() {
        // x^2 = x folds the square and the cross term with the constant into the diagonal
        model.add_scaled_term(i, i, weight, ci * ci + 2.0 * constant * ci)?;
        for &(j, cj) in &terms[a + 1..] {
            model.add_scaled_term(i, j, weight, 2.0 * ci * cj)?;
        }
    }
    model.add_scaled_offset(weight, constant * constant)
}

pub fn build_quality_term(
    model: &mut QuboModel,
    layout: &VariableLayout,
    ladder: &BitrateLadder,
    a: f64,
) -> Result<(), QuboError> {
    if a == 0.0 {
        return Ok(());
    }
    for n in 0..layout.segments {
        for l in 0..layout.levels {
            let i = layout.selection(n, l);
            model.add_term(i, i, -a * ladder.quality(l))?;
        }
    }
    Ok(())
}

/// Squared quality difference between adjacent positions. The first
/// position is compared with `prev_quality` when there is one.
pub fn build_switch_term(
    model: &mut QuboModel,
    layout: &VariableLayout,
    ladder: &BitrateLadder,
    b: f64,
    prev_quality: Option<f64>,
) -> Result<(), QuboError> {
    if b == 0.0 {
        return Ok(());
    }
    let row = |n: usize, sign: f64| {
        (0..layout.levels).map(move |l| (layout.selection(n, l), sign * ladder.quality(l)))
    };
    if let Some(prev) = prev_quality {
        let terms: Vec<_> = row(0, 1.0).collect();
        add_squared_linear(model, &terms, -prev, b)?;
    }
    for n in 1..layout.segments {
        let terms: Vec<_> = row(n, 1.0).chain(row(n - 1, -1.0)).collect();
        add_squared_linear(model, &terms, 0.0, b)?;
    }
    Ok(())
}

pub fn build_onehot(
    model: &mut QuboModel,
    layout: &VariableLayout,
    lambda: f64,
) -> Result<(), QuboError> {
    for n in 0..layout.segments {
        let terms: Vec<_> = (0..layout.levels).map(|l| (layout.selection(n, l), 1.0)).collect();
        add_squared_linear(model, &terms, -1.0, lambda)?;
    }
    Ok(())
}

/// Integer encoding of one position's budget inequality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebufferRow {
    pub position: usize,
    /// Kilobits per quantization unit `U`.
    pub unit: u64,
    /// `ceil(S(l) / U)`.
    pub level_units: Vec<u64>,
    /// `floor(M / U)`.
    pub target: u64,
    pub slack_bits: usize,
}

impl RebufferRow {
    /// `None` when the budget is below the smallest segment.
    pub fn quantize(position: usize, sizes: &[f64], budget: u64, slack_bits: usize) -> Option<Self> {
        let smallest = sizes.iter().copied().fold(f64::INFINITY, f64::min);
        if (budget as f64) < smallest {
            return None;
        }
        let range = budget as f64 - smallest + 1.0;
        let unit = ((range / (1u64 << slack_bits) as f64).ceil() as u64).max(1);
        let level_units = sizes
            .iter()
            .map(|&s| (s / unit as f64).ceil() as u64)
            .collect();
        Some(RebufferRow {
            position,
            unit,
            level_units,
            target: budget / unit,
            slack_bits,
        })
    }

    pub fn max_slack(&self) -> u64 {
        (1u64 << self.slack_bits) - 1
    }

    /// Slack value minimizing the penalty at `level`.
    pub fn best_slack(&self, level: usize) -> u64 {
        self.target
            .saturating_sub(self.level_units[level])
            .min(self.max_slack())
    }

    /// Residual `units + slack - target` at the minimizing slack.
    pub fn residual(&self, level: usize) -> i64 {
        self.level_units[level] as i64 + self.best_slack(level) as i64 - self.target as i64
    }
}

/// Adds the slack-variable penalty for every feasible position and returns
/// the per-position encodings (`None` where infeasible).
pub fn build_rebuffer_constraint(
    model: &mut QuboModel,
    layout: &VariableLayout,
    window: &AbrWindow,
    forecast: &BufferForecast,
    lambda: f64,
) -> Result<Vec<Option<RebufferRow>>, QuboError> {
    let mut rows = Vec::with_capacity(layout.segments);
    for n in 0..layout.segments {
        let row = if forecast.feasible[n] {
            RebufferRow::quantize(n, &window.sizes[n], forecast.budgets[n], layout.slack_bits)
        } else {
            None
        };
        if let Some(r) = &row {
            let terms: Vec<(usize, f64)> = (0..layout.levels)
                .map(|l| (layout.selection(n, l), r.level_units[l] as f64))
                .chain((0..layout.slack_bits).map(|k| (layout.slack(n, k), (1u64 << k) as f64)))
                .collect();
            add_squared_linear(model, &terms, -(r.target as f64), lambda)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Propagates the buffer along `plan` at constant throughput `c_pred`:
/// `B[n+1] = min(cap, max(0, B[n] - S(n, plan[n]) / c_pred) + segment_duration)`,
/// with budgets `M[n] = floor(c_pred * B[n])`.
pub fn forecast_buffers(
    b_now: f64,
    c_pred: f64,
    window: &AbrWindow,
    plan: &[usize],
) -> Result<BufferForecast, AbrError> {
    if !(c_pred.is_finite() && c_pred > 0.0) {
        return Err(AbrError::NonPositivePrediction(c_pred));
    }
    if !(b_now >= 0.0 && b_now <= window.buffer_cap + 1e-9) {
        return Err(AbrError::BufferOutOfRange {
            buffer: b_now,
            cap: window.buffer_cap,
        });
    }
    if plan.len() < window.len() {
        return Err(AbrError::InvalidWindow(format!(
            "reference plan covers {} of {} positions",
            plan.len(),
            window.len()
        )));
    }
    let mut buffers = Vec::with_capacity(window.len());
    let mut b = b_now.min(window.buffer_cap);
    for n in 0..window.len() {
        buffers.push(b);
        let download = window.sizes[n][plan[n]] / c_pred;
        b = ((b - download).max(0.0) + window.segment_duration).min(window.buffer_cap);
    }
    let budgets = buffers.iter().map(|&b| (c_pred * b).floor() as u64).collect();
    Ok(BufferForecast::new(buffers, budgets, window))
}

/// One-hot assignment of `plan` with every slack register at its
/// penalty-minimizing value.
pub fn plan_assignment(
    layout: &VariableLayout,
    rows: &[Option<RebufferRow>],
    plan: &[usize],
) -> BitAssignment {
    let mut x = BitAssignment::zeros(layout.num_bits());
    for (n, &level) in plan.iter().enumerate().take(layout.segments) {
        x.set(layout.selection(n, level), true);
        if let Some(row) = &rows[n] {
            let slack = row.best_slack(level);
            for k in 0..layout.slack_bits {
                x.set(layout.slack(n, k), (slack >> k) & 1 == 1);
            }
        }
    }
    x
}

/// A compiled window ready to solve.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledWindow {
    pub model: QuboModel,
    pub layout: VariableLayout,
    pub forecast: BufferForecast,
    pub rebuffer_rows: Vec<Option<RebufferRow>>,
    pub penalties: Penalties,
    /// Reference plan behind each forecast pass, in order.
    pub reference_plans: Vec<Vec<usize>>,
}

/// One model for a fixed forecast: quality, switching, budget and one-hot terms.
pub fn build_window_model(
    config: &AbrQuboConfig,
    ladder: &BitrateLadder,
    window: &AbrWindow,
    forecast: &BufferForecast,
) -> Result<(QuboModel, VariableLayout, Vec<Option<RebufferRow>>), AbrError> {
    config.validate()?;
    window.validate(ladder)?;
    if forecast.budgets.len() != window.len() || forecast.feasible.len() != window.len() {
        return Err(AbrError::InvalidWindow("forecast does not cover the window".into()));
    }
    let penalties = config.penalties(ladder);
    let layout = layout_variables(window.len(), ladder.len(), config.slack_bits);
    let mut model = QuboModel::new(layout.num_bits());
    build_quality_term(&mut model, &layout, ladder, config.quality_weight)?;
    build_switch_term(&mut model, &layout, ladder, config.switch_weight, window.prev_quality)?;
    let rows = build_rebuffer_constraint(&mut model, &layout, window, forecast, penalties.rebuffer)?;
    build_onehot(&mut model, &layout, penalties.onehot)?;
    Ok((model, layout, rows))
}

pub fn solve_window(solver: &Solver, assembled: &AssembledWindow) -> Result<SolveResult, AbrError> {
    Ok(solver.solve_structured(&assembled.model, &assembled.layout.chain_structure())?)
}

/// Compiles a window with forecast refinement: the first forecast follows
/// the all-lowest plan, each later one follows the decoded solution of the
/// previous pass.
pub fn assemble_with(
    config: &AbrQuboConfig,
    ladder: &BitrateLadder,
    window: &AbrWindow,
    solver: &Solver,
    mut forecaster: impl FnMut(&[usize]) -> Result<BufferForecast, AbrError>,
) -> Result<AssembledWindow, AbrError> {
    config.validate()?;
    let penalties = config.penalties(ladder);
    let mut plan = vec![0; window.len()];
    let mut reference_plans = Vec::with_capacity(config.refine_iterations);
    let mut pass = 0;
    loop {
        let forecast = forecaster(&plan)?;
        let (model, layout, rebuffer_rows) = build_window_model(config, ladder, window, &forecast)?;
        reference_plans.push(plan.clone());
        let assembled = AssembledWindow {
            model,
            layout,
            forecast,
            rebuffer_rows,
            penalties,
            reference_plans: Vec::new(),
        };
        pass += 1;
        if pass >= config.refine_iterations {
            return Ok(AssembledWindow {
                reference_plans,
                ..assembled
            });
        }
        let solution = solve_window(solver, &assembled)?;
        plan = decode(&assembled.layout, &solution.assignment, window, &assembled.forecast).levels;
    }
}

/// [`assemble_with`] using [`forecast_buffers`] at a constant prediction.
pub fn assemble(
    config: &AbrQuboConfig,
    ladder: &BitrateLadder,
    window: &AbrWindow,
    b_now: f64,
    c_pred: f64,
    solver: &Solver,
) -> Result<AssembledWindow, AbrError> {
    assemble_with(config, ladder, window, solver, |plan| {
        forecast_buffers(b_now, c_pred, window, plan)
    })
}
