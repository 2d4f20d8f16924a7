use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    assemble, build_window_model, decode, solve_window, AbrError, AbrQuboConfig, AbrWindow,
    BufferForecast,
};
use crate::annealer::Solver;
use crate::ladder::BitrateLadder;
use crate::sim::{step, AbrPolicy, PlaybackState, PolicyContext};
use crate::traces::{predict_throughput, Trace, DEFAULT_PREDICTOR_WINDOW};
use crate::Error;

/// Outcome of one receding-horizon decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboSelection {
    pub level: usize,
    /// Some window position could not fit even the lowest level.
    pub infeasible: bool,
    /// Decoder repairs per window position.
    pub violations: Vec<bool>,
    pub energy: f64,
    /// Throughput prediction in kbps.
    pub prediction: f64,
    pub plan: Vec<usize>,
}

/// Predicts throughput from the history, solves a window of
/// `min(config.window, remaining)` segments and commits its first level.
pub fn qubo_abr_select(
    ctx: &PolicyContext<'_>,
    config: &AbrQuboConfig,
    solver: &Solver,
    predictor_window: usize,
) -> Result<QuboSelection, AbrError> {
    let remaining = ctx.remaining_segments();
    if remaining == 0 {
        return Err(AbrError::InvalidWindow("no segments left".into()));
    }
    let prediction = predict_throughput(ctx.history, predictor_window)?;
    let len = config.window.min(remaining);
    let window = AbrWindow::uniform(
        ctx.ladder,
        len,
        ctx.config.segment_duration,
        ctx.config.buffer_cap,
        ctx.state.last_level.map(|l| ctx.ladder.quality(l)),
    );
    let buffer = ctx.state.buffer.min(ctx.config.buffer_cap);
    let assembled = assemble(config, ctx.ladder, &window, buffer, prediction, solver)?;
    let result = solve_window(solver, &assembled)?;
    let decoded = decode(&assembled.layout, &result.assignment, &window, &assembled.forecast);
    Ok(QuboSelection {
        level: decoded.levels[0],
        infeasible: !assembled.forecast.all_feasible(),
        violations: decoded.violations,
        energy: result.energy,
        prediction,
        plan: decoded.levels,
    })
}

/// Receding-horizon QUBO policy.
#[derive(Debug, Clone)]
pub struct QuboPolicy {
    pub config: AbrQuboConfig,
    pub solver: Solver,
    pub predictor_window: usize,
    /// Annealing seed; segment `n` is solved with `seed + n`.
    pub seed: u64,
    last: Option<QuboSelection>,
    solve_time: Duration,
}

impl QuboPolicy {
    pub fn new(config: AbrQuboConfig, solver: Solver, seed: u64) -> Self {
        QuboPolicy {
            config,
            solver,
            predictor_window: DEFAULT_PREDICTOR_WINDOW,
            seed,
            last: None,
            solve_time: Duration::ZERO,
        }
    }

    pub fn last_selection(&self) -> Option<&QuboSelection> {
        self.last.as_ref()
    }
}

impl AbrPolicy for QuboPolicy {
    fn name(&self) -> String {
        "qubo".into()
    }

    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error> {
        let started = Instant::now();
        let solver = self
            .solver
            .reseeded(self.seed.wrapping_add(ctx.state.next_segment as u64));
        let selection = qubo_abr_select(ctx, &self.config, &solver, self.predictor_window)?;
        self.solve_time += started.elapsed();
        if selection.infeasible {
            log::debug!("segment {}: window has infeasible positions", ctx.state.next_segment);
        }
        let level = selection.level;
        self.last = Some(selection);
        Ok(level)
    }

    fn solve_time(&self) -> Option<Duration> {
        Some(self.solve_time)
    }
}

/// Budgets along `plan` computed on the true trace: each position's budget
/// is the capacity delivered between its download start (after any idle
/// wait) and the moment the buffer would run dry.
pub fn oracle_forecast(
    trace: &Trace,
    ladder: &BitrateLadder,
    start: &PlaybackState,
    window: &AbrWindow,
    plan: &[usize],
) -> Result<BufferForecast, AbrError> {
    if plan.len() < window.len() {
        return Err(AbrError::InvalidWindow("reference plan is shorter than the window".into()));
    }
    let (seg, cap) = (window.segment_duration, window.buffer_cap);
    let mut state = *start;
    let mut buffers = Vec::with_capacity(window.len());
    let mut budgets = Vec::with_capacity(window.len());
    for &level in &plan[..window.len()] {
        let idle = (state.buffer + seg - cap).max(0.0);
        let buffer = state.buffer - idle;
        buffers.push(buffer);
        budgets.push(trace.capacity_between(state.wall_time + idle, buffer).floor() as u64);
        state = step(&state, level, ladder, trace, seg, cap)
            .map_err(|e| AbrError::InvalidWindow(e.to_string()))?
            .0;
    }
    Ok(BufferForecast::new(buffers, budgets, window))
}

pub const DEFAULT_FULL_HORIZON_PASSES: usize = 8;

/// Offline policy: one QUBO over every remaining segment with budgets taken
/// from the true trace, solved once at the first decision.
#[derive(Debug, Clone)]
pub struct QuboFullHorizonPolicy {
    pub config: AbrQuboConfig,
    pub solver: Solver,
    /// Upper bound on forecast refinement passes.
    pub passes: usize,
    trace: Trace,
    plan: Option<Vec<usize>>,
    solve_time: Duration,
}

impl QuboFullHorizonPolicy {
    /// Uses the exact chain solver.
    pub fn new(config: AbrQuboConfig, trace: Trace) -> Self {
        QuboFullHorizonPolicy::with_solver(config, Solver::Chain, trace)
    }

    pub fn with_solver(config: AbrQuboConfig, solver: Solver, trace: Trace) -> Self {
        QuboFullHorizonPolicy {
            config,
            solver,
            passes: DEFAULT_FULL_HORIZON_PASSES,
            trace,
            plan: None,
            solve_time: Duration::ZERO,
        }
    }

    /// Planned levels for segments `1..N`, once the first decision has run.
    pub fn plan(&self) -> Option<&[usize]> {
        self.plan.as_deref()
    }

    /// Lowers, front to back, every level that does not fit the oracle
    /// budget left by the levels before it. The result never stalls.
    fn repair(&self, ctx: &PolicyContext<'_>, plan: &mut [usize]) -> Result<(), AbrError> {
        let (seg, cap) = (ctx.config.segment_duration, ctx.config.buffer_cap);
        let mut state = *ctx.state;
        for level in plan.iter_mut() {
            let idle = (state.buffer + seg - cap).max(0.0);
            let budget = self.trace.capacity_between(state.wall_time + idle, state.buffer - idle);
            let fits = |l: usize| ctx.ladder.segment_kilobits(l, seg) <= budget.floor();
            if !fits(*level) {
                *level = (0..*level).rev().find(|&l| fits(l)).unwrap_or(0);
            }
            state = step(&state, *level, ctx.ladder, &self.trace, seg, cap)
                .map_err(|e| AbrError::InvalidWindow(e.to_string()))?
                .0;
        }
        Ok(())
    }

    /// Refines the oracle forecast along successive repaired plans, starting
    /// once from each constant-level reference, and keeps the plan with the
    /// best quality and switching objective.
    fn solve(&self, ctx: &PolicyContext<'_>) -> Result<Vec<usize>, AbrError> {
        self.config.validate()?;
        let window = AbrWindow::uniform(
            ctx.ladder,
            ctx.remaining_segments(),
            ctx.config.segment_duration,
            ctx.config.buffer_cap,
            ctx.state.last_level.map(|l| ctx.ladder.quality(l)),
        );
        let objective = |plan: &[usize]| {
            let mut prev = window.prev_quality;
            let mut total = 0.0;
            for &l in plan {
                let q = ctx.ladder.quality(l);
                total -= self.config.quality_weight * q;
                if let Some(p) = prev {
                    total += self.config.switch_weight * (q - p) * (q - p);
                }
                prev = Some(q);
            }
            total
        };
        let mut best = (objective(&vec![0; window.len()]), vec![0; window.len()]);
        // the lowest-level start first, then one start per constant level
        for start in 0..ctx.ladder.len() {
            let mut reference = vec![start; window.len()];
            for _ in 0..self.passes.max(self.config.refine_iterations) {
                let forecast = oracle_forecast(&self.trace, ctx.ladder, ctx.state, &window, &reference)?;
                let (model, layout, _) = build_window_model(&self.config, ctx.ladder, &window, &forecast)?;
                let result = self.solver.solve_structured(&model, &layout.chain_structure())?;
                let mut plan = decode(&layout, &result.assignment, &window, &forecast).levels;
                self.repair(ctx, &mut plan)?;
                let score = objective(&plan);
                if score < best.0 {
                    best = (score, plan.clone());
                }
                if plan == reference {
                    break;
                }
                reference = plan;
            }
        }
        Ok(best.1)
    }
}

impl AbrPolicy for QuboFullHorizonPolicy {
    fn name(&self) -> String {
        "qubo-full".into()
    }

    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error> {
        if self.plan.is_none() {
            let started = Instant::now();
            let plan = self.solve(ctx)?;
            self.solve_time += started.elapsed();
            // plan[0] is the segment being chosen now
            let mut full = vec![0; ctx.state.next_segment];
            full.extend(plan);
            self.plan = Some(full);
        }
        let plan = self.plan.as_ref().expect("plan was just computed");
        Ok(plan.get(ctx.state.next_segment).copied().unwrap_or(0))
    }

    fn solve_time(&self) -> Option<Duration> {
        Some(self.solve_time)
    }
}
