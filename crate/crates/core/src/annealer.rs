//! QUBO minimization: an exhaustive oracle and a Digital-Annealer-style
//! simulated annealer.
//!
//! The annealer evaluates every single-bit flip from incrementally
//! maintained local fields, accepts by the Metropolis rule against a
//! geometric temperature schedule, and raises a dynamic offset on the
//! acceptance threshold whenever a whole sweep accepts nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{solve_chain, ChainStructure};
use crate::qubo::{BitAssignment, CompensatedSum, QuboError, QuboModel};

/// Largest model [`solve_exhaustive`] will enumerate.
pub const MAX_EXHAUSTIVE_VARS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("exhaustive search supports at most {max} variables, model has {got}")]
    TooManyVariables { max: usize, got: usize },
    #[error("model has no variables")]
    EmptyModel,
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("model is not chain structured: {0}")]
    NotChainStructured(String),
    #[error("chain solver needs the model's group structure")]
    MissingStructure,
    #[error(transparent)]
    Model(#[from] QuboError),
}

/// Annealer settings. `None` temperatures and offset step are derived from
/// the model at solve time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaParams {
    pub sweeps: usize,
    pub restarts: usize,
    pub t_initial: Option<f64>,
    pub t_final: Option<f64>,
    pub dynamic_offset_step: Option<f64>,
    pub seed: u64,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            sweeps: 2000,
            restarts: 8,
            t_initial: None,
            t_final: None,
            dynamic_offset_step: None,
            seed: 0,
        }
    }
}

impl SaParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidParams(m.to_string()));
        if self.sweeps == 0 {
            return bad("sweeps must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        for t in [self.t_initial, self.t_final].into_iter().flatten() {
            if !(t.is_finite() && t > 0.0) {
                return bad("temperatures must be positive and finite");
            }
        }
        if let (Some(ti), Some(tf)) = (self.t_initial, self.t_final) {
            if tf > ti {
                return bad("t_final must not exceed t_initial");
            }
        }
        if let Some(step) = self.dynamic_offset_step {
            if !(step.is_finite() && step >= 0.0) {
                return bad("dynamic_offset_step must be non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub assignment: BitAssignment,
    pub energy: f64,
    pub restarts_used: usize,
    pub sweeps_used: usize,
    pub seed: u64,
}

/// Which minimizer to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Solver {
    Exhaustive,
    Annealing(SaParams),
    /// Exact dynamic program over a chain of variable groups.
    Chain,
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Annealing(SaParams::default())
    }
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Exhaustive => "exhaustive",
            Solver::Annealing(_) => "sa",
            Solver::Chain => "chain",
        }
    }

    pub fn solve(&self, model: &QuboModel) -> Result<SolveResult, SolveError> {
        match self {
            Solver::Exhaustive => solve_exhaustive(model),
            Solver::Annealing(params) => solve_sa(model, params),
            Solver::Chain => Err(SolveError::MissingStructure),
        }
    }

    /// Like [`Solver::solve`], handing the chain solver the group structure.
    pub fn solve_structured(
        &self,
        model: &QuboModel,
        structure: &ChainStructure,
    ) -> Result<SolveResult, SolveError> {
        match self {
            Solver::Chain => solve_chain(model, structure),
            other => other.solve(model),
        }
    }

    /// Same solver with the annealing seed replaced.
    pub fn reseeded(&self, seed: u64) -> Solver {
        match self {
            Solver::Annealing(p) => Solver::Annealing(p.clone().with_seed(seed)),
            other => other.clone(),
        }
    }
}

/// Symmetric adjacency view of a model used by the incremental solvers.
pub(crate) struct Compiled {
    pub(crate) linear: Vec<f64>,
    pub(crate) neighbors: Vec<Vec<(usize, f64)>>,
}

impl Compiled {
    pub(crate) fn new(model: &QuboModel) -> Self {
        let n = model.num_vars();
        let mut linear = vec![0.0; n];
        let mut neighbors = vec![Vec::new(); n];
        for ((i, j), q) in model.terms() {
            if i == j {
                linear[i] += q;
            } else if q != 0.0 {
                neighbors[i].push((j, q));
                neighbors[j].push((i, q));
            }
        }
        Compiled { linear, neighbors }
    }

    /// `f_i = q_ii + sum_{j != i} q_ij x_j`; flipping bit i changes the
    /// energy by `(1 - 2 x_i) f_i`.
    pub(crate) fn local_fields(&self, bits: &[u8]) -> Vec<f64> {
        (0..self.linear.len())
            .map(|i| {
                let mut f = self.linear[i];
                for &(j, q) in &self.neighbors[i] {
                    if bits[j] == 1 {
                        f += q;
                    }
                }
                f
            })
            .collect()
    }
}

/// Global minimizer by enumeration in Gray-code order. Ties go to the
/// lexicographically smallest bit sequence `(x_0, x_1, ...)`.
pub fn solve_exhaustive(model: &QuboModel) -> Result<SolveResult, SolveError> {
    let n = model.num_vars();
    if n > MAX_EXHAUSTIVE_VARS {
        return Err(SolveError::TooManyVariables {
            max: MAX_EXHAUSTIVE_VARS,
            got: n,
        });
    }
    let terms: Vec<(usize, usize, f64)> = model.terms().map(|((i, j), q)| (i, j, q)).collect();
    let exact = |mask: u64| {
        let mut sum = CompensatedSum::default();
        sum.add(model.offset());
        for &(i, j, q) in &terms {
            if (mask >> i) & 1 == 1 && (mask >> j) & 1 == 1 {
                sum.add(q);
            }
        }
        sum.value()
    };
    let lex_key = |mask: u64| {
        (0..n).fold(0u64, |key, i| (key << 1) | ((mask >> i) & 1))
    };
    let scale = 1.0 + model.offset().abs() + terms.iter().map(|t| t.2.abs()).sum::<f64>();
    let tolerance = 1e-9 * scale;

    let mut dense = vec![0.0; n * n];
    let mut linear = vec![0.0; n];
    for &(i, j, q) in &terms {
        if i == j {
            linear[i] += q;
        } else {
            dense[i * n + j] += q;
            dense[j * n + i] += q;
        }
    }
    let mut fields = linear;
    let mut mask = 0u64;
    let mut current = model.offset();
    let mut best_mask = 0u64;
    let mut best = exact(0);
    let mut best_key = 0u64;
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        let was_set = (mask >> i) & 1 == 1;
        let sign = if was_set { -1.0 } else { 1.0 };
        current += sign * fields[i];
        mask ^= 1 << i;
        let row = &dense[i * n..(i + 1) * n];
        for (f, &q) in fields.iter_mut().zip(row) {
            *f += sign * q;
        }
        if current <= best + tolerance {
            let e = exact(mask);
            let key = lex_key(mask);
            if e < best || (e == best && key < best_key) {
                best = e;
                best_key = key;
                best_mask = mask;
            }
        }
    }
    let assignment = BitAssignment::from_mask(best_mask, n);
    let energy = model.energy(&assignment)?;
    Ok(SolveResult {
        assignment,
        energy,
        restarts_used: 0,
        sweeps_used: 0,
        seed: 0,
    })
}

/// One sweep's worth of annealer state, reported to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub restart: usize,
    pub sweep: usize,
    pub temperature: f64,
    pub offset: f64,
    pub current_energy: f64,
    pub best_energy: f64,
    pub accepted: usize,
}

/// Temperatures and offset step after resolving the automatic defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub t_initial: f64,
    pub t_final: f64,
    pub offset_step: f64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen::<bool>() as u8).collect()
}

/// Resolves `None` entries of `params`: the initial temperature is the 90th
/// percentile of single-flip |dE| at a random start, the final temperature
/// is 1e-3 of that, and the offset step is 0.1 x mean |coefficient|.
pub fn resolve_schedule(model: &QuboModel, params: &SaParams) -> Result<Schedule, SolveError> {
    params.validate()?;
    let compiled = Compiled::new(model);
    let t_initial = match params.t_initial {
        Some(t) => t,
        None => {
            let mut rng = rng_for(params.seed, 0);
            let bits = random_bits(&mut rng, model.num_vars());
            let fields = compiled.local_fields(&bits);
            let mut deltas: Vec<f64> = fields.iter().map(|f| f.abs()).collect();
            deltas.sort_by(f64::total_cmp);
            let rank = ((0.9 * deltas.len() as f64).ceil() as usize).clamp(1, deltas.len().max(1));
            let p90 = deltas.get(rank - 1).copied().unwrap_or(0.0);
            let max = deltas.last().copied().unwrap_or(0.0);
            if p90 > 0.0 {
                p90
            } else if max > 0.0 {
                max
            } else {
                1.0
            }
        }
    };
    let t_final = match params.t_final {
        Some(t) => t.min(t_initial),
        None => 1e-3 * t_initial,
    };
    let offset_step = params
        .dynamic_offset_step
        .unwrap_or_else(|| 0.1 * model.mean_abs_coefficient());
    Ok(Schedule {
        t_initial,
        t_final,
        offset_step,
    })
}

/// Best assignment across all restarts. Deterministic in `(model, params)`.
pub fn solve_sa(model: &QuboModel, params: &SaParams) -> Result<SolveResult, SolveError> {
    solve_sa_observed(model, params, |_| {})
}

/// [`solve_sa`] with a callback invoked after every sweep.
pub fn solve_sa_observed(
    model: &QuboModel,
    params: &SaParams,
    mut observe: impl FnMut(&SweepRecord),
) -> Result<SolveResult, SolveError> {
    let n = model.num_vars();
    if n == 0 {
        return Err(SolveError::EmptyModel);
    }
    let schedule = resolve_schedule(model, params)?;
    let compiled = Compiled::new(model);
    let ratio = schedule.t_final / schedule.t_initial;

    let mut best: Option<(f64, BitAssignment)> = None;
    for restart in 0..params.restarts {
        let mut rng = rng_for(params.seed, restart as u64 + 1);
        let mut bits = random_bits(&mut rng, n);
        let mut fields = compiled.local_fields(&bits);
        let mut current = model.energy(&BitAssignment::from_bits(bits.clone())?)?;
        let mut restart_best = current;
        let mut restart_best_bits = bits.clone();
        let mut offset = 0.0;

        for sweep in 0..params.sweeps {
            let temperature = if params.sweeps == 1 {
                schedule.t_initial
            } else {
                schedule.t_initial * ratio.powf(sweep as f64 / (params.sweeps - 1) as f64)
            };
            let mut accepted = 0;
            for i in 0..n {
                let delta = if bits[i] == 1 { -fields[i] } else { fields[i] };
                let threshold = delta - offset;
                let accept =
                    threshold <= 0.0 || rng.gen::<f64>() < (-threshold / temperature).exp();
                if !accept {
                    continue;
                }
                let sign = if bits[i] == 1 { -1.0 } else { 1.0 };
                bits[i] ^= 1;
                current += delta;
                for &(j, q) in &compiled.neighbors[i] {
                    fields[j] += sign * q;
                }
                accepted += 1;
                offset = 0.0;
                if current < restart_best {
                    restart_best = current;
                    restart_best_bits.copy_from_slice(&bits);
                }
            }
            if accepted == 0 {
                offset += schedule.offset_step;
            }
            observe(&SweepRecord {
                restart,
                sweep,
                temperature,
                offset,
                current_energy: current,
                best_energy: restart_best,
                accepted,
            });
        }

        let assignment = BitAssignment::from_bits(restart_best_bits)?;
        let energy = model.energy(&assignment)?;
        if best.as_ref().is_none_or(|(e, _)| energy < *e) {
            best = Some((energy, assignment));
        }
    }
    let (energy, assignment) = best.expect("restarts >= 1");
    Ok(SolveResult {
        assignment,
        energy,
        restarts_used: params.restarts,
        sweeps_used: params.restarts * params.sweeps,
        seed: params.seed,
    })
}
