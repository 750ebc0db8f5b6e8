//! Three maximizing metaheuristics over a [`ParamSpace`]: canonical simulated
//! annealing with a geometric schedule, adaptive simulated annealing with a
//! rejection-driven schedule, and adaptive tabu simulated annealing.
//!
//! All runners share the same move structure: `max_iterations` iterations of
//! `moves_per_iteration` candidate moves each. SA holds one geometric
//! temperature per iteration, floored at `min_temperature`, and runs the full
//! budget. ASA and ATSA recompute the temperature from the consecutive
//! rejection counter before every acceptance decision, so the logged
//! temperature always equals `min_temperature + incline_coefficient * ln(1 + r)`.
//! ATSA additionally keeps a bounded FIFO of recently evaluated solution keys
//! and never re-evaluates a key still in the list.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param_space::{ParamSpace, Solution, SolutionKey};

/// Candidate generation attempts per ATSA move before the move is skipped.
const TABU_REGENERATION_ATTEMPTS: usize = 50;

#[derive(Debug, Error)]
pub enum AnnealError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("cooling rate must lie in (0, 1), got {0}")]
    InvalidCoolingRate(f64),
    #[error("incline coefficient must be positive, got {0}")]
    NonPositiveIncline(f64),
    #[error("{field} must be positive")]
    NonPositiveConfig { field: &'static str },
    #[error("runner for {expected} called with config.algorithm = {found}")]
    AlgorithmMismatch { expected: Algorithm, found: Algorithm },
    #[error("objective failed on solution {solution}: {message}")]
    ObjectiveFailed { solution: String, message: String },
}

/// Error raised by an [`Objective`] for a solution it cannot score.
#[derive(Debug, Error, Clone)]
#[error("{0}")]
pub struct ObjectiveError(pub String);

/// A score to maximize. Implementations must be deterministic within one run:
/// the same solution always yields the same score.
pub trait Objective {
    fn evaluate(&mut self, solution: &Solution) -> Result<f64, ObjectiveError>;
}

impl<F> Objective for F
where
    F: FnMut(&Solution) -> Result<f64, ObjectiveError>,
{
    fn evaluate(&mut self, solution: &Solution) -> Result<f64, ObjectiveError> {
        self(solution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sa,
    Asa,
    Atsa,
}

impl Algorithm {
    /// Uppercase label used in model names, e.g. `ATSA`.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Sa => "SA",
            Algorithm::Asa => "ASA",
            Algorithm::Atsa => "ATSA",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Algorithm::Sa => "sa",
            Algorithm::Asa => "asa",
            Algorithm::Atsa => "atsa",
        };
        f.write_str(name)
    }
}

/// Schedule constants for the three runners. Defaults follow the reference
/// parameter table: T0 = 1000, cooling 0.1, T_min = 2, incline 2, tabu 20,
/// 1000 iterations of 8 moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealerConfig {
    pub algorithm: Algorithm,
    pub initial_temperature: f64,
    pub cooling_rate: f64,
    pub min_temperature: f64,
    pub incline_coefficient: f64,
    pub tabu_length: usize,
    pub max_iterations: usize,
    pub moves_per_iteration: usize,
}

impl AnnealerConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            initial_temperature: 1000.0,
            cooling_rate: 0.1,
            min_temperature: 2.0,
            incline_coefficient: 2.0,
            tabu_length: 20,
            max_iterations: 1000,
            moves_per_iteration: 8,
        }
    }

    pub fn validate(&self) -> Result<(), AnnealError> {
        if !(self.initial_temperature > 0.0) {
            return Err(AnnealError::NonPositiveTemperature(self.initial_temperature));
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return Err(AnnealError::InvalidCoolingRate(self.cooling_rate));
        }
        if !(self.min_temperature > 0.0) {
            return Err(AnnealError::NonPositiveTemperature(self.min_temperature));
        }
        if !(self.incline_coefficient > 0.0) {
            return Err(AnnealError::NonPositiveIncline(self.incline_coefficient));
        }
        for (field, value) in [
            ("tabu_length", self.tabu_length),
            ("max_iterations", self.max_iterations),
            ("moves_per_iteration", self.moves_per_iteration),
        ] {
            if value == 0 {
                return Err(AnnealError::NonPositiveConfig { field });
            }
        }
        Ok(())
    }
}

impl Default for AnnealerConfig {
    fn default() -> Self {
        Self::for_algorithm(Algorithm::Sa)
    }
}

/// Metropolis criterion for maximization: `min(1, exp((f_new - f_cur) / T))`.
/// Equals 1 for improving or equal candidates.
pub fn acceptance_probability(
    f_new: f64,
    f_current: f64,
    temperature: f64,
) -> Result<f64, AnnealError> {
    if !(temperature > 0.0) {
        return Err(AnnealError::NonPositiveTemperature(temperature));
    }
    Ok(((f_new - f_current) / temperature).exp().min(1.0))
}

/// One geometric cooling step: `cooling_rate * temperature`.
pub fn geometric_cool(temperature: f64, cooling_rate: f64) -> Result<f64, AnnealError> {
    if !(temperature > 0.0) {
        return Err(AnnealError::NonPositiveTemperature(temperature));
    }
    if !(cooling_rate > 0.0 && cooling_rate < 1.0) {
        return Err(AnnealError::InvalidCoolingRate(cooling_rate));
    }
    Ok(cooling_rate * temperature)
}

/// Rejection-driven temperature: `min_temperature + incline_coefficient * ln(1 + rejections)`.
/// Exactly `min_temperature` at zero rejections and strictly increasing in them.
pub fn adaptive_temperature(
    rejections: u64,
    min_temperature: f64,
    incline_coefficient: f64,
) -> Result<f64, AnnealError> {
    if !(min_temperature > 0.0) {
        return Err(AnnealError::NonPositiveTemperature(min_temperature));
    }
    if !(incline_coefficient > 0.0) {
        return Err(AnnealError::NonPositiveIncline(incline_coefficient));
    }
    Ok(min_temperature + incline_coefficient * (1.0 + rejections as f64).ln())
}

/// Consecutive-rejection counter update: increments when the candidate is
/// worse, holds when equal, resets to zero when better.
pub fn update_rejection_counter(previous: u64, f_new: f64, f_current: f64) -> u64 {
    if f_new < f_current {
        previous + 1
    } else if f_new > f_current {
        0
    } else {
        previous
    }
}

/// Bounded FIFO of recently evaluated solution keys, newest first.
#[derive(Debug, Clone)]
pub struct TabuList {
    entries: VecDeque<SolutionKey>,
    capacity: usize,
}

impl TabuList {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn contains(&self, key: &SolutionKey) -> bool {
        self.entries.contains(key)
    }

    /// Inserts `key` at the top; evicts the oldest entry once the capacity is
    /// exceeded, so the length never exceeds it.
    pub fn push(&mut self, key: SolutionKey) {
        self.entries.push_front(key);
        if self.entries.len() > self.capacity {
            self.entries.pop_back();
        }
    }

    /// Removes and returns the oldest entry, if any.
    pub fn retire_oldest(&mut self) -> Option<SolutionKey> {
        self.entries.pop_back()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys newest-first.
    pub fn keys(&self) -> impl Iterator<Item = &SolutionKey> {
        self.entries.iter()
    }
}

/// One adjudicated move. Iteration 0 / move 0 records the initial solution.
/// A skipped ATSA move (every regeneration attempt was tabu) logs a NaN
/// candidate score with `tabu_hit` set and `accepted` cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub move_index: usize,
    pub temperature: f64,
    pub candidate_score: f64,
    pub current_score: f64,
    pub best_score: f64,
    pub accepted: bool,
    pub tabu_hit: bool,
    pub rejection_counter: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_solution: Solution,
    pub best_score: f64,
    pub trace: Vec<TraceRow>,
    /// True objective invocations, including the initial solution. Memoized
    /// revisits are not re-invoked.
    pub evaluations: usize,
}

pub const TRACE_HEADER: &str = "iteration,move,temperature,candidate_score,current_score,best_score,accepted,tabu_hit,rejection_counter";

/// Renders a trace as delimited text, one row per adjudicated move.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::with_capacity(trace.len() * 64 + TRACE_HEADER.len() + 1);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.iteration,
            row.move_index,
            row.temperature,
            row.candidate_score,
            row.current_score,
            row.best_score,
            row.accepted,
            row.tabu_hit,
            row.rejection_counter,
        ));
    }
    out
}

/// Canonical simulated annealing. Requires `config.algorithm = sa`.
pub fn run_sa<O: Objective, R: Rng + ?Sized>(
    objective: O,
    space: &ParamSpace,
    config: &AnnealerConfig,
    rng: &mut R,
) -> Result<OptimizationResult, AnnealError> {
    expect_algorithm(config, Algorithm::Sa)?;
    run_inner(objective, space, config, rng)
}

/// Adaptive simulated annealing. Requires `config.algorithm = asa`.
pub fn run_asa<O: Objective, R: Rng + ?Sized>(
    objective: O,
    space: &ParamSpace,
    config: &AnnealerConfig,
    rng: &mut R,
) -> Result<OptimizationResult, AnnealError> {
    expect_algorithm(config, Algorithm::Asa)?;
    run_inner(objective, space, config, rng)
}

/// Adaptive tabu simulated annealing. Requires `config.algorithm = atsa`.
pub fn run_atsa<O: Objective, R: Rng + ?Sized>(
    objective: O,
    space: &ParamSpace,
    config: &AnnealerConfig,
    rng: &mut R,
) -> Result<OptimizationResult, AnnealError> {
    expect_algorithm(config, Algorithm::Atsa)?;
    run_inner(objective, space, config, rng)
}

/// Dispatches to the runner matching `config.algorithm`.
pub fn run<O: Objective, R: Rng + ?Sized>(
    objective: O,
    space: &ParamSpace,
    config: &AnnealerConfig,
    rng: &mut R,
) -> Result<OptimizationResult, AnnealError> {
    run_inner(objective, space, config, rng)
}

fn expect_algorithm(config: &AnnealerConfig, expected: Algorithm) -> Result<(), AnnealError> {
    if config.algorithm != expected {
        return Err(AnnealError::AlgorithmMismatch {
            expected,
            found: config.algorithm,
        });
    }
    Ok(())
}

/// Score memo keyed by quantized solution identity; revisits within a run cost
/// nothing.
struct Memo {
    cache: HashMap<SolutionKey, f64>,
    calls: usize,
}

impl Memo {
    fn new() -> Self {
        Self {
            cache: HashMap::new(),
            calls: 0,
        }
    }

    fn score<O: Objective>(
        &mut self,
        objective: &mut O,
        key: SolutionKey,
        solution: &Solution,
    ) -> Result<f64, AnnealError> {
        if let Some(&score) = self.cache.get(&key) {
            return Ok(score);
        }
        self.calls += 1;
        let score = objective
            .evaluate(solution)
            .map_err(|e| AnnealError::ObjectiveFailed {
                solution: format!("{:?}", solution.values()),
                message: e.0,
            })?;
        self.cache.insert(key, score);
        Ok(score)
    }
}

fn run_inner<O: Objective, R: Rng + ?Sized>(
    mut objective: O,
    space: &ParamSpace,
    config: &AnnealerConfig,
    rng: &mut R,
) -> Result<OptimizationResult, AnnealError> {
    config.validate()?;
    let algorithm = config.algorithm;
    let mut memo = Memo::new();

    let mut current = space.sample_initial(rng);
    let mut f_current = memo.score(&mut objective, space.key(&current), &current)?;
    let mut best = current.clone();
    let mut f_best = f_current;
    let mut rejections: u64 = 0;

    let mut tabu = match algorithm {
        Algorithm::Atsa => {
            let mut list = TabuList::new(config.tabu_length);
            list.push(space.key(&current));
            Some(list)
        }
        _ => None,
    };

    let mut temperature = match algorithm {
        Algorithm::Sa => config.initial_temperature,
        _ => adaptive_temperature(0, config.min_temperature, config.incline_coefficient)?,
    };

    let mut trace =
        Vec::with_capacity(config.max_iterations * config.moves_per_iteration + 1);
    trace.push(TraceRow {
        iteration: 0,
        move_index: 0,
        temperature,
        candidate_score: f_current,
        current_score: f_current,
        best_score: f_best,
        accepted: true,
        tabu_hit: false,
        rejection_counter: 0,
    });

    for iteration in 1..=config.max_iterations {
        for move_index in 1..=config.moves_per_iteration {
            let mut tabu_hit = false;
            let candidate = match &tabu {
                None => Some(space.perturb(&current, rng)),
                Some(list) => {
                    let mut chosen = None;
                    for _ in 0..TABU_REGENERATION_ATTEMPTS {
                        let cand = space.perturb(&current, rng);
                        if list.contains(&space.key(&cand)) {
                            tabu_hit = true;
                            continue;
                        }
                        chosen = Some(cand);
                        break;
                    }
                    chosen
                }
            };

            let Some(candidate) = candidate else {
                // Every regeneration attempt was tabu. Skip the move and
                // retire the oldest entry so a space smaller than the tabu
                // window cannot wedge the search for the rest of the budget.
                if let Some(list) = &mut tabu {
                    list.retire_oldest();
                }
                trace.push(TraceRow {
                    iteration,
                    move_index,
                    temperature,
                    candidate_score: f64::NAN,
                    current_score: f_current,
                    best_score: f_best,
                    accepted: false,
                    tabu_hit: true,
                    rejection_counter: rejections,
                });
                continue;
            };

            let key = space.key(&candidate);
            let f_new = memo.score(&mut objective, key.clone(), &candidate)?;
            if let Some(list) = &mut tabu {
                list.push(key);
            }

            if algorithm != Algorithm::Sa {
                rejections = update_rejection_counter(rejections, f_new, f_current);
                temperature = adaptive_temperature(
                    rejections,
                    config.min_temperature,
                    config.incline_coefficient,
                )?;
            }

            let accepted = if f_new > f_current {
                true
            } else {
                rng.random::<f64>() < acceptance_probability(f_new, f_current, temperature)?
            };
            if accepted {
                current = candidate;
                f_current = f_new;
                if f_current > f_best {
                    best = current.clone();
                    f_best = f_current;
                }
            }

            trace.push(TraceRow {
                iteration,
                move_index,
                temperature,
                candidate_score: f_new,
                current_score: f_current,
                best_score: f_best,
                accepted,
                tabu_hit,
                rejection_counter: rejections,
            });
        }

        if algorithm == Algorithm::Sa {
            // Geometric schedule floored at the minimum temperature; the move
            // budget, not the floor, ends the run.
            temperature =
                geometric_cool(temperature, config.cooling_rate)?.max(config.min_temperature);
        }
    }

    Ok(OptimizationResult {
        best_solution: best,
        best_score: f_best,
        trace,
        evaluations: memo.calls,
    })
}
