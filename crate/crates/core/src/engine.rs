//! Parallel-in-time driver.
//!
//! The driver advances an initial value problem over `N` equal time
//! intervals with a predictor-corrector scheme: a cheap sequential coarse
//! solver supplies predictions, interval-parallel fine solves supply accurate
//! data, and a correction model closes the gap between the two. Per
//! iteration, the state entering interval `i` is updated as
//!
//! ```text
//! U_i^k = G(U_{i-1}^k) + f̂(U_{i-1}^k)
//! ```
//!
//! where `G` is one coarse propagation and `f̂` estimates the fine-minus-
//! coarse discrepancy, either by lagging the directly measured value from the
//! previous iteration or by querying a regression model trained on all
//! discrepancies observed so far. A leading block of intervals whose
//! successive-iteration change drops below tolerance is locked and never
//! recomputed, shrinking the remaining work each iteration.
//!
//! Runs are bitwise deterministic for a fixed seed: fine solves write into
//! per-interval slots regardless of thread schedule, and all randomness
//! derives from tagged streams.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::{
    lagged_correct, nngp_correct, randnet_correct, CorrectionDataset, CorrectionDiagnostics,
    DatasetEntry, LaggedCorrectionStore, NnGpModel, PredictionContext, RandNetModel,
};
use crate::integrators::{integrate_interval, IntegrationError, SolverSpec, BLOWUP_LIMIT};
use crate::numerics::infinity_norm;
use crate::systems::{RescaleMap, SystemSpec, RESCALE_MARGIN};

/// Default convergence tolerance on the rescaled successive-iteration change.
pub const DEFAULT_EPSILON: f64 = 5e-7;
/// Default wall-clock budget (48 hours), matching typical cluster limits.
pub const DEFAULT_BUDGET_SECONDS: f64 = 48.0 * 3600.0;
/// Default neighbor count for the GP correction.
pub const DEFAULT_NNGP_NEIGHBORS: usize = 20;
/// Default number of hyperparameter-search restarts for the GP correction.
pub const DEFAULT_NNGP_RESTARTS: usize = 10;
/// Default neighbor count for the random-feature correction.
pub const DEFAULT_RANDNET_NEIGHBORS: usize = 4;
/// Default hidden width for the random-feature correction.
pub const DEFAULT_RANDNET_HIDDEN: usize = 100;

fn default_nngp_neighbors() -> usize {
    DEFAULT_NNGP_NEIGHBORS
}
fn default_nngp_restarts() -> usize {
    DEFAULT_NNGP_RESTARTS
}
fn default_randnet_neighbors() -> usize {
    DEFAULT_RANDNET_NEIGHBORS
}
fn default_randnet_hidden() -> usize {
    DEFAULT_RANDNET_HIDDEN
}

/// Which correction model closes the coarse-fine gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum CorrectionConfig {
    /// Lagged correction: reuse the discrepancy measured at the same interval
    /// in the previous iteration.
    Parareal,
    /// Nearest-neighbor GP regression on observed discrepancies.
    Nngp {
        #[serde(default = "default_nngp_neighbors")]
        m: usize,
        #[serde(default = "default_nngp_restarts")]
        n_start: usize,
    },
    /// Random-feature network readout fitted on nearest neighbors.
    Randnet {
        #[serde(default = "default_randnet_neighbors")]
        m: usize,
        #[serde(default = "default_randnet_hidden")]
        hidden: usize,
    },
}

impl CorrectionConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CorrectionConfig::Parareal => "parareal",
            CorrectionConfig::Nngp { .. } => "nngp",
            CorrectionConfig::Randnet { .. } => "randnet",
        }
    }

    pub fn default_nngp() -> Self {
        CorrectionConfig::Nngp {
            m: DEFAULT_NNGP_NEIGHBORS,
            n_start: DEFAULT_NNGP_RESTARTS,
        }
    }

    pub fn default_randnet() -> Self {
        CorrectionConfig::Randnet {
            m: DEFAULT_RANDNET_NEIGHBORS,
            hidden: DEFAULT_RANDNET_HIDDEN,
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            CorrectionConfig::Parareal => Ok(()),
            CorrectionConfig::Nngp { m, n_start } => {
                if m == 0 {
                    return Err("nngp neighbor count m must be >= 1".into());
                }
                if n_start == 0 {
                    return Err("nngp restart count n_start must be >= 1".into());
                }
                Ok(())
            }
            CorrectionConfig::Randnet { m, hidden } => {
                if m == 0 {
                    return Err("randnet neighbor count m must be >= 1".into());
                }
                if hidden == 0 {
                    return Err("randnet hidden width must be >= 1".into());
                }
                Ok(())
            }
        }
    }
}

/// Full description of one run: the problem, the time decomposition, the
/// solver pair, the correction model, and execution controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PintConfig {
    pub system: SystemSpec,
    pub n_intervals: usize,
    pub t0: f64,
    pub t_end: f64,
    pub coarse: SolverSpec,
    pub fine: SolverSpec,
    /// Convergence tolerance on the rescaled per-interval update norm.
    pub epsilon: f64,
    pub correction: CorrectionConfig,
    pub seed: u64,
    /// Worker threads for interval-parallel fine solves (and concurrent
    /// per-dimension GP fits). 0 selects the runtime default.
    pub threads: usize,
    /// Wall-clock budget checked at iteration boundaries.
    pub budget_seconds: f64,
}

impl PintConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.system.validate()?;
        if self.n_intervals < 2 {
            return Err("n_intervals must be >= 2".into());
        }
        if !self.t0.is_finite() || !self.t_end.is_finite() || self.t_end <= self.t0 {
            return Err("time span requires finite t0 < t_end".into());
        }
        if self.coarse.steps == 0 || self.fine.steps == 0 {
            return Err("solver step counts must be >= 1".into());
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err("epsilon must be positive".into());
        }
        if !self.budget_seconds.is_finite() || self.budget_seconds <= 0.0 {
            return Err("budget_seconds must be positive".into());
        }
        self.correction.validate()
    }

    /// The `N + 1` interval boundary times, uniformly spaced.
    pub fn interval_times(&self) -> Vec<f64> {
        let n = self.n_intervals;
        let dt = (self.t_end - self.t0) / n as f64;
        (0..=n).map(|i| self.t0 + i as f64 * dt).collect()
    }
}

/// Terminal condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    /// The unconverged suffix emptied, or the iteration ceiling `k = N` was
    /// reached (at which point the scheme reproduces the sequential fine
    /// solution by construction).
    Converged,
    /// The wall-clock budget expired at an iteration boundary.
    BudgetExhausted,
    /// A solver blow-up or correction failure stopped the run early.
    Aborted { message: String },
}

/// Per-interval measurements within one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTrace {
    pub interval: usize,
    /// Rescaled infinity norm of this interval's state update.
    pub update_inf_norm: f64,
    /// Whether the interval joined the converged prefix this iteration.
    pub converged: bool,
    pub fine_seconds: f64,
    pub coarse_seconds: f64,
    pub model_seconds: f64,
}

/// One iteration of the outer predictor-corrector loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub k: usize,
    /// Converged-prefix length when the iteration started.
    pub prefix_before: usize,
    /// Converged-prefix length after the convergence scan.
    pub prefix_after: usize,
    /// Training-set size after this iteration's discrepancies were recorded.
    pub dataset_size: usize,
    /// Longest fine solve in this iteration (the parallel stage's span).
    pub max_fine_seconds: f64,
    /// Total correction-model time in this iteration.
    pub model_seconds: f64,
    pub intervals: Vec<IntervalTrace>,
}

/// Record of one corrector update, kept so the update rule can be audited
/// after the fact: `state_after = coarse_state + correction` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateAudit {
    pub iteration: usize,
    pub interval: usize,
    pub coarse_state: Vec<f64>,
    pub correction: Vec<f64>,
    pub state_after: Vec<f64>,
}

/// Aggregated time accounting, both measured and modeled.
///
/// The modeled algorithm time charges, per iteration, the longest fine solve
/// (the parallel span), one coarse propagation per unconverged interval, and
/// the correction-model time, on top of the initial coarse sweep:
///
/// ```text
/// T_alg = N·T_G + Σ_k [ max_i T_F(k,i) + (N - L_k)·T_G + T_model(k) ]
/// ```
///
/// The modeled speedup compares against the serial fine baseline `N·T_F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Number of coarse propagations performed (initial sweep + updates).
    pub coarse_applications: usize,
    /// Number of fine propagations performed.
    pub fine_applications: usize,
    /// Mean seconds per coarse propagation.
    pub t_coarse_seconds: f64,
    /// Mean seconds per fine propagation.
    pub t_fine_mean_seconds: f64,
    /// Longest single fine propagation.
    pub t_fine_max_seconds: f64,
    /// Total correction-model seconds across the run.
    pub t_model_seconds: f64,
    /// Measured wall time of the whole run.
    pub t_alg_measured_seconds: f64,
    /// Modeled parallel algorithm time (see type docs).
    pub t_alg_modeled_seconds: f64,
    /// Modeled speedup `N·T_F / T_alg`.
    pub s_alg_modeled: f64,
}

/// Everything a run produces: terminal status, states, per-iteration trace,
/// update audits, degraded-mode counters, and cost accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PintConfig,
    pub status: RunStatus,
    /// Completed outer iterations (`K`).
    pub iterations: usize,
    /// Final converged-prefix length.
    pub converged_prefix: usize,
    /// States at the `N + 1` interval boundaries after the last completed
    /// iteration.
    pub final_states: Vec<Vec<f64>>,
    pub rescale_center: Vec<f64>,
    pub rescale_half_range: Vec<f64>,
    pub trace: Vec<IterationTrace>,
    pub audits: Vec<UpdateAudit>,
    /// Correction training-set size at the end of the run.
    pub dataset_size: usize,
    pub diagnostics: CorrectionDiagnostics,
    pub cost: CostReport,
    /// Mean per-interval infinity-norm error against the sequential fine
    /// reference; filled by comparison drivers, not by the run itself.
    pub accuracy_vs_fine: Option<f64>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("fine solver failed on interval {interval}: {source}")]
    FineSolve {
        interval: usize,
        #[source]
        source: IntegrationError,
    },
}

/// Sequential fine-solver reference: the baseline every parallel run is
/// compared against, both for accuracy and for speedup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineReference {
    /// States at the `N + 1` interval boundaries.
    pub states: Vec<Vec<f64>>,
    pub per_interval_seconds: Vec<f64>,
    pub total_seconds: f64,
}

fn timed_solve(
    system: &SystemSpec,
    spec: SolverSpec,
    t0: f64,
    t1: f64,
    state: &[f64],
) -> Result<(Vec<f64>, f64), IntegrationError> {
    let start = Instant::now();
    let rhs = |t: f64, u: &[f64], du: &mut [f64]| system.rhs(t, u, du);
    let result = integrate_interval(spec, &rhs, t0, t1, state)?;
    Ok((result, start.elapsed().as_secs_f64()))
}

/// Runs the fine solver sequentially over all intervals.
pub fn sequential_fine(config: &PintConfig) -> Result<FineReference, EngineError> {
    config.validate().map_err(EngineError::InvalidConfig)?;
    let times = config.interval_times();
    let start = Instant::now();
    let mut states = vec![config.system.initial_state(config.seed)];
    let mut per_interval = Vec::with_capacity(config.n_intervals);
    for i in 1..=config.n_intervals {
        let (next, secs) = timed_solve(
            &config.system,
            config.fine,
            times[i - 1],
            times[i],
            &states[i - 1],
        )
        .map_err(|source| EngineError::FineSolve {
            interval: i,
            source,
        })?;
        states.push(next);
        per_interval.push(secs);
    }
    Ok(FineReference {
        states,
        per_interval_seconds: per_interval,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Mean per-interval infinity-norm difference between two boundary-state
/// sequences, skipping the shared initial state.
pub fn compute_accuracy(final_states: &[Vec<f64>], reference_states: &[Vec<f64>]) -> f64 {
    assert_eq!(final_states.len(), reference_states.len());
    assert!(final_states.len() >= 2);
    let n = final_states.len() - 1;
    let total: f64 = (1..=n)
        .map(|i| {
            let diff: Vec<f64> = final_states[i]
                .iter()
                .zip(&reference_states[i])
                .map(|(a, b)| a - b)
                .collect();
            infinity_norm(&diff)
        })
        .sum();
    total / n as f64
}

enum ModelState {
    Lagged,
    Nngp(NnGpModel),
    Randnet(RandNetModel),
}

struct AbortSignal {
    message: String,
}

/// Executes one parallel-in-time run. Configuration problems surface as
/// errors; runtime failures (solver blow-up, degenerate corrections) end the
/// run with an [`RunStatus::Aborted`] report carrying the partial trace.
pub fn run_pint(config: &PintConfig) -> Result<RunReport, EngineError> {
    config.validate().map_err(EngineError::InvalidConfig)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| EngineError::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| run_pint_inner(config)))
}

fn run_pint_inner(config: &PintConfig) -> RunReport {
    let n = config.n_intervals;
    let d = config.system.dim();
    let times = config.interval_times();
    let start = Instant::now();

    let mut coarse_seconds_total = 0.0;
    let mut coarse_applications = 0usize;
    let mut fine_seconds_all: Vec<f64> = Vec::new();
    let mut model_seconds_total = 0.0;

    let mut trace: Vec<IterationTrace> = Vec::new();
    let mut audits: Vec<UpdateAudit> = Vec::new();
    let mut diagnostics = CorrectionDiagnostics::default();

    // Initial coarse sweep: provides the zeroth iterate, the trajectory the
    // rescaling map is fitted on, and the first iteration's coarse cache.
    let mut u_prev: Vec<Vec<f64>> = vec![config.system.initial_state(config.seed)];
    let mut init_failure: Option<AbortSignal> = None;
    for i in 1..=n {
        match timed_solve(
            &config.system,
            config.coarse,
            times[i - 1],
            times[i],
            &u_prev[i - 1],
        ) {
            Ok((next, secs)) => {
                coarse_seconds_total += secs;
                coarse_applications += 1;
                u_prev.push(next);
            }
            Err(err) => {
                init_failure = Some(AbortSignal {
                    message: format!(
                        "coarse solver failed on interval {i} during the initial sweep: {err}"
                    ),
                });
                break;
            }
        }
    }
    if let Some(signal) = init_failure {
        let rescale = RescaleMap::identity(d);
        return assemble_report(
            config,
            RunStatus::Aborted {
                message: signal.message,
            },
            u_prev,
            0,
            &rescale,
            trace,
            audits,
            0,
            diagnostics,
            coarse_seconds_total,
            coarse_applications,
            &fine_seconds_all,
            model_seconds_total,
            start,
        );
    }

    let rescale = RescaleMap::fit(&u_prev, RESCALE_MARGIN);
    // Coarse results at each interval's current input; consumed when the next
    // iteration's fine stage measures discrepancies at the same inputs.
    let mut g_prev: Vec<Vec<f64>> = u_prev.clone();

    let mut lagged = LaggedCorrectionStore::new();
    let mut dataset = CorrectionDataset::new();
    let model = match config.correction {
        CorrectionConfig::Parareal => ModelState::Lagged,
        CorrectionConfig::Nngp { m, n_start } => {
            ModelState::Nngp(NnGpModel::new(m, n_start, config.seed))
        }
        CorrectionConfig::Randnet { m, hidden } => {
            ModelState::Randnet(RandNetModel::new(d, hidden, m, config.seed))
        }
    };
    let learned = !matches!(model, ModelState::Lagged);

    let mut prefix = 0usize;
    let mut status: Option<RunStatus> = None;
    let mut abort: Option<AbortSignal> = None;

    for k in 1..=n {
        let prefix_before = prefix;

        // Parallel fine stage over the unconverged suffix; inputs are the
        // previous iterate's states, results land in per-interval slots.
        let fine_results: Vec<Result<(Vec<f64>, f64), IntegrationError>> = (prefix + 1..=n)
            .into_par_iter()
            .map(|i| {
                timed_solve(
                    &config.system,
                    config.fine,
                    times[i - 1],
                    times[i],
                    &u_prev[i - 1],
                )
            })
            .collect();
        let mut fine_states: Vec<Option<Vec<f64>>> = vec![None; n + 1];
        let mut fine_seconds: Vec<f64> = vec![0.0; n + 1];
        for (offset, result) in fine_results.into_iter().enumerate() {
            let i = prefix + 1 + offset;
            match result {
                Ok((state, secs)) => {
                    fine_states[i] = Some(state);
                    fine_seconds[i] = secs;
                    fine_seconds_all.push(secs);
                }
                Err(err) => {
                    if abort.is_none() {
                        abort = Some(AbortSignal {
                            message: format!(
                                "fine solver failed on interval {i} in iteration {k}: {err}"
                            ),
                        });
                    }
                }
            }
        }
        if abort.is_some() {
            break;
        }

        // Record the discrepancies measured by this fine stage. The coarse
        // value at the matching input is already cached from the previous
        // sweep, so no extra coarse work is needed here.
        for i in prefix + 1..=n {
            let fine_state = fine_states[i].as_ref().expect("fine stage succeeded");
            let raw_disc: Vec<f64> = fine_state
                .iter()
                .zip(&g_prev[i])
                .map(|(f, g)| f - g)
                .collect();
            if learned {
                dataset.push(DatasetEntry {
                    iteration: k - 1,
                    interval: i,
                    input: rescale.rescale(&u_prev[i - 1]),
                    discrepancy: rescale.rescale_difference(&raw_disc),
                });
            }
            lagged.insert(i, raw_disc);
        }

        // Sequential corrector sweep over the unconverged interior, then the
        // final interval takes its fine value directly and only needs a fresh
        // coarse cache for the next iteration's discrepancy.
        let mut u_curr = u_prev.clone();
        let mut rows: Vec<IntervalTrace> = Vec::with_capacity(n - prefix);
        let mut model_seconds_iter = 0.0;
        for i in prefix + 1..n {
            let (g_state, g_secs) = match timed_solve(
                &config.system,
                config.coarse,
                times[i - 1],
                times[i],
                &u_curr[i - 1],
            ) {
                Ok(v) => v,
                Err(err) => {
                    abort = Some(AbortSignal {
                        message: format!(
                            "coarse solver failed on interval {i} in iteration {k}: {err}"
                        ),
                    });
                    break;
                }
            };
            coarse_seconds_total += g_secs;
            coarse_applications += 1;

            let model_start = Instant::now();
            let correction_raw = match &model {
                ModelState::Lagged => lagged_correct(&lagged, i).map(<[f64]>::to_vec),
                ModelState::Nngp(m) => {
                    let query = rescale.rescale(&u_curr[i - 1]);
                    nngp_correct(
                        m,
                        &dataset,
                        &query,
                        PredictionContext {
                            iteration: k,
                            interval: i,
                        },
                        &mut diagnostics,
                    )
                    .map(|pred| rescale.unrescale_difference(&pred))
                }
                ModelState::Randnet(m) => {
                    let query = rescale.rescale(&u_curr[i - 1]);
                    randnet_correct(m, &dataset, &query)
                        .map(|pred| rescale.unrescale_difference(&pred))
                }
            };
            let model_secs = model_start.elapsed().as_secs_f64();
            model_seconds_iter += model_secs;
            model_seconds_total += model_secs;

            let correction = match correction_raw {
                Ok(v) => v,
                Err(err) => {
                    abort = Some(AbortSignal {
                        message: format!(
                            "correction failed on interval {i} in iteration {k}: {err}"
                        ),
                    });
                    break;
                }
            };
            let state_after: Vec<f64> = g_state
                .iter()
                .zip(&correction)
                .map(|(g, c)| g + c)
                .collect();
            if state_after
                .iter()
                .any(|v| !v.is_finite() || v.abs() > BLOWUP_LIMIT)
            {
                abort = Some(AbortSignal {
                    message: format!(
                        "corrected state out of range on interval {i} in iteration {k}"
                    ),
                });
                break;
            }
            audits.push(UpdateAudit {
                iteration: k,
                interval: i,
                coarse_state: g_state.clone(),
                correction,
                state_after: state_after.clone(),
            });
            g_prev[i] = g_state;
            u_curr[i] = state_after;
            rows.push(IntervalTrace {
                interval: i,
                update_inf_norm: 0.0,
                converged: false,
                fine_seconds: fine_seconds[i],
                coarse_seconds: g_secs,
                model_seconds: model_secs,
            });
        }
        if abort.is_some() {
            break;
        }

        // Final interval: adopt the fine propagation result and refresh the
        // coarse cache at its (possibly updated) input.
        let (g_last, g_last_secs) = match timed_solve(
            &config.system,
            config.coarse,
            times[n - 1],
            times[n],
            &u_curr[n - 1],
        ) {
            Ok(v) => v,
            Err(err) => {
                abort = Some(AbortSignal {
                    message: format!(
                        "coarse solver failed on interval {n} in iteration {k}: {err}"
                    ),
                });
                break;
            }
        };
        coarse_seconds_total += g_last_secs;
        coarse_applications += 1;
        g_prev[n] = g_last;
        u_curr[n] = fine_states[n].take().expect("fine stage succeeded");
        rows.push(IntervalTrace {
            interval: n,
            update_inf_norm: 0.0,
            converged: false,
            fine_seconds: fine_seconds[n],
            coarse_seconds: g_last_secs,
            model_seconds: 0.0,
        });

        // Convergence scan: compute rescaled update norms for every evaluated
        // interval, then extend the locked prefix through the leading block
        // whose change stayed below tolerance. The final interval is tracked
        // but never joins the prefix (its value lags one iteration).
        for row in rows.iter_mut() {
            let i = row.interval;
            let diff: Vec<f64> = u_curr[i]
                .iter()
                .zip(&u_prev[i])
                .map(|(a, b)| a - b)
                .collect();
            row.update_inf_norm = infinity_norm(&rescale.rescale_difference(&diff));
        }
        for row in rows.iter_mut() {
            if row.interval >= n || row.interval != prefix + 1 {
                break;
            }
            if row.update_inf_norm < config.epsilon {
                row.converged = true;
                prefix += 1;
            } else {
                break;
            }
        }

        let max_fine_seconds = rows.iter().map(|r| r.fine_seconds).fold(0.0_f64, f64::max);
        trace.push(IterationTrace {
            k,
            prefix_before,
            prefix_after: prefix,
            dataset_size: dataset.len(),
            max_fine_seconds,
            model_seconds: model_seconds_iter,
            intervals: rows,
        });
        u_prev = u_curr;

        if prefix == n - 1 || k == n {
            status = Some(RunStatus::Converged);
            break;
        }
        if start.elapsed().as_secs_f64() > config.budget_seconds {
            status = Some(RunStatus::BudgetExhausted);
            break;
        }
    }

    let status = match (abort, status) {
        (Some(signal), _) => RunStatus::Aborted {
            message: signal.message,
        },
        (None, Some(s)) => s,
        // The loop ran out without tripping a terminal condition; the `k = N`
        // ceiling makes this unreachable, but classify it conservatively.
        (None, None) => RunStatus::BudgetExhausted,
    };
    assemble_report(
        config,
        status,
        u_prev,
        prefix,
        &rescale,
        trace,
        audits,
        dataset.len(),
        diagnostics,
        coarse_seconds_total,
        coarse_applications,
        &fine_seconds_all,
        model_seconds_total,
        start,
    )
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    config: &PintConfig,
    status: RunStatus,
    final_states: Vec<Vec<f64>>,
    converged_prefix: usize,
    rescale: &RescaleMap,
    trace: Vec<IterationTrace>,
    audits: Vec<UpdateAudit>,
    dataset_size: usize,
    diagnostics: CorrectionDiagnostics,
    coarse_seconds_total: f64,
    coarse_applications: usize,
    fine_seconds_all: &[f64],
    model_seconds_total: f64,
    start: Instant,
) -> RunReport {
    let t_coarse = if coarse_applications > 0 {
        coarse_seconds_total / coarse_applications as f64
    } else {
        0.0
    };
    let t_fine_mean = if fine_seconds_all.is_empty() {
        0.0
    } else {
        fine_seconds_all.iter().sum::<f64>() / fine_seconds_all.len() as f64
    };
    let t_fine_max = fine_seconds_all.iter().fold(0.0_f64, |a, &b| a.max(b));
    let iteration_costs: Vec<IterationCost> = trace
        .iter()
        .map(|row| IterationCost {
            max_fine_seconds: row.max_fine_seconds,
            entering_prefix: row.prefix_before,
            model_seconds: row.model_seconds,
        })
        .collect();
    let modeled = model_parallel_time(config.n_intervals, t_coarse, t_fine_mean, &iteration_costs);
    RunReport {
        config: config.clone(),
        status,
        iterations: trace.len(),
        converged_prefix,
        final_states,
        rescale_center: rescale.center().to_vec(),
        rescale_half_range: rescale.half_range().to_vec(),
        trace,
        audits,
        dataset_size,
        diagnostics,
        cost: CostReport {
            coarse_applications,
            fine_applications: fine_seconds_all.len(),
            t_coarse_seconds: t_coarse,
            t_fine_mean_seconds: t_fine_mean,
            t_fine_max_seconds: t_fine_max,
            t_model_seconds: model_seconds_total,
            t_alg_measured_seconds: start.elapsed().as_secs_f64(),
            t_alg_modeled_seconds: modeled.t_alg_seconds,
            s_alg_modeled: modeled.speedup,
        },
        accuracy_vs_fine: None,
    }
}

/// Per-iteration inputs to the parallel-time model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationCost {
    /// Span of the parallel fine stage (its longest member).
    pub max_fine_seconds: f64,
    /// Converged-prefix length when the iteration started.
    pub entering_prefix: usize,
    /// Correction-model seconds in the iteration.
    pub model_seconds: f64,
}

/// Modeled parallel algorithm time and the implied speedup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelTimeModel {
    pub t_alg_seconds: f64,
    /// `N·T_F / T_alg` with `T_F` the mean fine propagation time.
    pub speedup: f64,
}

/// Ideal parallel execution time: an initial coarse sweep over all intervals,
/// then per iteration the fine span, one coarse propagation per unconverged
/// interval, and the correction-model time.
pub fn model_parallel_time(
    n_intervals: usize,
    t_coarse_seconds: f64,
    t_fine_mean_seconds: f64,
    iterations: &[IterationCost],
) -> ParallelTimeModel {
    let n = n_intervals as f64;
    let mut t_alg = n * t_coarse_seconds;
    for cost in iterations {
        let unconverged = (n_intervals - cost.entering_prefix) as f64;
        t_alg += cost.max_fine_seconds + unconverged * t_coarse_seconds + cost.model_seconds;
    }
    ParallelTimeModel {
        t_alg_seconds: t_alg,
        speedup: speedup(n * t_fine_mean_seconds, t_alg),
    }
}

/// Speedup of a parallel algorithm time against the serial fine baseline.
/// Units cancel, so any consistent time unit works.
pub fn speedup(serial_fine_time: f64, t_alg: f64) -> f64 {
    serial_fine_time / t_alg
}

/// Inputs to the closed-form correction-model cost bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    pub n_intervals: usize,
    /// Iteration index `k` the bound is evaluated at.
    pub iteration: usize,
    pub nngp_neighbors: usize,
    pub nngp_restarts: usize,
    /// Regularization-grid width in the GP search (1 when the regularizer is
    /// part of the continuous search, as here).
    pub nngp_regularizers: usize,
    pub randnet_neighbors: usize,
    pub randnet_hidden: usize,
    /// Rank of the random-feature design; 0 selects the generic bound
    /// `min(neighbors, hidden)`.
    pub feature_rank: usize,
    /// Calibration constant mapping nnGP operation counts to seconds.
    pub c_nngp: f64,
    /// Calibration constant mapping random-feature operation counts to seconds.
    pub c_randnet: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        Self {
            n_intervals: 32,
            iteration: 10,
            nngp_neighbors: DEFAULT_NNGP_NEIGHBORS,
            nngp_restarts: DEFAULT_NNGP_RESTARTS,
            nngp_regularizers: 1,
            randnet_neighbors: DEFAULT_RANDNET_NEIGHBORS,
            randnet_hidden: DEFAULT_RANDNET_HIDDEN,
            feature_rank: 0,
            c_nngp: 1.0,
            c_randnet: 1.0,
        }
    }
}

/// One evaluation of the correction-cost bounds at a state dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelPoint {
    pub dimension: usize,
    pub t_nngp: f64,
    pub t_randnet: f64,
}

/// Closed-form per-iteration cost bounds of the two learned corrections as a
/// function of state dimension.
///
/// GP correction (per-dimension fits, nearest-neighbor training sets of size
/// `m`, dataset of `N·k` points):
///
/// ```text
/// T_nngp ∝ N·k · max(n_start·n_reg·d/N, 1) · (m³ + m² + d(m² + 2m) + m·N·k)
/// ```
///
/// Random-feature correction (hidden width `M`, feature rank `r`):
///
/// ```text
/// T_randnet ∝ k · (M·r² + M²·m + d(M² + 3·M·m) + m·N·k)
/// ```
///
/// The GP bound grows quadratically in `d` once `d` exceeds `N`; the
/// random-feature bound stays affine in `d`, which is why it scales to large
/// systems.
pub fn cost_model_curves(params: &CostModelParams, dimensions: &[usize]) -> Vec<CostModelPoint> {
    let n = params.n_intervals as f64;
    let k = params.iteration as f64;
    let nk = n * k;
    let m_gp = params.nngp_neighbors as f64;
    let m_rf = params.randnet_neighbors as f64;
    let width = params.randnet_hidden as f64;
    let rank = if params.feature_rank == 0 {
        params.randnet_neighbors.min(params.randnet_hidden) as f64
    } else {
        params.feature_rank as f64
    };
    let restarts = (params.nngp_restarts * params.nngp_regularizers) as f64;
    dimensions
        .iter()
        .map(|&dim| {
            let d = dim as f64;
            let fits = (restarts * d / n).max(1.0);
            let t_nngp = params.c_nngp
                * nk
                * fits
                * (m_gp.powi(3) + m_gp.powi(2) + d * (m_gp.powi(2) + 2.0 * m_gp) + m_gp * nk);
            let t_randnet = params.c_randnet
                * k
                * (width * rank.powi(2)
                    + width.powi(2) * m_rf
                    + d * (width.powi(2) + 3.0 * width * m_rf)
                    + m_rf * nk);
            CostModelPoint {
                dimension: dim,
                t_nngp,
                t_randnet,
            }
        })
        .collect()
}

/// Outcome of one cell of a robustness sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Iterations to convergence, when the run converged.
    pub iterations: Option<usize>,
    /// "converged", "budget_exhausted", or the abort message.
    pub outcome: String,
}

/// Reruns `base` with the random-feature correction across a grid of
/// neighbor counts and hidden widths, `seed_count` seeds each (offset from
/// the base seed). Used to check that iteration counts barely move across
/// hyperparameters.
pub fn robustness_sweep(
    base: &PintConfig,
    m_values: &[usize],
    hidden_values: &[usize],
    seed_count: u64,
) -> Result<Vec<SweepCell>, EngineError> {
    let mut cells = Vec::with_capacity(m_values.len() * hidden_values.len() * seed_count as usize);
    for &m in m_values {
        for &hidden in hidden_values {
            for offset in 0..seed_count {
                let mut config = base.clone();
                config.correction = CorrectionConfig::Randnet { m, hidden };
                config.seed = base.seed.wrapping_add(offset);
                let report = run_pint(&config)?;
                let (iterations, outcome) = match &report.status {
                    RunStatus::Converged => (Some(report.iterations), "converged".to_string()),
                    RunStatus::BudgetExhausted => (None, "budget_exhausted".to_string()),
                    RunStatus::Aborted { message } => (None, message.clone()),
                };
                cells.push(SweepCell {
                    m,
                    hidden,
                    seed: config.seed,
                    iterations,
                    outcome,
                });
            }
        }
    }
    Ok(cells)
}
