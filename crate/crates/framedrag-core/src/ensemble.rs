//! Reproducible parallel Monte-Carlo trajectory runner and the named
//! experiments as first-class procedures.
//!
//! Reproducibility contract: a spec (including its base seed) determines the
//! result bit-exactly, independent of worker count or scheduling. Trajectories
//! draw from per-trajectory noise streams seeded by `seed ⊕ hash(index)` and
//! every floating-point reduction runs in a fixed order.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    make_cat, make_gaussian, make_soliton, soliton_constants, CatSpec, GaussianSpec,
};
use crate::error::{Result, SimError};
use crate::grid::{Grid, GridSpec};
use crate::master::{compare_ensemble_to_master, FrozenDragMaster, MasterConfig};
use crate::observables::{moments_of_with_tol, Moments};
use crate::sse::{
    record_signal, step_drag_compact_with_moments, step_drag_composed_with_moments, NoiseStream,
    Scheme, StepConfig, StepRecord, StepperKind,
};
use crate::state::{DensityMatrix, ModelParams, WaveFunction, DEFAULT_LEAK_TOL};
use crate::stats::{self, SlopeFit};

/// The named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Fitted `d E[⟨p²⟩]/dt` under the plain SSE (expected `2D`).
    EnergyRatePlain,
    /// Fitted `d E[⟨p²⟩]/dt` under the drag SSE (expected `2D(1−4R₀²)`).
    EnergyRateDrag,
    /// Per-step verification of the trajectory increments `d⟨x⟩`, `d⟨p⟩`
    /// against the realized noise (plain SSE).
    TrajectoryDiffusion,
    /// Deterministic classical trajectory under drag: `⟨p⟩` conserved,
    /// `⟨x⟩ = x₀ + p₀t/M`, converging at first order in `dt`.
    TrajectoryClassical,
    /// Relaxation of `σ²` and `R` to the soliton constants.
    SolitonConvergence,
    /// Constant-coefficient phase-space diffusion of the soliton under the
    /// plain SSE: `Var[⟨p⟩]` grows at `2D`, `Var[⟨x⟩]` at `ħ/M`.
    SolitonDiffusion,
    /// Born-rule collapse of a two-packet cat, plain or dragged.
    CatCollapse,
    /// Trace distance between the trajectory average and the master equation
    /// (plain), or the frozen-generator Lindblad iteration (drag).
    MasterCompare,
    /// Strong-order agreement of the composed and compact drag steppers.
    CompositionOrder,
}

/// Initial state of every trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Gaussian(GaussianSpec),
    Soliton { center: f64, momentum: f64 },
    Cat(CatSpec),
}

/// Full description of one ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub params: ModelParams,
    pub grid: GridSpec,
    pub init: InitialState,
    pub n_traj: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub drag: bool,
    pub scheme: Scheme,
    /// Record every k-th step into the time bins.
    pub record_every: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.n_points, self.grid.x_min, self.grid.x_max)?;
        ModelParams::new(
            self.params.mass,
            self.params.collapse_strength,
            self.params.hbar,
        )?;
        if self.n_traj < 1 {
            return Err(SimError::spec("n_traj", "need at least 1 trajectory"));
        }
        if !(self.horizon > 0.0) {
            return Err(SimError::spec("horizon", "need horizon > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(SimError::spec("dt", "need dt > 0"));
        }
        if self.record_every < 1 {
            return Err(SimError::spec("record_every", "need at least 1"));
        }
        match self.kind {
            ExperimentKind::CatCollapse => {
                if !matches!(self.init, InitialState::Cat(_)) {
                    return Err(SimError::spec(
                        "init",
                        "cat_collapse needs a cat initial state",
                    ));
                }
                if self.params.collapse_strength <= 0.0 {
                    return Err(SimError::spec("params.d", "cat collapse needs D > 0"));
                }
            }
            ExperimentKind::EnergyRatePlain
            | ExperimentKind::TrajectoryDiffusion
            | ExperimentKind::SolitonDiffusion => {
                if self.drag {
                    return Err(SimError::spec("drag", "this experiment runs the plain SSE"));
                }
            }
            ExperimentKind::EnergyRateDrag | ExperimentKind::TrajectoryClassical => {
                if !self.drag {
                    return Err(SimError::spec("drag", "this experiment runs the drag SSE"));
                }
            }
            ExperimentKind::MasterCompare => {
                if self.grid.n_points > 128 {
                    return Err(SimError::spec(
                        "grid.n_points",
                        "master comparison is capped at 128 points",
                    ));
                }
                let n_steps = n_steps_for(self.horizon, self.dt);
                if n_steps % self.record_every != 0 {
                    return Err(SimError::spec(
                        "record_every",
                        "must divide the step count for the master comparison bins",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Tuned defaults for each experiment kind (natural units).
    pub fn default_for(kind: ExperimentKind) -> ExperimentSpec {
        let params = ModelParams::natural(0.5).unwrap();
        let (s2_inf, _) = soliton_constants(&params).unwrap();
        let base = ExperimentSpec {
            kind,
            params,
            grid: GridSpec {
                n_points: 512,
                x_min: -16.0,
                x_max: 16.0,
            },
            init: InitialState::Soliton {
                center: 0.0,
                momentum: 0.0,
            },
            n_traj: 400,
            horizon: 1.0,
            dt: 5e-4,
            seed: 20260809,
            drag: false,
            scheme: Scheme::SplitStepEm,
            record_every: 100,
        };
        match kind {
            ExperimentKind::EnergyRatePlain => ExperimentSpec {
                init: InitialState::Gaussian(GaussianSpec {
                    center: 0.0,
                    momentum: 0.0,
                    sigma2: s2_inf,
                    chirp: 0.0,
                }),
                n_traj: 1000,
                horizon: 0.8,
                dt: 5e-4,
                record_every: 80,
                ..base
            },
            ExperimentKind::EnergyRateDrag => ExperimentSpec {
                // Real Gaussian at the soliton width: R grows from 0 to 1/2
                // over the transient; the slope is fitted on the converged
                // tail where it must vanish.
                init: InitialState::Gaussian(GaussianSpec {
                    center: 0.0,
                    momentum: 0.0,
                    sigma2: s2_inf,
                    chirp: 0.0,
                }),
                drag: true,
                n_traj: 400,
                horizon: 4.0,
                record_every: 100,
                ..base
            },
            ExperimentKind::TrajectoryDiffusion => ExperimentSpec {
                n_traj: 200,
                horizon: 0.02,
                dt: 1e-4,
                record_every: 1,
                ..base
            },
            ExperimentKind::TrajectoryClassical => ExperimentSpec {
                init: InitialState::Soliton {
                    center: 0.0,
                    momentum: 2.0,
                },
                drag: true,
                n_traj: 200,
                horizon: 1.5,
                dt: 2e-3,
                record_every: 25,
                ..base
            },
            ExperimentKind::SolitonConvergence => ExperimentSpec {
                init: InitialState::Gaussian(GaussianSpec {
                    center: 0.0,
                    momentum: 0.0,
                    sigma2: 3.0 * s2_inf,
                    chirp: 0.0,
                }),
                grid: GridSpec {
                    n_points: 512,
                    x_min: -12.0,
                    x_max: 12.0,
                },
                n_traj: 64,
                horizon: 7.0,
                dt: 5e-4,
                record_every: 200,
                ..base
            },
            ExperimentKind::SolitonDiffusion => ExperimentSpec {
                n_traj: 1000,
                horizon: 0.25,
                dt: 5e-4,
                record_every: 4,
                ..base
            },
            ExperimentKind::CatCollapse => ExperimentSpec {
                params: ModelParams::natural(0.17).unwrap(),
                grid: GridSpec {
                    n_points: 512,
                    x_min: -24.0,
                    x_max: 28.0,
                },
                init: InitialState::Cat(CatSpec {
                    amp1: Complex64::new(0.7f64.sqrt(), 0.0),
                    amp2: Complex64::new(0.3f64.sqrt(), 0.0),
                    branch1: GaussianSpec {
                        center: 0.0,
                        momentum: 0.0,
                        sigma2: 0.25,
                        chirp: 0.0,
                    },
                    branch2: GaussianSpec {
                        center: 10.0,
                        momentum: 0.0,
                        sigma2: 0.25,
                        chirp: 0.0,
                    },
                }),
                n_traj: 500,
                horizon: 0.6,
                dt: 5e-5,
                record_every: 40,
                ..base
            },
            ExperimentKind::MasterCompare => ExperimentSpec {
                grid: GridSpec {
                    n_points: 128,
                    x_min: -8.0,
                    x_max: 8.0,
                },
                init: InitialState::Gaussian(GaussianSpec {
                    center: 0.0,
                    momentum: 0.0,
                    sigma2: s2_inf,
                    chirp: 0.0,
                }),
                n_traj: 2000,
                horizon: 0.3,
                dt: 5e-4,
                record_every: 60,
                ..base
            },
            ExperimentKind::CompositionOrder => ExperimentSpec {
                init: InitialState::Gaussian(GaussianSpec {
                    center: 0.2,
                    momentum: 0.5,
                    sigma2: 0.8,
                    chirp: 0.6,
                }),
                drag: true,
                n_traj: 64,
                horizon: 2e-3, // base dt of the refinement ladder
                dt: 2e-3,
                record_every: 1,
                ..base
            },
        }
    }
}

/// Collapse classification of a cat trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseOutcome {
    Branch1,
    Branch2,
    Undecided,
}

/// Branch populations: probability mass on each side of the midpoint of the
/// (possibly frame-shifted) branch centers.
pub fn branch_populations(psi: &WaveFunction, center1: f64, center2: f64) -> (f64, f64) {
    let mid = 0.5 * (center1 + center2);
    let dx = psi.grid().dx();
    let mut low = 0.0;
    let mut high = 0.0;
    for (a, &x) in psi.amplitudes().iter().zip(psi.grid().positions()) {
        if x < mid {
            low += a.norm_sqr();
        } else {
            high += a.norm_sqr();
        }
    }
    let (low, high) = (low * dx, high * dx);
    if center1 <= center2 {
        (low, high)
    } else {
        (high, low)
    }
}

/// Decided when one branch holds more than `threshold` of the population.
pub fn classify_collapse(pop1: f64, pop2: f64, threshold: f64) -> CollapseOutcome {
    if pop1 > threshold {
        CollapseOutcome::Branch1
    } else if pop2 > threshold {
        CollapseOutcome::Branch2
    } else {
        CollapseOutcome::Undecided
    }
}

/// Population threshold for a decided collapse.
pub const COLLAPSE_THRESHOLD: f64 = 0.99;
/// Budget of failed trajectories before the whole experiment fails.
pub const FAILURE_BUDGET: f64 = 0.01;

/// One simulated trajectory (internal form; keeps the final state).
#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub trajectory: u64,
    pub records: Vec<StepRecord>,
    pub final_state: Option<WaveFunction>,
    /// Cumulative frame shift applied by the drag unitaries (composed stepper).
    pub drag_shift: f64,
    pub failed: Option<String>,
}

/// Serializable per-trajectory series.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySeries {
    pub trajectory: u64,
    pub failed: Option<String>,
    pub outcome: Option<CollapseOutcome>,
    pub decision_time: Option<f64>,
    pub drag_shift: f64,
    pub records: Vec<StepRecord>,
}

/// Per-bin ensemble mean and standard error of each moment.
#[derive(Debug, Clone, Serialize)]
pub struct BinStats {
    pub time: f64,
    pub mean: Moments,
    pub se: Moments,
}

/// Experiment-specific summary statistics.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExperimentSummary {
    EnergyRate {
        fit: SlopeFit,
        expected: f64,
        rel_err: f64,
        within_two_se: bool,
    },
    TrajectoryDiffusion {
        rms_x_residual: f64,
        rms_p_residual: f64,
        bound: f64,
        pass: bool,
    },
    SolitonDiffusion {
        var_p: SlopeFit,
        var_p_expected: f64,
        var_x: SlopeFit,
        var_x_expected: f64,
        within_two_se: bool,
    },
    TrajectoryClassical {
        dts: Vec<f64>,
        max_p_dev: Vec<f64>,
        max_x_dev: Vec<f64>,
        p_ratios: Vec<f64>,
        x_ratios: Vec<f64>,
    },
    SolitonConvergence {
        sigma2_tail: f64,
        sigma2_expected: f64,
        sigma2_rel_err: f64,
        r_tail: f64,
        r_expected: f64,
        r_abs_err: f64,
    },
    CatCollapse {
        branch1_count: usize,
        branch2_count: usize,
        undecided_count: usize,
        born_expected: f64,
        branch1_frequency: f64,
        band_3sigma: f64,
        in_band: bool,
        com_expected: f64,
        /// Drag runs: worst |⟨x⟩(T) − c.o.m.| over decided trajectories.
        max_com_dev: f64,
        /// Plain runs: worst distance of ⟨x⟩(T) from the nearer branch center.
        max_branch_dev: f64,
        horizon_used: f64,
        median_decision_time: f64,
        separation: f64,
    },
    MasterCompare {
        times: Vec<f64>,
        distances: Vec<f64>,
        band: f64,
        max_distance: f64,
        within_band: bool,
        bootstrap_sd: Vec<f64>,
    },
    DragNonClosure {
        times: Vec<f64>,
        distances: Vec<f64>,
        band: f64,
        exceeds_band: bool,
    },
    CompositionOrder {
        dts: Vec<f64>,
        mean_diffs: Vec<f64>,
        fitted_order: f64,
    },
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleResult {
    pub spec: ExperimentSpec,
    pub bins: Vec<BinStats>,
    pub trajectories: Vec<TrajectorySeries>,
    pub failed: usize,
    pub summary: ExperimentSummary,
}

fn build_initial(spec: &ExperimentSpec, grid: &std::sync::Arc<Grid>) -> Result<WaveFunction> {
    match &spec.init {
        InitialState::Gaussian(g) => make_gaussian(g, grid, spec.params.hbar),
        InitialState::Soliton { center, momentum } => {
            make_soliton(*center, *momentum, &spec.params, grid)
        }
        InitialState::Cat(c) => make_cat(c, grid, spec.params.hbar),
    }
}

fn step_config(spec: &ExperimentSpec) -> Result<StepConfig> {
    Ok(StepConfig::new(spec.dt)?.with_scheme(spec.scheme))
}

fn n_steps_for(horizon: f64, dt: f64) -> usize {
    ((horizon / dt).round() as usize).max(1)
}

/// Runs one trajectory over pre-drawn increments, recording every
/// `record_every`-th step plus the final one. `on_bin` observes
/// `(bin_index, time, state, cumulative_drag_shift)` at each record point.
/// Failures are captured in the returned run, not propagated.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory_with<F>(
    psi0: &WaveFunction,
    params: &ModelParams,
    cfg: &StepConfig,
    stepper: StepperKind,
    dws: &[f64],
    record_every: usize,
    trajectory: u64,
    mut on_bin: F,
) -> TrajectoryRun
where
    F: FnMut(usize, f64, &WaveFunction, f64),
{
    let dt = cfg.dt;
    let sqrt8d = (8.0 * params.collapse_strength).sqrt();
    let mut psi = psi0.clone();
    let mut records = Vec::with_capacity(dws.len() / record_every + 2);
    let mut drag_shift = 0.0;
    let mut last_drift = 0.0;
    let mut bin_index = 0usize;

    let mut fail = None;
    for (step, &dw) in dws.iter().enumerate() {
        let t = step as f64 * dt;
        let m = match moments_of_with_tol(&psi, params, cfg.leak_tol) {
            Ok(m) => m,
            Err(e) => {
                fail = Some(e.to_string());
                break;
            }
        };
        if step % record_every == 0 {
            let signal = if params.collapse_strength > 0.0 {
                record_signal(&m, dw, dt, params).ok()
            } else {
                None
            };
            records.push(StepRecord {
                time: t,
                moments: m,
                norm_drift: last_drift,
                signal,
            });
            on_bin(bin_index, t, &psi, drag_shift);
            bin_index += 1;
        }
        match stepper.step_with_moments(&psi, &m, params, cfg, dw) {
            Ok(out) => {
                if stepper == StepperKind::DragComposed {
                    drag_shift -= m.sigma2 / params.hbar * sqrt8d * dw;
                }
                psi = out.state;
                last_drift = out.norm_drift;
            }
            Err(e) => {
                fail = Some(e.to_string());
                break;
            }
        }
    }
    if fail.is_none() {
        let t = dws.len() as f64 * dt;
        match moments_of_with_tol(&psi, params, cfg.leak_tol) {
            Ok(m) => {
                records.push(StepRecord {
                    time: t,
                    moments: m,
                    norm_drift: last_drift,
                    signal: None,
                });
                on_bin(bin_index, t, &psi, drag_shift);
            }
            Err(e) => fail = Some(e.to_string()),
        }
    }
    TrajectoryRun {
        trajectory,
        records,
        final_state: Some(psi),
        drag_shift,
        failed: fail,
    }
}

fn draw_increments(seed: u64, trajectory: u64, n: usize, dt: f64) -> Vec<f64> {
    let mut ns = NoiseStream::new(seed, trajectory);
    (0..n).map(|_| ns.next_increment(dt)).collect()
}

fn run_ensemble(
    spec: &ExperimentSpec,
    psi0: &WaveFunction,
    stepper: StepperKind,
) -> Result<Vec<TrajectoryRun>> {
    let cfg = step_config(spec)?;
    let n_steps = n_steps_for(spec.horizon, spec.dt);
    let runs: Vec<TrajectoryRun> = (0..spec.n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let dws = draw_increments(spec.seed, i, n_steps, spec.dt);
            run_trajectory_with(
                psi0,
                &spec.params,
                &cfg,
                stepper,
                &dws,
                spec.record_every,
                i,
                |_, _, _, _| {},
            )
        })
        .collect();
    check_failure_budget(&runs)?;
    Ok(runs)
}

fn check_failure_budget(runs: &[TrajectoryRun]) -> Result<()> {
    let failed = runs.iter().filter(|r| r.failed.is_some()).count();
    let total = runs.len();
    if failed as f64 > FAILURE_BUDGET * total as f64 {
        let first = runs
            .iter()
            .find_map(|r| r.failed.clone())
            .unwrap_or_default();
        return Err(SimError::TooManyFailures {
            failed,
            total,
            budget_percent: FAILURE_BUDGET * 100.0,
            first,
        });
    }
    Ok(())
}

fn successful(runs: &[TrajectoryRun]) -> Vec<&TrajectoryRun> {
    runs.iter().filter(|r| r.failed.is_none()).collect()
}

fn series_of(runs: &[&TrajectoryRun], f: impl Fn(&Moments) -> f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let times: Vec<f64> = runs
        .first()
        .map(|r| r.records.iter().map(|rec| rec.time).collect())
        .unwrap_or_default();
    let per_traj = runs
        .iter()
        .map(|r| r.records.iter().map(|rec| f(&rec.moments)).collect())
        .collect();
    (times, per_traj)
}

fn collect_bins(runs: &[&TrajectoryRun]) -> Vec<BinStats> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n_bins = first.records.len();
    let times: Vec<f64> = first.records.iter().map(|r| r.time).collect();
    let field = |f: fn(&Moments) -> f64| -> (Vec<f64>, Vec<f64>) {
        let per: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| r.records.iter().map(|rec| f(&rec.moments)).collect())
            .collect();
        stats::bin_mean_se(&per, n_bins)
    };
    let (mx, sx) = field(|m| m.mean_x);
    let (mp, sp) = field(|m| m.mean_p);
    let (ms, ss) = field(|m| m.sigma2);
    let (mr, sr) = field(|m| m.corr_r);
    let (mp2, sp2) = field(|m| m.mean_p2);
    (0..n_bins)
        .map(|i| BinStats {
            time: times[i],
            mean: Moments {
                mean_x: mx[i],
                mean_p: mp[i],
                sigma2: ms[i],
                corr_r: mr[i],
                mean_p2: mp2[i],
            },
            se: Moments {
                mean_x: sx[i],
                mean_p: sp[i],
                sigma2: ss[i],
                corr_r: sr[i],
                mean_p2: sp2[i],
            },
        })
        .collect()
}

fn to_series(runs: Vec<TrajectoryRun>) -> Vec<TrajectorySeries> {
    runs.into_iter()
        .map(|r| TrajectorySeries {
            trajectory: r.trajectory,
            failed: r.failed,
            outcome: None,
            decision_time: None,
            drag_shift: r.drag_shift,
            records: r.records,
        })
        .collect()
}

/// Runs the experiment described by `spec`; deterministic given the base seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::EnergyRatePlain => run_energy_rate(spec, StepperKind::Plain),
        ExperimentKind::EnergyRateDrag => run_energy_rate(spec, StepperKind::DragComposed),
        ExperimentKind::TrajectoryDiffusion => run_trajectory_diffusion(spec),
        ExperimentKind::TrajectoryClassical => run_trajectory_classical(spec),
        ExperimentKind::SolitonConvergence => run_soliton_convergence(spec),
        ExperimentKind::SolitonDiffusion => run_soliton_diffusion(spec),
        ExperimentKind::CatCollapse => run_cat_collapse(spec),
        ExperimentKind::MasterCompare => {
            if spec.drag {
                run_drag_non_closure(spec)
            } else {
                run_master_compare(spec)
            }
        }
        ExperimentKind::CompositionOrder => run_composition_order(spec),
    }
}

fn run_energy_rate(spec: &ExperimentSpec, stepper: StepperKind) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let runs = run_ensemble(spec, &psi0, stepper)?;
    let ok = successful(&runs);
    let (times, p2) = series_of(&ok, |m| m.mean_p2);
    // Plain SSE: the rate is 2D identically, fit the whole horizon. Drag SSE:
    // the rate is 2D(1−4R²) along the trajectory; fit the converged tail,
    // where stationarity forces the average rate to zero.
    let window = match stepper {
        StepperKind::Plain => (0.0, spec.horizon),
        _ => (0.5 * spec.horizon, spec.horizon),
    };
    let fit = stats::fit_slope(&times, &p2, window, spec.seed ^ 0xB007)?;
    let d = spec.params.collapse_strength;
    let expected = match stepper {
        StepperKind::Plain => 2.0 * d,
        _ => 0.0,
    };
    let scale = (2.0 * d).max(f64::MIN_POSITIVE);
    let summary = ExperimentSummary::EnergyRate {
        fit,
        expected,
        rel_err: (fit.slope - expected).abs() / scale,
        within_two_se: (fit.slope - expected).abs() <= 2.0 * fit.stderr,
    };
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed: runs.len() - ok.len(),
        trajectories: to_series(runs),
        summary,
    })
}

fn run_trajectory_diffusion(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    if spec.params.collapse_strength <= 0.0 {
        return Err(SimError::spec("params.d", "diffusion checks need D > 0"));
    }
    let mut probe = spec.clone();
    probe.record_every = 1; // per-step residuals need every step
    let grid = Grid::new(probe.grid)?;
    let psi0 = build_initial(&probe, &grid)?;
    let runs = run_ensemble(&probe, &psi0, StepperKind::Plain)?;
    let ok = successful(&runs);

    let params = &probe.params;
    let sqrt8d = (8.0 * params.collapse_strength).sqrt();
    let mut acc_x = 0.0;
    let mut acc_p = 0.0;
    let mut count = 0usize;
    for run in &ok {
        for w in run.records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            // Recover the realized dW of the step from the signal record.
            let Some(signal) = a.signal else { continue };
            let dw = (signal - a.moments.mean_x) * sqrt8d * probe.dt / params.hbar;
            let dx_pred = a.moments.mean_p / params.mass * probe.dt
                + a.moments.sigma2 / params.hbar * sqrt8d * dw;
            let dp_pred = a.moments.corr_r * sqrt8d * dw;
            let rx = (b.moments.mean_x - a.moments.mean_x) - dx_pred;
            let rp = (b.moments.mean_p - a.moments.mean_p) - dp_pred;
            acc_x += rx * rx;
            acc_p += rp * rp;
            count += 1;
        }
    }
    if count == 0 {
        return Err(SimError::InsufficientData("no steps recorded".into()));
    }
    let rms_x = (acc_x / count as f64).sqrt();
    let rms_p = (acc_p / count as f64).sqrt();
    let bound = 20.0 * probe.dt;
    let summary = ExperimentSummary::TrajectoryDiffusion {
        rms_x_residual: rms_x,
        rms_p_residual: rms_p,
        bound,
        pass: rms_x < bound && rms_p < bound,
    };
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed: runs.len() - ok.len(),
        trajectories: to_series(runs),
        summary,
    })
}

fn run_soliton_diffusion(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let runs = run_ensemble(spec, &psi0, StepperKind::Plain)?;
    let ok = successful(&runs);
    let (times, ps) = series_of(&ok, |m| m.mean_p);
    let (_, xs) = series_of(&ok, |m| m.mean_x);
    let d = spec.params.collapse_strength;
    let var_p = stats::fit_variance_slope(&times, &ps, (0.0, spec.horizon), spec.seed ^ 0xD1FF)?;
    // Short window: keeps the ⟨p⟩-random-walk contribution to Var[⟨x⟩] below
    // the linear term. √(ħ/M) equals (σ∞²/ħ)√(8D) at the soliton spread.
    let x_window = spec.horizon / 12.0;
    let var_x = stats::fit_variance_slope(&times, &xs, (0.0, x_window), spec.seed ^ 0xD1FE)?;
    let var_p_expected = 2.0 * d;
    let var_x_expected = spec.params.hbar / spec.params.mass;
    let within = (var_p.slope - var_p_expected).abs() <= 2.0 * var_p.stderr
        && (var_x.slope - var_x_expected).abs() <= 2.0 * var_x.stderr;
    let summary = ExperimentSummary::SolitonDiffusion {
        var_p,
        var_p_expected,
        var_x,
        var_x_expected,
        within_two_se: within,
    };
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed: runs.len() - ok.len(),
        trajectories: to_series(runs),
        summary,
    })
}

fn coarsen(fine: &[f64], factor: usize) -> Vec<f64> {
    fine.chunks(factor).map(|c| c.iter().sum()).collect()
}

fn run_trajectory_classical(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let m0 = moments_of_with_tol(&psi0, &spec.params, DEFAULT_LEAK_TOL)?;
    let p0 = m0.mean_p;
    let x0 = m0.mean_x;
    let levels = 3usize;
    let fine_factor = 1usize << (levels - 1);
    let n_fine = n_steps_for(spec.horizon, spec.dt / fine_factor as f64);

    struct LevelDev {
        p_dev: f64,
        x_dev: f64,
    }
    // Same Brownian path across refinement levels: draw at the finest dt and
    // sum increments for the coarser runs.
    let per_traj: Vec<std::result::Result<(Vec<LevelDev>, TrajectoryRun), String>> = (0..spec
        .n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let fine = draw_increments(spec.seed, i, n_fine, spec.dt / fine_factor as f64);
            let mut devs = Vec::with_capacity(levels);
            let mut kept: Option<TrajectoryRun> = None;
            for level in 0..levels {
                let factor = 1usize << (levels - 1 - level);
                let dws = coarsen(&fine, factor);
                let dt_level = spec.dt / (1usize << level) as f64;
                let cfg = match StepConfig::new(dt_level) {
                    Ok(c) => c.with_scheme(spec.scheme),
                    Err(e) => return Err(e.to_string()),
                };
                let stride = spec.record_every * (1usize << level);
                let run = run_trajectory_with(
                    &psi0,
                    &spec.params,
                    &cfg,
                    StepperKind::DragComposed,
                    &dws,
                    stride,
                    i,
                    |_, _, _, _| {},
                );
                if let Some(f) = &run.failed {
                    return Err(f.clone());
                }
                let p_dev = run
                    .records
                    .iter()
                    .map(|r| (r.moments.mean_p - p0).abs())
                    .fold(0.0, f64::max);
                let t_end = run.records.last().map(|r| r.time).unwrap_or(0.0);
                let x_exp = x0 + p0 * t_end / spec.params.mass;
                let x_dev = (run.records.last().unwrap().moments.mean_x - x_exp).abs();
                devs.push(LevelDev { p_dev, x_dev });
                if level == levels - 1 {
                    kept = Some(run);
                }
            }
            Ok((devs, kept.unwrap()))
        })
        .collect();

    let mut runs = Vec::with_capacity(spec.n_traj);
    let mut max_p = vec![0.0f64; levels];
    let mut max_x = vec![0.0f64; levels];
    let mut failed = 0usize;
    let mut first_fail = String::new();
    for item in per_traj {
        match item {
            Ok((devs, run)) => {
                for (l, d) in devs.iter().enumerate() {
                    max_p[l] = max_p[l].max(d.p_dev);
                    max_x[l] = max_x[l].max(d.x_dev);
                }
                runs.push(run);
            }
            Err(e) => {
                failed += 1;
                if first_fail.is_empty() {
                    first_fail = e;
                }
            }
        }
    }
    if failed as f64 > FAILURE_BUDGET * spec.n_traj as f64 {
        return Err(SimError::TooManyFailures {
            failed,
            total: spec.n_traj,
            budget_percent: FAILURE_BUDGET * 100.0,
            first: first_fail,
        });
    }

    let dts: Vec<f64> = (0..levels)
        .map(|l| spec.dt / (1usize << l) as f64)
        .collect();
    let ratio = |v: &[f64]| -> Vec<f64> {
        v.windows(2)
            .map(|w| if w[1] > 0.0 { w[0] / w[1] } else { f64::NAN })
            .collect()
    };
    let summary = ExperimentSummary::TrajectoryClassical {
        dts,
        max_p_dev: max_p.clone(),
        max_x_dev: max_x.clone(),
        p_ratios: ratio(&max_p),
        x_ratios: ratio(&max_x),
    };
    let ok = successful(&runs);
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed,
        trajectories: to_series(runs),
        summary,
    })
}

fn run_soliton_convergence(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let stepper = if spec.drag {
        StepperKind::DragComposed
    } else {
        StepperKind::Plain
    };
    let runs = run_ensemble(spec, &psi0, stepper)?;
    let ok = successful(&runs);
    let (times, s2) = series_of(&ok, |m| m.sigma2);
    let (_, rr) = series_of(&ok, |m| m.corr_r);
    // Tail average over the last 40% of the horizon.
    let t_start = 0.6 * spec.horizon;
    let mut acc_s2 = 0.0;
    let mut acc_r = 0.0;
    let mut count = 0usize;
    for (ti, &t) in times.iter().enumerate() {
        if t >= t_start {
            for traj in s2.iter().zip(&rr) {
                acc_s2 += traj.0[ti];
                acc_r += traj.1[ti];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(SimError::InsufficientData("empty tail window".into()));
    }
    let sigma2_tail = acc_s2 / count as f64;
    let r_tail = acc_r / count as f64;
    let (sigma2_expected, r_expected) = soliton_constants(&spec.params)?;
    let summary = ExperimentSummary::SolitonConvergence {
        sigma2_tail,
        sigma2_expected,
        sigma2_rel_err: (sigma2_tail - sigma2_expected).abs() / sigma2_expected,
        r_tail,
        r_expected,
        r_abs_err: (r_tail - r_expected).abs(),
    };
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed: runs.len() - ok.len(),
        trajectories: to_series(runs),
        summary,
    })
}

struct CatRun {
    base: TrajectoryRun,
    outcome: CollapseOutcome,
    decision_time: Option<f64>,
    final_mean_x: f64,
}

fn cat_branches(spec: &ExperimentSpec) -> Result<(f64, f64, f64)> {
    let InitialState::Cat(cat) = &spec.init else {
        return Err(SimError::spec("init", "cat experiment without cat state"));
    };
    let w = cat.amp1.norm_sqr() + cat.amp2.norm_sqr();
    Ok((
        cat.branch1.center,
        cat.branch2.center,
        cat.amp1.norm_sqr() / w,
    ))
}

fn run_cat_trajectory(
    spec: &ExperimentSpec,
    psi0: &WaveFunction,
    stepper: StepperKind,
    horizon: f64,
    trajectory: u64,
    seed: u64,
) -> Result<CatRun> {
    let (x1, x2, _) = cat_branches(spec)?;
    let cfg = step_config(spec)?;
    let n_steps = n_steps_for(horizon, spec.dt);
    let dws = draw_increments(seed, trajectory, n_steps, spec.dt);
    let mut pops: Vec<(f64, f64)> = Vec::new();
    let run = run_trajectory_with(
        psi0,
        &spec.params,
        &cfg,
        stepper,
        &dws,
        spec.record_every,
        trajectory,
        |_, _, psi, shift| {
            pops.push(branch_populations(psi, x1 + shift, x2 + shift));
        },
    );
    let mut decision_time = None;
    for (rec, (p1, p2)) in run.records.iter().zip(&pops) {
        if classify_collapse(*p1, *p2, COLLAPSE_THRESHOLD) != CollapseOutcome::Undecided {
            decision_time = Some(rec.time);
            break;
        }
    }
    let outcome = if run.failed.is_some() {
        CollapseOutcome::Undecided
    } else {
        pops.last()
            .map(|(p1, p2)| classify_collapse(*p1, *p2, COLLAPSE_THRESHOLD))
            .unwrap_or(CollapseOutcome::Undecided)
    };
    let final_mean_x = run
        .records
        .last()
        .map(|r| r.moments.mean_x)
        .unwrap_or(f64::NAN);
    Ok(CatRun {
        base: run,
        outcome,
        decision_time,
        final_mean_x,
    })
}

fn run_cat_collapse(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let (x1, x2, w1) = cat_branches(spec)?;
    let stepper = if spec.drag {
        StepperKind::DragComposed
    } else {
        StepperKind::Plain
    };

    // Pilot batch: estimate the median decision time, then use a horizon of
    // 20x the median (the spec horizon acts as pilot window and upper cap).
    let pilot_n = 32u64;
    let pilot_seed = spec.seed ^ 0xCA7_1D;
    let pilot: Vec<CatRun> = (0..pilot_n)
        .into_par_iter()
        .map(|i| run_cat_trajectory(spec, &psi0, stepper, spec.horizon, i, pilot_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut decided_times: Vec<f64> = pilot.iter().filter_map(|c| c.decision_time).collect();
    if decided_times.len() < (pilot_n as usize) / 2 {
        return Err(SimError::InsufficientData(format!(
            "pilot batch: only {}/{} trajectories decided within the horizon",
            decided_times.len(),
            pilot_n
        )));
    }
    decided_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = decided_times[decided_times.len() / 2];
    let horizon_used = (20.0 * median)
        .min(spec.horizon)
        .max(spec.dt * spec.record_every as f64 * 5.0);

    let cats: Vec<CatRun> = (0..spec.n_traj as u64)
        .into_par_iter()
        .map(|i| run_cat_trajectory(spec, &psi0, stepper, horizon_used, i, spec.seed))
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::with_capacity(cats.len());
    let mut series = Vec::with_capacity(cats.len());
    let mut b1 = 0usize;
    let mut b2 = 0usize;
    let mut undecided = 0usize;
    let com_expected = w1 * x1 + (1.0 - w1) * x2;
    let mut max_com_dev: f64 = 0.0;
    let mut max_branch_dev: f64 = 0.0;
    for cat in cats {
        if cat.base.failed.is_none() {
            match cat.outcome {
                CollapseOutcome::Branch1 => b1 += 1,
                CollapseOutcome::Branch2 => b2 += 1,
                CollapseOutcome::Undecided => undecided += 1,
            }
            if cat.outcome != CollapseOutcome::Undecided {
                let com_dev = (cat.final_mean_x - com_expected).abs();
                let branch_dev = (cat.final_mean_x - x1)
                    .abs()
                    .min((cat.final_mean_x - x2).abs());
                max_com_dev = max_com_dev.max(com_dev);
                max_branch_dev = max_branch_dev.max(branch_dev);
            }
        }
        series.push(TrajectorySeries {
            trajectory: cat.base.trajectory,
            failed: cat.base.failed.clone(),
            outcome: Some(cat.outcome),
            decision_time: cat.decision_time,
            drag_shift: cat.base.drag_shift,
            records: cat.base.records.clone(),
        });
        runs.push(cat.base);
    }
    check_failure_budget(&runs)?;
    let ok = successful(&runs);
    let decided = b1 + b2;
    let freq1 = if decided > 0 {
        b1 as f64 / decided as f64
    } else {
        f64::NAN
    };
    let band = 3.0 * (w1 * (1.0 - w1) / spec.n_traj as f64).sqrt();
    let summary = ExperimentSummary::CatCollapse {
        branch1_count: b1,
        branch2_count: b2,
        undecided_count: undecided,
        born_expected: w1,
        branch1_frequency: freq1,
        band_3sigma: band,
        in_band: (freq1 - w1).abs() <= band,
        com_expected,
        max_com_dev,
        max_branch_dev,
        horizon_used,
        median_decision_time: median,
        separation: (x2 - x1).abs(),
    };
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed: runs.len() - ok.len(),
        trajectories: series,
        summary,
    })
}

const MASTER_CHUNKS: usize = 16;

fn chunk_ranges(n: usize, chunks: usize) -> Vec<(usize, usize)> {
    let size = n.div_ceil(chunks).max(1);
    (0..n)
        .step_by(size)
        .map(|s| (s, (s + size).min(n)))
        .collect()
}

/// Per-bin mean projectors accumulated chunk-wise: deterministic for any
/// worker count, bounded memory, and the chunk sums double as the cluster
/// bootstrap sample.
struct ChunkedDensity {
    sums: Vec<Vec<Array2<Complex64>>>,
    counts: Vec<usize>,
    runs: Vec<TrajectoryRun>,
}

fn accumulate_chunked(
    spec: &ExperimentSpec,
    psi0: &WaveFunction,
    stepper: StepperKind,
    n_bins: usize,
) -> Result<ChunkedDensity> {
    let grid = psi0.grid();
    let n = grid.n();
    let dx = grid.dx();
    let cfg = step_config(spec)?;
    let n_steps = n_steps_for(spec.horizon, spec.dt);
    let ranges = chunk_ranges(spec.n_traj, MASTER_CHUNKS);

    type ChunkOut = (Vec<Array2<Complex64>>, Vec<TrajectoryRun>, usize);
    let chunk_results: Vec<ChunkOut> = ranges
        .par_iter()
        .map(|&(start, end)| {
            let mut sums = vec![Array2::from_elem((n, n), Complex64::ZERO); n_bins];
            let mut runs = Vec::with_capacity(end - start);
            let mut counted = 0usize;
            // Per-trajectory staging so failed trajectories contribute nothing.
            let mut staged = vec![Array2::from_elem((n, n), Complex64::ZERO); n_bins];
            for i in start..end {
                for s in staged.iter_mut() {
                    s.fill(Complex64::ZERO);
                }
                let dws = draw_increments(spec.seed, i as u64, n_steps, spec.dt);
                let run = run_trajectory_with(
                    psi0,
                    &spec.params,
                    &cfg,
                    stepper,
                    &dws,
                    spec.record_every,
                    i as u64,
                    |bin, _, psi, _| {
                        if bin < n_bins {
                            let amp = psi.amplitudes();
                            let s = &mut staged[bin];
                            for r in 0..n {
                                for c in 0..n {
                                    s[[r, c]] += amp[r] * amp[c].conj() * dx;
                                }
                            }
                        }
                    },
                );
                if run.failed.is_none() {
                    counted += 1;
                    for (acc, s) in sums.iter_mut().zip(&staged) {
                        acc.zip_mut_with(s, |a, b| *a += b);
                    }
                }
                runs.push(run);
            }
            (sums, runs, counted)
        })
        .collect();

    let mut runs = Vec::with_capacity(spec.n_traj);
    let mut sums = Vec::with_capacity(ranges.len());
    let mut counts = Vec::with_capacity(ranges.len());
    for (s, mut r, c) in chunk_results {
        sums.push(s);
        counts.push(c);
        runs.append(&mut r);
    }
    check_failure_budget(&runs)?;
    Ok(ChunkedDensity { sums, counts, runs })
}

impl ChunkedDensity {
    /// Weighted chunk mean at a bin; `weight[ci]` is the multiplicity of
    /// chunk `ci` (all ones for the plain mean).
    fn mean_at(
        &self,
        grid: &std::sync::Arc<Grid>,
        bin: usize,
        weights: &[f64],
    ) -> Result<DensityMatrix> {
        let n = grid.n();
        let mut acc = Array2::from_elem((n, n), Complex64::ZERO);
        let mut total = 0.0;
        for ((s, &c), &w) in self.sums.iter().zip(&self.counts).zip(weights) {
            if w > 0.0 {
                let wc = Complex64::new(w, 0.0);
                acc.zip_mut_with(&s[bin], |a, b| *a += wc * b);
                total += w * c as f64;
            }
        }
        if total == 0.0 {
            return Err(SimError::InsufficientData("empty chunk resample".into()));
        }
        acc.mapv_inplace(|v| v / total);
        DensityMatrix::new(grid.clone(), acc)
    }

    fn total_ok(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn run_master_compare(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let n_steps = n_steps_for(spec.horizon, spec.dt);
    let n_bins = n_steps / spec.record_every + 1;
    let chunked = accumulate_chunked(spec, &psi0, StepperKind::Plain, n_bins)?;
    let ok = successful(&chunked.runs);

    // Master side on the same bins.
    let bin_dt = spec.record_every as f64 * spec.dt;
    let master_sub = 8usize;
    let mcfg = MasterConfig::new(bin_dt / master_sub as f64)?;
    let mut rho = crate::state::pure_to_density(&psi0)?;
    let ones = vec![1.0; chunked.sums.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xB0075);
    let mut times = Vec::with_capacity(n_bins);
    let mut distances = Vec::with_capacity(n_bins);
    let mut bootstrap_sd = Vec::with_capacity(n_bins);
    for bin in 0..n_bins {
        if bin > 0 {
            for _ in 0..master_sub {
                rho = crate::master::step_master(&rho, &spec.params, &mcfg)?;
            }
        }
        let ens = chunked.mean_at(&grid, bin, &ones)?;
        let dist = compare_ensemble_to_master(&ens, &rho)?;
        // Cluster bootstrap over chunks.
        let nb = 64usize;
        let n_chunks = chunked.sums.len();
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..nb {
            let mut w = vec![0.0; n_chunks];
            for _ in 0..n_chunks {
                w[rng.random_range(0..n_chunks)] += 1.0;
            }
            let resampled = chunked.mean_at(&grid, bin, &w)?;
            let d = compare_ensemble_to_master(&resampled, &rho)?;
            acc += d;
            acc2 += d * d;
        }
        let nbf = nb as f64;
        bootstrap_sd.push((acc2 / nbf - (acc / nbf).powi(2)).max(0.0).sqrt());
        times.push(bin as f64 * bin_dt);
        distances.push(dist);
    }
    let band = 3.0 / (chunked.total_ok() as f64).sqrt();
    let max_distance = distances.iter().cloned().fold(0.0, f64::max);
    let summary = ExperimentSummary::MasterCompare {
        times,
        distances,
        band,
        max_distance,
        within_band: max_distance <= band,
        bootstrap_sd,
    };
    let failed = chunked.runs.len() - ok.len();
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed,
        trajectories: to_series(chunked.runs),
        summary,
    })
}

fn run_drag_non_closure(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let n_steps = n_steps_for(spec.horizon, spec.dt);
    let n_bins = n_steps / spec.record_every + 1;
    let chunked = accumulate_chunked(spec, &psi0, StepperKind::DragComposed, n_bins)?;
    let ok = successful(&chunked.runs);

    // Frozen-generator Lindblad iteration of the initial-time law.
    let frozen = FrozenDragMaster::freeze(&psi0, &spec.params)?;
    let bin_dt = spec.record_every as f64 * spec.dt;
    let sub = 8usize;
    let mut rho = crate::state::pure_to_density(&psi0)?;
    let ones = vec![1.0; chunked.sums.len()];
    let mut times = Vec::with_capacity(n_bins);
    let mut distances = Vec::with_capacity(n_bins);
    for bin in 0..n_bins {
        if bin > 0 {
            for _ in 0..sub {
                rho = frozen.step(&rho, bin_dt / sub as f64)?;
            }
        }
        let ens = chunked.mean_at(&grid, bin, &ones)?;
        times.push(bin as f64 * bin_dt);
        distances.push(compare_ensemble_to_master(&ens, &rho)?);
    }
    let band = 3.0 / (chunked.total_ok() as f64).sqrt();
    let exceeds = distances.iter().any(|&d| d > band);
    let summary = ExperimentSummary::DragNonClosure {
        times,
        distances,
        band,
        exceeds_band: exceeds,
    };
    let failed = chunked.runs.len() - ok.len();
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: collect_bins(&ok),
        failed,
        trajectories: to_series(chunked.runs),
        summary,
    })
}

fn run_composition_order(spec: &ExperimentSpec) -> Result<EnsembleResult> {
    let grid = Grid::new(spec.grid)?;
    let psi0 = build_initial(spec, &grid)?;
    let m0 = moments_of_with_tol(&psi0, &spec.params, DEFAULT_LEAK_TOL)?;
    let levels = 4usize;
    let mut ns = NoiseStream::new(spec.seed, 0);
    let zs: Vec<f64> = (0..spec.n_traj).map(|_| ns.next_increment(1.0)).collect();

    let mut dts = Vec::with_capacity(levels);
    let mut mean_diffs = Vec::with_capacity(levels);
    for level in 0..levels {
        let dt = spec.dt / (1usize << level) as f64;
        let cfg = StepConfig::new(dt)?.with_scheme(spec.scheme);
        let mut acc = 0.0;
        for &z in &zs {
            let dw = z * dt.sqrt();
            let a = step_drag_composed_with_moments(&psi0, &m0, &spec.params, &cfg, dw)?.state;
            let b = step_drag_compact_with_moments(&psi0, &m0, &spec.params, &cfg, dw)?.state;
            let diff: f64 = a
                .amplitudes()
                .iter()
                .zip(b.amplitudes())
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt()
                * grid.dx().sqrt();
            acc += diff;
        }
        dts.push(dt);
        mean_diffs.push(acc / zs.len() as f64);
    }
    let logs_t: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let logs_d: Vec<f64> = mean_diffs.iter().map(|d| d.ln()).collect();
    let (order, _) = stats::ols(&logs_t, &logs_d)?;
    let summary = ExperimentSummary::CompositionOrder {
        dts,
        mean_diffs,
        fitted_order: order,
    };
    Ok(EnsembleResult {
        spec: spec.clone(),
        bins: Vec::new(),
        trajectories: Vec::new(),
        failed: 0,
        summary,
    })
}
