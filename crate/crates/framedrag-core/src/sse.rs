//! Itô steppers for the collapse stochastic Schrödinger equations.
//!
//! Three steppers share one Wiener-increment source:
//!
//! * [`step_plain`] — the plain collapse SSE
//!   `dψ = −(i/ħ)Ĥψ dt − (D/ħ²)x_c²ψ dt + (√(2D)/ħ)x_c ψ dW`;
//! * [`step_drag_compact`] — the frame-drag SSE in compact form, with the
//!   state-dependent Hamiltonian `Ĥ_ψ` and Lindbladian `Â_c`;
//! * [`step_drag_composed`] — the two-factor form: a plain step followed by
//!   the exact drag unitary `exp(−(i/ħ)[R x_c − ħ⁻¹σ² p_c]√(8D) dW)`.
//!
//! All state-dependent coefficients are evaluated on the pre-step state
//! (Itô convention). The stochastic part is Euler-Maruyama, optionally with a
//! frozen-coefficient Milstein correction (`StepConfig::milstein`, on by
//! default); the correction is what makes the composed and compact forms agree
//! at strong order 3/2 on identical noise.

use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::observables::{moments_of_with_tol, Moments};
use crate::operators::{
    apply_drag_hamiltonian, apply_drag_lindblad,
    apply_drag_lindblad_adjoint,
};
use crate::state::{ModelParams, WaveFunction, DEFAULT_LEAK_TOL};

/// Integration scheme for the deterministic part of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Everything first order in `dt`, Hamiltonian included.
    EulerMaruyama,
    /// Free propagation applied exactly (spectrally), stochastic part
    /// Euler-Maruyama. The `D = 0` limit is then exact.
    SplitStepEm,
}

/// Per-step configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Renormalize after every step (default). The first-order scheme drifts
    /// at O(dt²) per step in expectation, which would accumulate.
    pub renormalize: bool,
    /// Frozen-coefficient Milstein correction `(D/ħ²)·(...)·(dW²−dt)`.
    pub milstein: bool,
    /// Boundary-mass tolerance; exceeding it is a reportable error.
    pub leak_tol: f64,
}

impl StepConfig {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::Params(format!("dt = {dt}, need dt > 0")));
        }
        Ok(StepConfig {
            dt,
            scheme: Scheme::SplitStepEm,
            renormalize: true,
            milstein: true,
            leak_tol: DEFAULT_LEAK_TOL,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_renormalize(mut self, renormalize: bool) -> Self {
        self.renormalize = renormalize;
        self
    }

    pub fn with_milstein(mut self, milstein: bool) -> Self {
        self.milstein = milstein;
        self
    }

    fn check_stability(&self, psi: &WaveFunction, params: &ModelParams) -> Result<()> {
        if self.scheme == Scheme::EulerMaruyama {
            let dx = psi.grid().dx();
            let bound = dx * dx * params.mass / params.hbar;
            if self.dt >= bound {
                return Err(SimError::Unstable {
                    dt: self.dt,
                    bound,
                });
            }
        }
        Ok(())
    }
}

/// Mixes a base seed with a trajectory index into an independent stream seed.
pub fn derive_seed(seed: u64, trajectory: u64) -> u64 {
    // splitmix64 finalizer on the trajectory index, xor-ed onto the base seed.
    let mut z = trajectory.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    seed ^ (z ^ (z >> 31))
}

/// Reproducible per-trajectory Wiener increment source.
///
/// The same `(seed, trajectory)` pair reproduces the identical increment
/// sequence bit-exactly, independent of scheduling.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    trajectory: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        NoiseStream {
            seed,
            trajectory,
            counter: 0,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, trajectory)),
        }
    }

    /// Draws `dW ~ Normal(0, dt)`.
    pub fn next_increment(&mut self, dt: f64) -> f64 {
        self.counter += 1;
        let z: f64 = self.rng.sample(StandardNormal);
        z * dt.sqrt()
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }
}

/// Per-step diagnostics of a trajectory time series.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub moments: Moments,
    /// `‖ψ‖² − 1` before renormalization.
    pub norm_drift: f64,
    /// Monitoring signal `x_t = ⟨x⟩ + (ħ/√(8D))·dW/dt`; present only when
    /// `D > 0`.
    pub signal: Option<f64>,
}

/// The monitoring signal associated with one step.
pub fn record_signal(pre: &Moments, dw: f64, dt: f64, params: &ModelParams) -> Result<f64> {
    if params.collapse_strength <= 0.0 {
        return Err(SimError::ZeroCollapseStrength("signal record"));
    }
    Ok(pre.mean_x + params.hbar / (8.0 * params.collapse_strength).sqrt() * dw / dt)
}

/// Outcome of a single step: the state plus the pre-renormalization drift.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: WaveFunction,
    pub norm_drift: f64,
}

/// Exact spectral free propagation `exp(−iĤ dt/ħ) ψ`.
pub fn propagate_free(psi: &WaveFunction, params: &ModelParams, dt: f64) -> WaveFunction {
    let grid = psi.grid();
    let mut buf: Vec<Complex64> = psi.amplitudes().to_vec();
    grid.forward(&mut buf);
    let c = 0.5 * params.hbar / params.mass * dt;
    for (v, &k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *v *= Complex64::new(0.0, -c * k * k).exp();
    }
    grid.inverse(&mut buf);
    WaveFunction::raw(grid.clone(), Array1::from_vec(buf))
}

fn finish_step(
    amp: Array1<Complex64>,
    template: &WaveFunction,
    cfg: &StepConfig,
) -> Result<StepOutcome> {
    let mut out = WaveFunction::raw(template.grid().clone(), amp);
    let norm_drift = out.norm_sq() - 1.0;
    if cfg.renormalize {
        out.normalize();
    }
    out.check_leak(cfg.leak_tol)?;
    Ok(StepOutcome {
        state: out,
        norm_drift,
    })
}

/// One Itô step of the plain collapse SSE. Wraps
/// [`step_plain_with_moments`] computing the pre-step moments internally.
pub fn step_plain(
    psi: &WaveFunction,
    params: &ModelParams,
    cfg: &StepConfig,
    dw: f64,
) -> Result<WaveFunction> {
    let m = moments_of_with_tol(psi, params, cfg.leak_tol)?;
    Ok(step_plain_with_moments(psi, &m, params, cfg, dw)?.state)
}

/// One Itô step of the plain collapse SSE with the pre-step moments supplied
/// by the caller.
pub fn step_plain_with_moments(
    psi: &WaveFunction,
    pre: &Moments,
    params: &ModelParams,
    cfg: &StepConfig,
    dw: f64,
) -> Result<StepOutcome> {
    cfg.check_stability(psi, params)?;
    let d = params.collapse_strength;
    let hbar = params.hbar;
    let dt = cfg.dt;

    let (phi, h_phi) = match cfg.scheme {
        Scheme::SplitStepEm => (propagate_free(psi, params, dt), None),
        Scheme::EulerMaruyama => {
            let h = crate::operators::apply_free_hamiltonian(psi, params);
            (psi.clone(), Some(h))
        }
    };

    // ψ' = φ + dt·[−(i/ħ)Ĥφ − (D/ħ²)x_c²φ] + dW·(√2D/ħ)x_cφ
    //        + (dW²−dt)·(D/ħ²)(x_c² − 2σ²)φ
    // with x_c centered on the pre-step ⟨x⟩.
    let g = d.sqrt() * std::f64::consts::SQRT_2 / hbar * dw;
    let damp = d / (hbar * hbar);
    let mil = if cfg.milstein { dw * dw - dt } else { 0.0 };
    let xs = phi.grid().positions();
    let mut amp = Array1::from_elem(phi.grid().n(), Complex64::ZERO);
    for (i, (a, &x)) in phi.amplitudes().iter().zip(xs).enumerate() {
        let xc = x - pre.mean_x;
        let xc2 = xc * xc;
        let factor = 1.0 - damp * xc2 * dt + g * xc + damp * (xc2 - 2.0 * pre.sigma2) * mil;
        amp[i] = a * factor;
    }
    if let Some(h) = h_phi {
        let c = Complex64::new(0.0, -dt / hbar);
        amp.zip_mut_with(h.amplitudes(), |v, hv| *v += c * hv);
    }
    finish_step(amp, psi, cfg)
}

/// One Itô step of the compact frame-drag SSE
/// `dψ = −(i/ħ)(Ĥ+Ĥ_ψ)ψ dt − (D/ħ²)Â_c†Â_cψ dt + (√(2D)/ħ)Â_cψ dW`.
pub fn step_drag_compact(
    psi: &WaveFunction,
    params: &ModelParams,
    cfg: &StepConfig,
    dw: f64,
) -> Result<WaveFunction> {
    let m = moments_of_with_tol(psi, params, cfg.leak_tol)?;
    Ok(step_drag_compact_with_moments(psi, &m, params, cfg, dw)?.state)
}

/// Compact drag step with caller-supplied pre-step moments.
pub fn step_drag_compact_with_moments(
    psi: &WaveFunction,
    pre: &Moments,
    params: &ModelParams,
    cfg: &StepConfig,
    dw: f64,
) -> Result<StepOutcome> {
    cfg.check_stability(psi, params)?;
    let d = params.collapse_strength;
    let hbar = params.hbar;
    let dt = cfg.dt;

    let (phi, h_phi) = match cfg.scheme {
        Scheme::SplitStepEm => (propagate_free(psi, params, dt), None),
        Scheme::EulerMaruyama => {
            let h = crate::operators::apply_free_hamiltonian(psi, params);
            (psi.clone(), Some(h))
        }
    };

    let a_phi = apply_drag_lindblad(&phi, pre, params);
    let n_phi = apply_drag_lindblad_adjoint(&a_phi, pre, params);
    let hpsi_phi = apply_drag_hamiltonian(&phi, pre, params);

    let g = Complex64::new(d.sqrt() * std::f64::consts::SQRT_2 / hbar * dw, 0.0);
    let damp = d / (hbar * hbar);
    let ih = Complex64::new(0.0, -dt / hbar);

    let mut amp: Array1<Complex64> = phi.amplitudes().clone();
    for i in 0..amp.len() {
        amp[i] += ih * hpsi_phi.amplitudes()[i] - damp * dt * n_phi.amplitudes()[i]
            + g * a_phi.amplitudes()[i];
    }
    if cfg.milstein {
        // Frozen-operator Milstein term (D/ħ²)Â_c²φ·(dW²−dt); this is exactly
        // the second-order term the two-factor composition produces.
        let a2_phi = apply_drag_lindblad(&a_phi, pre, params);
        let mil = Complex64::new(damp * (dw * dw - dt), 0.0);
        amp.zip_mut_with(a2_phi.amplitudes(), |v, a2| *v += mil * a2);
    }
    if let Some(h) = h_phi {
        amp.zip_mut_with(h.amplitudes(), |v, hv| *v += ih * hv);
    }
    finish_step(amp, psi, cfg)
}

/// The drag unitary `exp(−(i/ħ)[R x_c − ħ⁻¹σ² p_c]·√(8D) dW)` applied exactly
/// through the Weyl-ordered x-phase / p-phase factorization (the commutator of
/// the two generators is a c-number, so the split is exact up to the scalar
/// phase `e^{−iε²Rσ²/2}`).
pub fn apply_drag_unitary(
    psi: &WaveFunction,
    pre: &Moments,
    params: &ModelParams,
    dw: f64,
) -> WaveFunction {
    let hbar = params.hbar;
    let eps = (8.0 * params.collapse_strength).sqrt() * dw / hbar;
    let grid = psi.grid();

    let mut buf: Vec<Complex64> = psi.amplitudes().to_vec();
    grid.forward(&mut buf);
    for (v, &k) in buf.iter_mut().zip(grid.wavenumbers()) {
        let pc = hbar * k - pre.mean_p;
        *v *= Complex64::new(0.0, eps * pre.sigma2 * pc / hbar).exp();
    }
    grid.inverse(&mut buf);

    let scalar = Complex64::new(0.0, -0.5 * eps * eps * pre.corr_r * pre.sigma2).exp();
    for (v, &x) in buf.iter_mut().zip(grid.positions()) {
        let xc = x - pre.mean_x;
        *v *= scalar * Complex64::new(0.0, -eps * pre.corr_r * xc).exp();
    }
    WaveFunction::raw(grid.clone(), Array1::from_vec(buf))
}

/// One step of the drag SSE in two-factor form: a plain step followed by the
/// frame-drag unitary, both driven by the same `dW` and both using the
/// pre-step moments.
pub fn step_drag_composed(
    psi: &WaveFunction,
    params: &ModelParams,
    cfg: &StepConfig,
    dw: f64,
) -> Result<WaveFunction> {
    let m = moments_of_with_tol(psi, params, cfg.leak_tol)?;
    Ok(step_drag_composed_with_moments(psi, &m, params, cfg, dw)?.state)
}

/// Composed drag step with caller-supplied pre-step moments.
pub fn step_drag_composed_with_moments(
    psi: &WaveFunction,
    pre: &Moments,
    params: &ModelParams,
    cfg: &StepConfig,
    dw: f64,
) -> Result<StepOutcome> {
    let inner_cfg = StepConfig {
        renormalize: false,
        ..*cfg
    };
    let plain = step_plain_with_moments(psi, pre, params, &inner_cfg, dw)?;
    let mut out = apply_drag_unitary(&plain.state, pre, params, dw);
    let norm_drift = plain.norm_drift;
    if cfg.renormalize {
        out.normalize();
    }
    out.check_leak(cfg.leak_tol)?;
    Ok(StepOutcome {
        state: out,
        norm_drift,
    })
}

/// Which stepper drives a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepperKind {
    Plain,
    DragCompact,
    DragComposed,
}

impl StepperKind {
    pub fn step_with_moments(
        self,
        psi: &WaveFunction,
        pre: &Moments,
        params: &ModelParams,
        cfg: &StepConfig,
        dw: f64,
    ) -> Result<StepOutcome> {
        match self {
            StepperKind::Plain => step_plain_with_moments(psi, pre, params, cfg, dw),
            StepperKind::DragCompact => step_drag_compact_with_moments(psi, pre, params, cfg, dw),
            StepperKind::DragComposed => {
                step_drag_composed_with_moments(psi, pre, params, cfg, dw)
            }
        }
    }

    pub fn is_drag(self) -> bool {
        matches!(self, StepperKind::DragCompact | StepperKind::DragComposed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{make_gaussian, make_soliton, soliton_energy, GaussianSpec};
    use crate::grid::{Grid, GridSpec};
    use crate::observables::moments_of;
    use std::sync::Arc;

    fn grid512() -> Arc<Grid> {
        Grid::new(GridSpec::new(512, -16.0, 16.0).unwrap()).unwrap()
    }

    fn gaussian(grid: &Arc<Grid>, c: f64, p0: f64, s2: f64, chirp: f64) -> WaveFunction {
        make_gaussian(
            &GaussianSpec {
                center: c,
                momentum: p0,
                sigma2: s2,
                chirp,
            },
            grid,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn noise_stream_is_reproducible() {
        let mut a = NoiseStream::new(42, 7);
        let mut b = NoiseStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_increment(0.01), b.next_increment(0.01));
        }
        assert_eq!(a.counter(), 100);
        let mut c = NoiseStream::new(42, 8);
        let different = (0..10).any(|_| a.next_increment(0.01) != c.next_increment(0.01));
        assert!(different, "distinct trajectories get distinct streams");
    }

    #[test]
    fn free_gaussian_spread_law() {
        // D = 0 → exact free evolution; σ²(t) = σ₀² + (ħ t / 2Mσ₀)².
        let params = ModelParams::natural(0.0).unwrap();
        let grid = grid512();
        let s0 = 0.5f64;
        let mut psi = gaussian(&grid, 0.0, 0.0, s0, 0.0);
        let cfg = StepConfig::new(0.01).unwrap();
        let mut noise = NoiseStream::new(1, 0);
        let steps = 100;
        for _ in 0..steps {
            let dw = noise.next_increment(cfg.dt);
            psi = step_plain(&psi, &params, &cfg, dw).unwrap();
        }
        let t = steps as f64 * cfg.dt;
        let expect = s0 + (t / (2.0 * s0.sqrt())).powi(2);
        let m = moments_of(&psi, &params).unwrap();
        assert!(
            (m.sigma2 - expect).abs() < 1e-9,
            "split-step free evolution is exact: {} vs {}",
            m.sigma2,
            expect
        );
    }

    #[test]
    fn per_step_trajectory_increments_match_laws() {
        // d⟨x⟩ = (⟨p⟩/M)dt + (σ²/ħ)√(8D) dW and d⟨p⟩ = R√(8D) dW, to O(dt).
        let params = ModelParams::natural(0.4).unwrap();
        let grid = grid512();
        let psi = gaussian(&grid, 0.3, 1.2, 0.7, 0.6);
        let pre = moments_of(&psi, &params).unwrap();
        let dt = 1e-4;
        let cfg = StepConfig::new(dt).unwrap();
        let sqrt8d = (8.0 * params.collapse_strength).sqrt();
        for z in [-1.7f64, -0.4, 0.0, 0.9, 2.1] {
            let dw = z * dt.sqrt();
            let post = moments_of(&step_plain(&psi, &params, &cfg, dw).unwrap(), &params).unwrap();
            let dx_pred = pre.mean_p / params.mass * dt + pre.sigma2 / params.hbar * sqrt8d * dw;
            let dp_pred = pre.corr_r * sqrt8d * dw;
            assert!(
                ((post.mean_x - pre.mean_x) - dx_pred).abs() < 20.0 * dt,
                "⟨x⟩ increment"
            );
            assert!(
                ((post.mean_p - pre.mean_p) - dp_pred).abs() < 20.0 * dt,
                "⟨p⟩ increment"
            );
        }
    }

    #[test]
    fn composed_equals_plain_without_collapse() {
        let params = ModelParams::natural(0.0).unwrap();
        let grid = grid512();
        let psi = gaussian(&grid, 0.0, 1.0, 0.6, 0.3);
        let cfg = StepConfig::new(1e-3).unwrap();
        let a = step_plain(&psi, &params, &cfg, 0.02).unwrap();
        let b = step_drag_composed(&psi, &params, &cfg, 0.02).unwrap();
        let diff: f64 = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-14, "drag vanishes at D = 0, diff = {diff:e}");
    }

    #[test]
    fn drag_unitary_is_unitary() {
        let params = ModelParams::natural(0.5).unwrap();
        let grid = grid512();
        let psi = gaussian(&grid, 0.5, -0.7, 0.9, 0.8);
        let pre = moments_of(&psi, &params).unwrap();
        let u = apply_drag_unitary(&psi, &pre, &params, 0.05);
        assert!(
            (u.norm_sq() - 1.0).abs() < 1e-10,
            "norm after drag unitary: {}",
            u.norm_sq()
        );
    }

    #[test]
    fn compact_step_on_soliton_is_global_phase() {
        let params = ModelParams::natural(0.125).unwrap();
        let grid = grid512();
        let psi = make_soliton(0.0, 0.0, &params, &grid).unwrap();
        let dt = 1e-4;
        let cfg = StepConfig::new(dt).unwrap();
        // Deterministic part only (dW = 0): pure phase at rate ħ²/(4Mσ∞²).
        let out = step_drag_compact(&psi, &params, &cfg, 0.0).unwrap();
        let ov = psi.inner(&out);
        assert!((ov.norm() - 1.0).abs() < 1e-8, "overlap magnitude {}", ov.norm());
        let expected_phase = -soliton_energy(&params).unwrap() * dt / params.hbar;
        assert!(
            (ov.arg() - expected_phase).abs() < 1e-7,
            "phase {} vs {}",
            ov.arg(),
            expected_phase
        );
        // And the stochastic term vanishes: a noisy step gives the same state.
        let noisy = step_drag_compact(&psi, &params, &cfg, 3.0 * dt.sqrt()).unwrap();
        let ov2 = out.inner(&noisy);
        assert!((ov2.norm() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn composed_soliton_cancels_stochastic_kick() {
        let params = ModelParams::natural(0.125).unwrap();
        let grid = grid512();
        let psi = make_soliton(0.0, 0.0, &params, &grid).unwrap();
        let pre = moments_of(&psi, &params).unwrap();
        let dt = 1e-4;
        let cfg = StepConfig::new(dt).unwrap();
        let dw = 2.0 * dt.sqrt();
        let post = moments_of(
            &step_drag_composed(&psi, &params, &cfg, dw).unwrap(),
            &params,
        )
        .unwrap();
        assert!(
            (post.mean_x - pre.mean_x).abs() < 10.0 * dt,
            "⟨x⟩ kick removed: {:e}",
            (post.mean_x - pre.mean_x).abs()
        );
        assert!(
            (post.mean_p - pre.mean_p).abs() < 10.0 * dt,
            "⟨p⟩ kick removed: {:e}",
            (post.mean_p - pre.mean_p).abs()
        );
    }

    #[test]
    fn composed_and_compact_agree_at_strong_order() {
        // Single-step difference on identical noise is O(dt^{3/2}); halving dt
        // shrinks it by ≈ 2√2.
        let params = ModelParams::natural(0.5).unwrap();
        let grid = grid512();
        let psi = gaussian(&grid, 0.2, 0.5, 0.8, 0.6);
        let pre = moments_of(&psi, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let zs: Vec<f64> = (0..48).map(|_| rng.sample(StandardNormal)).collect();
        let mean_diff = |dt: f64| -> f64 {
            let cfg = StepConfig::new(dt).unwrap();
            zs.iter()
                .map(|&z| {
                    let dw = z * dt.sqrt();
                    let a = step_drag_composed_with_moments(&psi, &pre, &params, &cfg, dw)
                        .unwrap()
                        .state;
                    let b = step_drag_compact_with_moments(&psi, &pre, &params, &cfg, dw)
                        .unwrap()
                        .state;
                    a.amplitudes()
                        .iter()
                        .zip(b.amplitudes())
                        .map(|(x, y)| (x - y).norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
                / zs.len() as f64
        };
        let d1 = mean_diff(2e-3);
        let d2 = mean_diff(1e-3);
        let ratio = d1 / d2;
        let target = 2.0 * std::f64::consts::SQRT_2;
        assert!(
            (ratio - target).abs() < 0.75,
            "difference contraction ratio {ratio} (want ≈ {target})"
        );
    }

    #[test]
    fn signal_record_contract() {
        let params = ModelParams::natural(0.5).unwrap();
        let m = Moments {
            mean_x: 1.25,
            mean_p: 0.0,
            sigma2: 1.0,
            corr_r: 0.0,
            mean_p2: 0.25,
        };
        // dW = 0 → x_t = ⟨x⟩.
        assert_eq!(record_signal(&m, 0.0, 1e-3, &params).unwrap(), 1.25);
        // D = 0 is an error.
        let free = ModelParams::natural(0.0).unwrap();
        assert!(record_signal(&m, 0.0, 1e-3, &free).is_err());
        // Var[(x_t − ⟨x⟩)·dt] = ħ²dt/(8D): direct variance of the Wiener term.
        let dt = 1e-3;
        let mut noise = NoiseStream::new(5, 0);
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let dw = noise.next_increment(dt);
            let x = record_signal(&m, dw, dt, &params).unwrap();
            acc += ((x - m.mean_x) * dt).powi(2);
        }
        let var = acc / n as f64;
        let expect = params.hbar * params.hbar * dt / (8.0 * params.collapse_strength);
        assert!(
            (var - expect).abs() < 0.05 * expect,
            "signal variance {var:e} vs {expect:e}"
        );
    }

    #[test]
    fn stability_bound_enforced_for_euler() {
        let params = ModelParams::natural(0.1).unwrap();
        let grid = grid512();
        let psi = gaussian(&grid, 0.0, 0.0, 0.5, 0.0);
        let dx = grid.dx();
        let bad = StepConfig::new(dx * dx * 2.0)
            .unwrap()
            .with_scheme(Scheme::EulerMaruyama);
        assert!(matches!(
            step_plain(&psi, &params, &bad, 0.0),
            Err(SimError::Unstable { .. })
        ));
        // Same dt is fine for the split-step scheme.
        let ok = StepConfig::new(dx * dx * 2.0).unwrap();
        assert!(step_plain(&psi, &params, &ok, 0.0).is_ok());
    }

    #[test]
    fn expected_norm_drift_is_second_order() {
        // E[‖ψ'‖²] − 1 = O(dt²): the Itô compensator cancels the O(dt) part in
        // expectation. Three-point Gauss-Hermite is exact here up to the
        // quartic dW-terms of the Milstein update.
        let params = ModelParams::natural(0.5).unwrap();
        let grid = grid512();
        let psi = gaussian(&grid, 0.1, 0.4, 0.7, 0.5);
        let pre = moments_of(&psi, &params).unwrap();
        let nodes = [-(3.0f64).sqrt(), 0.0, (3.0f64).sqrt()];
        let weights = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
        for stepper in [StepperKind::Plain, StepperKind::DragCompact] {
            for scheme in [Scheme::SplitStepEm, Scheme::EulerMaruyama] {
                let drift = |dt: f64| -> f64 {
                    let cfg = StepConfig::new(dt)
                        .unwrap()
                        .with_scheme(scheme)
                        .with_renormalize(false);
                    nodes
                        .iter()
                        .zip(weights)
                        .map(|(&z, w)| {
                            let dw = z * dt.sqrt();
                            let out = stepper
                                .step_with_moments(&psi, &pre, &params, &cfg, dw)
                                .unwrap();
                            w * out.norm_drift
                        })
                        .sum()
                };
                let d1 = drift(4e-4);
                let d2 = drift(2e-4);
                let ratio = d1 / d2;
                assert!(
                    (ratio - 4.0).abs() < 0.2,
                    "{stepper:?}/{scheme:?}: expected-drift ratio {ratio} (want 4)"
                );
            }
        }
    }
}
