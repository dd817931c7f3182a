//! Dense integration of the position-decoherence master equation
//! `dρ/dt = −(i/ħ)[Ĥ,ρ] − (D/ħ²)[x̂,[x̂,ρ]]`, used as the noise-average
//! reference for the plain SSE, plus the instantaneous nonlinear generator of
//! the drag dynamics (valid on pure states only).

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::observables::moments_of;
use crate::operators::{
    apply_drag_lindblad, apply_drag_lindblad_adjoint, apply_total_drag_hamiltonian,
};
use crate::state::{hermitian_eigenvalues, DensityMatrix, ModelParams, WaveFunction};

/// Fixed-step RK4 configuration for the matrix ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterConfig {
    pub dt: f64,
}

impl MasterConfig {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::Params(format!("dt = {dt}, need dt > 0")));
        }
        Ok(MasterConfig { dt })
    }
}

const TRACE_DRIFT_LIMIT: f64 = 1e-9;

/// `Ĥ m` applied to the first index spectrally, column by column.
fn apply_h_left(m: &Array2<Complex64>, rho: &DensityMatrix, params: &ModelParams) -> Array2<Complex64> {
    let grid = rho.grid();
    let n = grid.n();
    let c = 0.5 / params.mass;
    let mut out = Array2::from_elem((n, n), Complex64::ZERO);
    let mut col = vec![Complex64::ZERO; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = m[[i, j]];
        }
        grid.forward(&mut col);
        for (v, &k) in col.iter_mut().zip(grid.wavenumbers()) {
            let p = params.hbar * k;
            *v *= c * p * p;
        }
        grid.inverse(&mut col);
        for i in 0..n {
            out[[i, j]] = col[i];
        }
    }
    out
}

/// Right-hand side of the master equation.
fn master_rhs(m: &Array2<Complex64>, rho: &DensityMatrix, params: &ModelParams) -> Array2<Complex64> {
    let grid = rho.grid();
    let n = grid.n();
    let xs = grid.positions();
    let hbar = params.hbar;
    let d = params.collapse_strength;

    // −(i/ħ)(Ĥm − mĤ); Ĥ is real-symmetric here, so mĤ = (Ĥ m†)†.
    let hm = apply_h_left(m, rho, params);
    let m_dag = Array2::from_shape_fn((n, n), |(i, j)| m[[j, i]].conj());
    let h_mdag = apply_h_left(&m_dag, rho, params);

    let iq = Complex64::new(0.0, -1.0 / hbar);
    let damp = d / (hbar * hbar);
    Array2::from_shape_fn((n, n), |(i, j)| {
        let comm = hm[[i, j]] - h_mdag[[j, i]].conj();
        let dx2 = (xs[i] - xs[j]) * (xs[i] - xs[j]);
        iq * comm - damp * dx2 * m[[i, j]]
    })
}

/// One RK4 step of the master equation. The result is re-symmetrized and the
/// trace rescaled; trace drift beyond 1e-9 per step is an error.
pub fn step_master(
    rho: &DensityMatrix,
    params: &ModelParams,
    cfg: &MasterConfig,
) -> Result<DensityMatrix> {
    let dt = cfg.dt;
    let m0 = rho.elements();
    let k1 = master_rhs(m0, rho, params);
    let m1 = m0 + &(&k1 * Complex64::new(0.5 * dt, 0.0));
    let k2 = master_rhs(&m1, rho, params);
    let m2 = m0 + &(&k2 * Complex64::new(0.5 * dt, 0.0));
    let k3 = master_rhs(&m2, rho, params);
    let m3 = m0 + &(&k3 * Complex64::new(dt, 0.0));
    let k4 = master_rhs(&m3, rho, params);

    let sixth = dt / 6.0;
    let n = rho.grid().n();
    let mut out = Array2::from_elem((n, n), Complex64::ZERO);
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = m0[[i, j]]
                + sixth * (k1[[i, j]] + 2.0 * k2[[i, j]] + 2.0 * k3[[i, j]] + k4[[i, j]]);
        }
    }
    // Re-symmetrize.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (out[[i, j]] + out[[j, i]].conj());
            out[[i, j]] = avg;
            out[[j, i]] = avg.conj();
        }
        out[[i, i]] = Complex64::new(out[[i, i]].re, 0.0);
    }
    let tr = out.diag().sum().re;
    let drift = (tr - 1.0).abs();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(SimError::TraceDrift {
            drift,
            limit: TRACE_DRIFT_LIMIT,
        });
    }
    let scale = Complex64::new(1.0 / tr, 0.0);
    out.mapv_inplace(|v| v * scale);
    DensityMatrix::new(rho.grid().clone(), out)
}

fn outer(u: &WaveFunction, v: &WaveFunction) -> Array2<Complex64> {
    let n = u.grid().n();
    let dx = u.grid().dx();
    let ua = u.amplitudes();
    let va = v.amplitudes();
    Array2::from_shape_fn((n, n), |(i, j)| ua[i] * va[j].conj() * dx)
}

/// Instantaneous `dρ/dt` of the drag dynamics at `ρ = |ψ⟩⟨ψ|`, with `Ĥ_ψ` and
/// `Â_c` built from `ψ`.
///
/// Only valid at this single instant while the state is pure; iterating it on
/// mixed states is not a law of the model and is deliberately not provided.
pub fn nonlinear_generator(psi: &WaveFunction, params: &ModelParams) -> Result<DensityMatrix> {
    let m = moments_of(psi, params)?;
    let hbar = params.hbar;
    let d = params.collapse_strength;

    let h_psi = apply_total_drag_hamiltonian(psi, &m, params);
    let a_psi = apply_drag_lindblad(psi, &m, params);
    let n_psi = apply_drag_lindblad_adjoint(&a_psi, &m, params);

    // −(i/ħ)(|h⟩⟨ψ| − |ψ⟩⟨h|) + (2D/ħ²)(|a⟩⟨a| − ½(|n⟩⟨ψ| + |ψ⟩⟨n|))
    let iq = Complex64::new(0.0, -1.0 / hbar);
    let lam = 2.0 * d / (hbar * hbar);
    let t1 = outer(&h_psi, psi);
    let t2 = outer(psi, &h_psi);
    let t3 = outer(&a_psi, &a_psi);
    let t4 = outer(&n_psi, psi);
    let t5 = outer(psi, &n_psi);
    let n = psi.grid().n();
    let out = Array2::from_shape_fn((n, n), |(i, j)| {
        iq * (t1[[i, j]] - t2[[i, j]]) + lam * (t3[[i, j]] - 0.5 * (t4[[i, j]] + t5[[i, j]]))
    });
    DensityMatrix::new(psi.grid().clone(), out)
}

/// Dense matrix of an operator given by its action on amplitude vectors.
pub fn dense_operator<F>(grid: &std::sync::Arc<crate::grid::Grid>, apply: F) -> Array2<Complex64>
where
    F: Fn(&WaveFunction) -> WaveFunction,
{
    let n = grid.n();
    let mut out = Array2::from_elem((n, n), Complex64::ZERO);
    for j in 0..n {
        let mut amp = Array1::from_elem(n, Complex64::ZERO);
        amp[j] = Complex64::new(1.0, 0.0);
        let col = apply(&WaveFunction::raw(grid.clone(), amp));
        for i in 0..n {
            out[[i, j]] = col.amplitudes()[i];
        }
    }
    out
}

/// Lindblad-form integrator with generators frozen from one pure state.
///
/// Iterating the drag generator as if it were a closed master equation is
/// exactly what the model does *not* license; this integrator exists to show
/// the resulting ensemble departs from the trajectory average.
pub struct FrozenDragMaster {
    h_total: Array2<Complex64>,
    lindblad: Array2<Complex64>,
    params: ModelParams,
}

impl FrozenDragMaster {
    /// Freezes `Ĥ + Ĥ_ψ` and `Â_c` from `ψ`.
    pub fn freeze(psi: &WaveFunction, params: &ModelParams) -> Result<Self> {
        let m = moments_of(psi, params)?;
        let grid = psi.grid();
        let h_total = dense_operator(grid, |v| apply_total_drag_hamiltonian(v, &m, params));
        let lindblad = dense_operator(grid, |v| apply_drag_lindblad(v, &m, params));
        Ok(FrozenDragMaster {
            h_total,
            lindblad,
            params: *params,
        })
    }

    fn rhs(&self, m: &Array2<Complex64>) -> Array2<Complex64> {
        let hbar = self.params.hbar;
        let lam = 2.0 * self.params.collapse_strength / (hbar * hbar);
        let h = &self.h_total;
        let a = &self.lindblad;
        let a_dag = a.t().mapv(|v| v.conj());
        let comm = h.dot(m) - m.dot(h);
        let a_m_adag = a.dot(m).dot(&a_dag);
        let ada = a_dag.dot(a);
        let anti = ada.dot(m) + m.dot(&ada);
        let iq = Complex64::new(0.0, -1.0 / hbar);
        let mut out = comm.mapv(|v| iq * v);
        out.zip_mut_with(&a_m_adag, |o, v| *o += lam * v);
        out.zip_mut_with(&anti, |o, v| *o -= 0.5 * lam * v);
        out
    }

    /// One RK4 step of the frozen Lindblad equation.
    pub fn step(&self, rho: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
        let m0 = rho.elements();
        let k1 = self.rhs(m0);
        let k2 = self.rhs(&(m0 + &(&k1 * Complex64::new(0.5 * dt, 0.0))));
        let k3 = self.rhs(&(m0 + &(&k2 * Complex64::new(0.5 * dt, 0.0))));
        let k4 = self.rhs(&(m0 + &(&k3 * Complex64::new(dt, 0.0))));
        let sixth = Complex64::new(dt / 6.0, 0.0);
        let mut out = m0.clone();
        out.zip_mut_with(&k1, |o, v| *o += sixth * v);
        out.zip_mut_with(&k2, |o, v| *o += sixth * 2.0 * v);
        out.zip_mut_with(&k3, |o, v| *o += sixth * 2.0 * v);
        out.zip_mut_with(&k4, |o, v| *o += sixth * v);
        let tr = out.diag().sum().re;
        out.mapv_inplace(|v| v / tr);
        DensityMatrix::new(rho.grid().clone(), out)
    }
}

/// Trace distance `½‖ρ₁ − ρ₂‖₁` (half the sum of absolute eigenvalues of the
/// difference).
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if !a.grid().same_grid(b.grid()) {
        return Err(SimError::GridMismatch(
            "trace distance across different grids".into(),
        ));
    }
    let n = a.grid().n();
    let diff = Array2::from_shape_fn((n, n), |(i, j)| a.elements()[[i, j]] - b.elements()[[i, j]]);
    let ev = hermitian_eigenvalues(&diff);
    Ok(0.5 * ev.iter().map(|v| v.abs()).sum::<f64>())
}

/// Distance between an ensemble-average state and a master-equation solution.
pub fn compare_ensemble_to_master(
    ensemble_mean: &DensityMatrix,
    master: &DensityMatrix,
) -> Result<f64> {
    trace_distance(ensemble_mean, master)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{make_gaussian, GaussianSpec};
    use crate::grid::{Grid, GridSpec};
    use crate::observables::moments_of_density;
    use crate::sse::propagate_free;
    use crate::state::pure_to_density;
    use std::sync::Arc;

    fn grid(n: usize, half: f64) -> Arc<Grid> {
        Grid::new(GridSpec::new(n, -half, half).unwrap()).unwrap()
    }

    fn gaussian(g: &Arc<Grid>, c: f64, p0: f64, s2: f64, chirp: f64) -> WaveFunction {
        make_gaussian(
            &GaussianSpec {
                center: c,
                momentum: p0,
                sigma2: s2,
                chirp,
            },
            g,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn free_master_matches_unitary_evolution() {
        let params = ModelParams::natural(0.0).unwrap();
        let g = grid(64, 10.0);
        let psi = gaussian(&g, 0.0, 1.0, 0.8, 0.0);
        let mut rho = pure_to_density(&psi).unwrap();
        let cfg = MasterConfig::new(1e-3).unwrap();
        let steps = 200;
        for _ in 0..steps {
            rho = step_master(&rho, &params, &cfg).unwrap();
        }
        let t = steps as f64 * cfg.dt;
        let psi_t = {
            let mut p = propagate_free(&psi, &params, t);
            p.normalize();
            p
        };
        let rho_ref = pure_to_density(&psi_t).unwrap();
        let d = trace_distance(&rho, &rho_ref).unwrap();
        assert!(d < 1e-8, "RK4 vs exact unitary distance {d:e}");
    }

    #[test]
    fn energy_gain_rate_is_2d_exactly() {
        // tr(p̂²ρ) grows at exactly 2D under the master flow (the double
        // commutator yields it identically), so RK4 integrates it exactly.
        let params = ModelParams::natural(0.35).unwrap();
        let g = grid(64, 10.0);
        let psi = gaussian(&g, 0.4, 0.5, 0.6, 0.4);
        let mut rho = pure_to_density(&psi).unwrap();
        let e0 = moments_of_density(&rho, &params).unwrap().mean_p2;
        let cfg = MasterConfig::new(2e-3).unwrap();
        let steps = 100;
        for _ in 0..steps {
            rho = step_master(&rho, &params, &cfg).unwrap();
        }
        let t = steps as f64 * cfg.dt;
        let e1 = moments_of_density(&rho, &params).unwrap().mean_p2;
        let rate = (e1 - e0) / t;
        let expect = 2.0 * params.collapse_strength;
        assert!(
            (rate - expect).abs() < 1e-8,
            "energy gain rate {rate} vs 2D = {expect}"
        );
    }

    #[test]
    fn collapse_term_preserves_position_diagonal() {
        // With a huge mass the Hamiltonian flow is negligible and the collapse
        // term alone must leave ρ(x,x) untouched.
        let params = ModelParams::new(1e9, 0.5, 1.0).unwrap();
        let g = grid(64, 10.0);
        let psi = gaussian(&g, -0.5, 0.0, 0.7, 0.0);
        let rho0 = pure_to_density(&psi).unwrap();
        let cfg = MasterConfig::new(1e-3).unwrap();
        let rho1 = step_master(&rho0, &params, &cfg).unwrap();
        for j in 0..g.n() {
            let d = (rho1.elements()[[j, j]] - rho0.elements()[[j, j]]).norm();
            assert!(d < 1e-12, "diagonal moved by {d:e}");
        }
    }

    #[test]
    fn nonlinear_generator_contracts() {
        let params = ModelParams::natural(0.25).unwrap();
        let g = grid(128, 12.0);
        // Real Gaussian: R = 0 → tr(p̂² dρ/dt) = 2D.
        let psi = gaussian(&g, 0.0, 0.0, 0.9, 0.0);
        let gen = nonlinear_generator(&psi, &params).unwrap();
        assert!(gen.trace().norm() < 1e-9, "generator is traceless");
        assert!(gen.hermiticity_error() < 1e-10, "generator is Hermitian");
        let p2 = dense_operator(&g, |v| v.apply_momentum(crate::state::OperatorPower::Second, 1.0));
        let mut rate = Complex64::ZERO;
        for i in 0..g.n() {
            for j in 0..g.n() {
                rate += p2[[i, j]] * gen.elements()[[j, i]];
            }
        }
        let expect = 2.0 * params.collapse_strength;
        assert!(
            (rate.re - expect).abs() < 1e-8,
            "tr(p̂² dρ/dt) = {} vs 2D = {}",
            rate.re,
            expect
        );
        assert!(rate.im.abs() < 1e-10);

        // Chirped Gaussian: rate = 2D(1 − 4R²).
        let psi = gaussian(&g, 0.0, 0.6, 0.9, 0.8);
        let m = crate::observables::moments_of(&psi, &params).unwrap();
        let gen = nonlinear_generator(&psi, &params).unwrap();
        let mut rate = Complex64::ZERO;
        for i in 0..g.n() {
            for j in 0..g.n() {
                rate += p2[[i, j]] * gen.elements()[[j, i]];
            }
        }
        let expect = 2.0 * params.collapse_strength * (1.0 - 4.0 * m.corr_r * m.corr_r);
        assert!(
            (rate.re - expect).abs() < 1e-8,
            "tr(p̂² dρ/dt) = {} vs 2D(1−4R²) = {}",
            rate.re,
            expect
        );
    }

    #[test]
    fn trace_distance_basics() {
        // For pure states the trace distance is exactly √(1 − |⟨a|b⟩|²).
        let g = grid(64, 10.0);
        let pa = gaussian(&g, -2.0, 0.0, 0.5, 0.0);
        let pb = gaussian(&g, 2.0, 0.3, 0.5, 0.0);
        let a = pure_to_density(&pa).unwrap();
        let b = pure_to_density(&pb).unwrap();
        assert!(trace_distance(&a, &a).unwrap() < 1e-12);
        let d = trace_distance(&a, &b).unwrap();
        let expect = (1.0 - pa.inner(&pb).norm_sqr()).sqrt();
        assert!(
            (d - expect).abs() < 1e-9,
            "trace distance {d} vs pure-state formula {expect}"
        );
    }
}
