//! Pure states and density matrices on the grid, with position and momentum
//! operator actions.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::grid::Grid;

/// Norm tolerance enforced after every public operation on normalized states.
pub const NORM_TOL: f64 = 1e-9;
/// Default boundary-mass tolerance.
pub const DEFAULT_LEAK_TOL: f64 = 1e-6;
/// Dense (density-matrix) operations are capped at this grid size.
pub const DENSE_GRID_CAP: usize = 256;

/// Physical parameters: mass `M`, collapse strength `D` and `ħ`.
///
/// `D` carries units of momentum²/time; the collapse terms of the SSE are
/// `-(D/ħ²) x_c² dt + (√(2D)/ħ) x_c dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mass: f64,
    pub collapse_strength: f64,
    pub hbar: f64,
}

impl ModelParams {
    pub fn new(mass: f64, collapse_strength: f64, hbar: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(SimError::Params(format!("mass M = {mass}, need M > 0")));
        }
        if !(collapse_strength >= 0.0) || !collapse_strength.is_finite() {
            return Err(SimError::Params(format!(
                "collapse strength D = {collapse_strength}, need D >= 0"
            )));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(SimError::Params(format!("hbar = {hbar}, need hbar > 0")));
        }
        Ok(ModelParams {
            mass,
            collapse_strength,
            hbar,
        })
    }

    /// Natural units `ħ = M = 1` with free `D`.
    pub fn natural(collapse_strength: f64) -> Result<Self> {
        ModelParams::new(1.0, collapse_strength, 1.0)
    }
}

/// Which power of an operator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorPower {
    First,
    Second,
}

impl OperatorPower {
    fn exponent(self) -> i32 {
        match self {
            OperatorPower::First => 1,
            OperatorPower::Second => 2,
        }
    }
}

/// A pure state: complex amplitudes `ψ(x_j)` on the grid, normalized so that
/// `Σ_j |ψ_j|² dx = 1`.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    grid: Arc<Grid>,
    amp: Array1<Complex64>,
}

impl WaveFunction {
    /// Wraps raw amplitudes, requiring them to be normalized within
    /// [`NORM_TOL`].
    pub fn new(grid: Arc<Grid>, amp: Array1<Complex64>) -> Result<Self> {
        if amp.len() != grid.n() {
            return Err(SimError::GridMismatch(format!(
                "amplitude length {} vs grid {}",
                amp.len(),
                grid.n()
            )));
        }
        let wf = WaveFunction { grid, amp };
        let n2 = wf.norm_sq();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(SimError::NotNormalized {
                norm_sq: n2,
                min: 1.0 - NORM_TOL,
                max: 1.0 + NORM_TOL,
            });
        }
        Ok(wf)
    }

    /// Wraps raw amplitudes and normalizes them.
    pub fn from_unnormalized(grid: Arc<Grid>, amp: Array1<Complex64>) -> Result<Self> {
        if amp.len() != grid.n() {
            return Err(SimError::GridMismatch(format!(
                "amplitude length {} vs grid {}",
                amp.len(),
                grid.n()
            )));
        }
        let mut wf = WaveFunction { grid, amp };
        wf.normalize();
        Ok(wf)
    }

    /// Operator actions produce unnormalized vectors; this constructor skips
    /// the norm check on purpose.
    pub(crate) fn raw(grid: Arc<Grid>, amp: Array1<Complex64>) -> Self {
        WaveFunction { grid, amp }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amp
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut Array1<Complex64> {
        &mut self.amp
    }

    pub fn norm_sq(&self) -> f64 {
        let dx = self.grid.dx();
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            let inv = Complex64::new(1.0 / n, 0.0);
            self.amp.mapv_inplace(|a| a * inv);
        }
    }

    /// `⟨self|other⟩` with the `dx` measure.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        let dx = self.grid.dx();
        self.amp
            .iter()
            .zip(other.amp.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * dx
    }

    /// Probability mass inside the boundary band (outermost n/16 points on
    /// each side).
    pub fn boundary_mass(&self) -> f64 {
        let band = self.grid.edge_band();
        let n = self.grid.n();
        let dx = self.grid.dx();
        let mut s = 0.0;
        for j in 0..band {
            s += self.amp[j].norm_sqr() + self.amp[n - 1 - j].norm_sqr();
        }
        s * dx
    }

    /// Errors if the boundary band holds more probability than `tol`.
    pub fn check_leak(&self, tol: f64) -> Result<()> {
        let mass = self.boundary_mass();
        if mass > tol {
            Err(SimError::BoundaryLeak { mass, limit: tol })
        } else {
            Ok(())
        }
    }

    /// `x̂ψ` or `x̂²ψ` by pointwise multiplication. The result is an operator
    /// action, not a state, so it is not normalized.
    pub fn apply_position(&self, power: OperatorPower) -> WaveFunction {
        let xs = self.grid.positions();
        let e = power.exponent();
        let amp = Array1::from_iter(
            self.amp
                .iter()
                .zip(xs)
                .map(|(a, &x)| a * x.powi(e)),
        );
        WaveFunction::raw(self.grid.clone(), amp)
    }

    /// `p̂ψ` or `p̂²ψ` applied spectrally: exact for band-limited states on the
    /// periodic grid.
    pub fn apply_momentum(&self, power: OperatorPower, hbar: f64) -> WaveFunction {
        let mut buf: Vec<Complex64> = self.amp.to_vec();
        self.grid.forward(&mut buf);
        let e = power.exponent();
        for (v, &k) in buf.iter_mut().zip(self.grid.wavenumbers()) {
            *v *= (hbar * k).powi(e);
        }
        self.grid.inverse(&mut buf);
        WaveFunction::raw(self.grid.clone(), Array1::from_vec(buf))
    }

    /// Momentum-space amplitudes `φ(k_m)` normalized so `Σ |φ|² dk = Σ |ψ|² dx`.
    pub fn momentum_spectrum(&self) -> Array1<Complex64> {
        let mut buf: Vec<Complex64> = self.amp.to_vec();
        self.grid.forward(&mut buf);
        let scale = self.grid.dx() / (2.0 * std::f64::consts::PI).sqrt();
        Array1::from_iter(buf.into_iter().map(|v| v * scale))
    }
}

/// Density matrix `ρ_{jk} = ρ(x_j, x_k) dx`, so `trace = Σ_j ρ_jj`.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    grid: Arc<Grid>,
    elements: Array2<Complex64>,
}

impl DensityMatrix {
    pub fn new(grid: Arc<Grid>, elements: Array2<Complex64>) -> Result<Self> {
        let n = grid.n();
        if elements.shape() != [n, n] {
            return Err(SimError::GridMismatch(format!(
                "matrix shape {:?} vs grid {}",
                elements.shape(),
                n
            )));
        }
        if n > DENSE_GRID_CAP {
            return Err(SimError::DenseGridTooLarge {
                got: n,
                max: DENSE_GRID_CAP,
            });
        }
        Ok(DensityMatrix { grid, elements })
    }

    pub(crate) fn raw(grid: Arc<Grid>, elements: Array2<Complex64>) -> Self {
        DensityMatrix { grid, elements }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn elements(&self) -> &Array2<Complex64> {
        &self.elements
    }


    pub fn trace(&self) -> Complex64 {
        self.elements.diag().sum()
    }

    /// `max_{jk} |ρ_{jk} - conj(ρ_{kj})|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.grid.n();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in j..n {
                let d = (self.elements[[j, k]] - self.elements[[k, j]].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// `tr ρ²`, which is 1 for pure states and < 1 for proper mixtures.
    pub fn purity(&self) -> f64 {
        let n = self.grid.n();
        let mut s = Complex64::ZERO;
        for j in 0..n {
            for k in 0..n {
                s += self.elements[[j, k]] * self.elements[[k, j]];
            }
        }
        s.re
    }

    /// Eigenvalues of the (Hermitian) matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.elements)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Eigenvalues of a Hermitian complex matrix, ascending.
pub(crate) fn hermitian_eigenvalues(m: &Array2<Complex64>) -> Vec<f64> {
    let n = m.nrows();
    let dm = nalgebra::DMatrix::from_fn(n, n, |r, c| m[[r, c]]);
    let sym = nalgebra::SymmetricEigen::new(dm);
    let mut ev: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// `|ψ⟩⟨ψ|` in the trace-one convention.
pub fn pure_to_density(psi: &WaveFunction) -> Result<DensityMatrix> {
    let n = psi.grid().n();
    if n > DENSE_GRID_CAP {
        return Err(SimError::DenseGridTooLarge {
            got: n,
            max: DENSE_GRID_CAP,
        });
    }
    let n2 = psi.norm_sq();
    if (n2 - 1.0).abs() > NORM_TOL {
        return Err(SimError::NotNormalized {
            norm_sq: n2,
            min: 1.0 - NORM_TOL,
            max: 1.0 + NORM_TOL,
        });
    }
    let dx = psi.grid().dx();
    let amp = psi.amplitudes();
    let elements = Array2::from_shape_fn((n, n), |(j, k)| amp[j] * amp[k].conj() * dx);
    Ok(DensityMatrix::raw(psi.grid().clone(), elements))
}

/// Convex combination of density matrices on the same grid.
pub fn mix(parts: &[(f64, &DensityMatrix)]) -> Result<DensityMatrix> {
    let (_, first) = parts
        .first()
        .ok_or_else(|| SimError::InsufficientData("mix of zero density matrices".into()))?;
    let grid = first.grid().clone();
    let n = grid.n();
    let mut elements = Array2::from_elem((n, n), Complex64::ZERO);
    for (w, rho) in parts {
        if !rho.grid().same_grid(&grid) {
            return Err(SimError::GridMismatch("mix across different grids".into()));
        }
        elements.zip_mut_with(rho.elements(), |e, r| *e += Complex64::new(*w, 0.0) * r);
    }
    Ok(DensityMatrix::raw(grid, elements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid64() -> Arc<Grid> {
        Grid::new(GridSpec::new(64, -8.0, 8.0).unwrap()).unwrap()
    }

    /// Narrow normalized peak at grid point closest to `x0`.
    fn peak_at(grid: &Arc<Grid>, x0: f64) -> WaveFunction {
        let mut amp = Array1::from_elem(grid.n(), Complex64::ZERO);
        let j = grid
            .positions()
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - x0).abs().partial_cmp(&(b.1 - x0).abs()).unwrap()
            })
            .unwrap()
            .0;
        amp[j] = Complex64::new(1.0, 0.0);
        WaveFunction::from_unnormalized(grid.clone(), amp).unwrap()
    }

    #[test]
    fn position_action_on_peak() {
        let grid = grid64();
        let psi = peak_at(&grid, 2.0);
        let xpsi = psi.apply_position(OperatorPower::First);
        let x2psi = psi.apply_position(OperatorPower::Second);
        // Eigenstate of position: amplitudes scaled by 2 and 4.
        for j in 0..grid.n() {
            assert!((xpsi.amplitudes()[j] - psi.amplitudes()[j] * 2.0).norm() < 1e-12);
            assert!((x2psi.amplitudes()[j] - psi.amplitudes()[j] * 4.0).norm() < 1e-12);
        }
    }

    #[test]
    fn momentum_action_on_plane_wave() {
        let grid = grid64();
        let hbar = 1.0;
        let k0 = grid.wavenumbers()[3];
        let dx = grid.dx();
        let norm = (1.0 / (grid.n() as f64 * dx)).sqrt();
        let amp = Array1::from_iter(
            grid.positions()
                .iter()
                .map(|&x| Complex64::new(0.0, k0 * x).exp() * norm),
        );
        let psi = WaveFunction::new(grid.clone(), amp).unwrap();
        let ppsi = psi.apply_momentum(OperatorPower::First, hbar);
        for j in 0..grid.n() {
            assert!(
                (ppsi.amplitudes()[j] - psi.amplitudes()[j] * (hbar * k0)).norm() < 1e-10,
                "plane wave is a momentum eigenstate"
            );
        }
    }

    #[test]
    fn norm_check_rejects_unnormalized() {
        let grid = grid64();
        let amp = Array1::from_elem(grid.n(), Complex64::new(1.0, 0.0));
        assert!(matches!(
            WaveFunction::new(grid, amp),
            Err(SimError::NotNormalized { .. })
        ));
    }

    #[test]
    fn purity_of_pure_and_mixed() {
        let grid = grid64();
        let a = peak_at(&grid, -3.0);
        let b = peak_at(&grid, 3.0);
        let ra = pure_to_density(&a).unwrap();
        let rb = pure_to_density(&b).unwrap();
        assert!((ra.trace().re - 1.0).abs() < 1e-12);
        assert!((ra.purity() - 1.0).abs() < 1e-10);
        // Averaging projectors of orthogonal packets halves the purity.
        let m = mix(&[(0.5, &ra), (0.5, &rb)]).unwrap();
        assert!((m.purity() - 0.5).abs() < 1e-10);
        assert!(m.hermiticity_error() < 1e-12);
    }

    #[test]
    fn dense_cap_enforced() {
        let big = Grid::new(GridSpec::new(512, -8.0, 8.0).unwrap()).unwrap();
        let psi = peak_at(&big, 0.0);
        assert!(matches!(
            pure_to_density(&psi),
            Err(SimError::DenseGridTooLarge { .. })
        ));
    }
}
