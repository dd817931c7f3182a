//! Expectation values the trajectory equations are written in:
//! `⟨x⟩`, `⟨p⟩`, `σ² = ⟨x_c²⟩`, `R = ħ⁻¹ Re⟨x_c p_c⟩` and `⟨p²⟩`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::state::{DensityMatrix, ModelParams, WaveFunction, DEFAULT_LEAK_TOL};

/// First and second moments of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_p: f64,
    /// Position variance `σ² = ⟨x_c²⟩`.
    pub sigma2: f64,
    /// Position-momentum correlation `R = ħ⁻¹ Re⟨x_c p_c⟩`; 0 for real wave
    /// functions, 1/2 for the asymptotic soliton.
    pub corr_r: f64,
    pub mean_p2: f64,
}

impl Moments {
    /// Momentum variance `⟨p_c²⟩`.
    pub fn momentum_variance(&self) -> f64 {
        self.mean_p2 - self.mean_p * self.mean_p
    }

    pub fn kinetic_energy(&self, params: &ModelParams) -> f64 {
        0.5 * self.mean_p2 / params.mass
    }

    /// `σ²⟨p_c²⟩ − (ħ²/4)(1 + 4R²)`; non-negative (up to tolerance) by the
    /// Schrödinger-Robertson relation, zero for Gaussian states.
    pub fn robertson_deficit(&self, hbar: f64) -> f64 {
        self.sigma2 * self.momentum_variance()
            - 0.25 * hbar * hbar * (1.0 + 4.0 * self.corr_r * self.corr_r)
    }
}

/// Moments of a pure state with the default leak guard.
pub fn moments_of(psi: &WaveFunction, params: &ModelParams) -> Result<Moments> {
    moments_of_with_tol(psi, params, DEFAULT_LEAK_TOL)
}

/// Moments of a pure state; errors if the boundary band holds more than
/// `leak_tol` probability.
pub fn moments_of_with_tol(
    psi: &WaveFunction,
    params: &ModelParams,
    leak_tol: f64,
) -> Result<Moments> {
    psi.check_leak(leak_tol)?;
    let hbar = params.hbar;
    let grid = psi.grid();
    let dx = grid.dx();
    let amp = psi.amplitudes();

    let mut mean_x = 0.0;
    let mut mean_x2 = 0.0;
    for (a, &x) in amp.iter().zip(grid.positions()) {
        let w = a.norm_sqr();
        mean_x += w * x;
        mean_x2 += w * x * x;
    }
    mean_x *= dx;
    mean_x2 *= dx;

    // Momentum moments via Parseval: the spectrum carries weight |ψ̃|² dx / n.
    let mut buf: Vec<Complex64> = amp.to_vec();
    grid.forward(&mut buf);
    let wk = dx / grid.n() as f64;
    let mut mean_p = 0.0;
    let mut mean_p2 = 0.0;
    for (v, &k) in buf.iter().zip(grid.wavenumbers()) {
        let w = v.norm_sqr() * wk;
        let p = hbar * k;
        mean_p += w * p;
        mean_p2 += w * p * p;
    }

    // Re⟨ψ| x p ψ⟩ needs p̂ψ back in position space.
    for (v, &k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *v *= hbar * k;
    }
    grid.inverse(&mut buf);
    let mut xp = 0.0;
    for ((a, u), &x) in amp.iter().zip(buf.iter()).zip(grid.positions()) {
        xp += (a.conj() * u).re * x;
    }
    xp *= dx;

    let sigma2 = mean_x2 - mean_x * mean_x;
    let corr_r = (xp - mean_x * mean_p) / hbar;
    Ok(Moments {
        mean_x,
        mean_p,
        sigma2,
        corr_r,
        mean_p2,
    })
}

/// Expectation of the Hermitian correlation operator
/// `R̂ = ħ⁻¹ · ½(x_c p_c + p_c x_c)`; equals [`Moments::corr_r`] identically.
pub fn corr_operator_expectation(psi: &WaveFunction, params: &ModelParams) -> Result<f64> {
    let m = moments_of(psi, params)?;
    let r_psi = crate::operators::apply_corr_operator(psi, &m, params);
    Ok(psi.inner(&r_psi).re)
}

/// Moments of a density matrix, defined through traces.
pub fn moments_of_density(rho: &DensityMatrix, params: &ModelParams) -> Result<Moments> {
    let hbar = params.hbar;
    let grid = rho.grid();
    let n = grid.n();
    let xs = grid.positions();

    let mut mean_x = 0.0;
    let mut mean_x2 = 0.0;
    for j in 0..n {
        let w = rho.elements()[[j, j]].re;
        mean_x += w * xs[j];
        mean_x2 += w * xs[j] * xs[j];
    }

    // tr(p̂ ρ) and tr(p̂² ρ): apply p̂ to the first index of ρ column by column.
    let mut mean_p = Complex64::ZERO;
    let mut mean_p2 = Complex64::ZERO;
    let mut xp = Complex64::ZERO;
    let mut col = vec![Complex64::ZERO; n];
    for c in 0..n {
        for j in 0..n {
            col[j] = rho.elements()[[j, c]];
        }
        grid.forward(&mut col);
        for (v, &k) in col.iter_mut().zip(grid.wavenumbers()) {
            *v *= hbar * k;
        }
        grid.inverse(&mut col);
        // (p̂ρ)_{cc} contributes to tr(p̂ρ); x_c (p̂ρ)_{cc} to tr(x̂p̂ρ).
        mean_p += col[c];
        xp += xs[c] * col[c];
        // Second application for tr(p̂²ρ).
        grid.forward(&mut col);
        for (v, &k) in col.iter_mut().zip(grid.wavenumbers()) {
            *v *= hbar * k;
        }
        grid.inverse(&mut col);
        mean_p2 += col[c];
    }

    let sigma2 = mean_x2 - mean_x * mean_x;
    let corr_r = (xp.re - mean_x * mean_p.re) / hbar;
    Ok(Moments {
        mean_x,
        mean_p: mean_p.re,
        sigma2,
        corr_r,
        mean_p2: mean_p2.re,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{make_gaussian, GaussianSpec};
    use crate::grid::{Grid, GridSpec};
    use crate::state::pure_to_density;

    fn grid() -> std::sync::Arc<Grid> {
        Grid::new(GridSpec::new(256, -12.0, 12.0).unwrap()).unwrap()
    }

    #[test]
    fn real_gaussian_moments() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = grid();
        let spec = GaussianSpec {
            center: 1.5,
            momentum: 0.0,
            sigma2: 0.8,
            chirp: 0.0,
        };
        let psi = make_gaussian(&spec, &g, params.hbar).unwrap();
        let m = moments_of(&psi, &params).unwrap();
        assert!((m.mean_x - 1.5).abs() < 1e-9);
        assert!(m.mean_p.abs() < 1e-10, "real wave function has ⟨p⟩ = 0");
        assert!((m.sigma2 - 0.8).abs() < 1e-9);
        assert!(m.corr_r.abs() < 1e-10, "real wave function has R = 0");
        // ⟨p²⟩ = ħ²/4σ² for a real Gaussian.
        assert!((m.mean_p2 - 1.0 / (4.0 * 0.8)).abs() < 1e-9);
    }

    #[test]
    fn boosted_gaussian_gets_momentum() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = grid();
        let spec = GaussianSpec {
            center: 0.0,
            momentum: 2.5,
            sigma2: 0.5,
            chirp: 0.0,
        };
        let psi = make_gaussian(&spec, &g, params.hbar).unwrap();
        let m = moments_of(&psi, &params).unwrap();
        assert!((m.mean_p - 2.5).abs() < 1e-9, "boost shifts momentum");
        assert!((m.sigma2 - 0.5).abs() < 1e-9);
        assert!(m.corr_r.abs() < 1e-9);
    }

    #[test]
    fn soliton_correlation_is_one_half() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = grid();
        let (sigma2_inf, r_inf) = crate::analytic::soliton_constants(&params).unwrap();
        let spec = GaussianSpec {
            center: 0.0,
            momentum: 0.0,
            sigma2: sigma2_inf,
            chirp: 1.0,
        };
        let psi = make_gaussian(&spec, &g, params.hbar).unwrap();
        let m = moments_of(&psi, &params).unwrap();
        assert!((m.corr_r - r_inf).abs() < 1e-9);
        assert!((m.corr_r - 0.5).abs() < 1e-9);
    }

    #[test]
    fn density_path_matches_pure_path() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = Grid::new(GridSpec::new(128, -10.0, 10.0).unwrap()).unwrap();
        let spec = GaussianSpec {
            center: -0.7,
            momentum: 1.2,
            sigma2: 0.6,
            chirp: 0.4,
        };
        let psi = make_gaussian(&spec, &g, params.hbar).unwrap();
        let mp = moments_of(&psi, &params).unwrap();
        let rho = pure_to_density(&psi).unwrap();
        let md = moments_of_density(&rho, &params).unwrap();
        assert!((mp.mean_x - md.mean_x).abs() < 1e-10);
        assert!((mp.mean_p - md.mean_p).abs() < 1e-10);
        assert!((mp.sigma2 - md.sigma2).abs() < 1e-10);
        assert!((mp.corr_r - md.corr_r).abs() < 1e-10);
        assert!((mp.mean_p2 - md.mean_p2).abs() < 1e-10);
    }

    #[test]
    fn mixture_of_two_packets() {
        // Oracle: for an equal mixture of packets at ±a with spread σ²,
        // ⟨x⟩ = 0 and σ²_mix = a² + σ² by direct quadrature of the two
        // Gaussian densities.
        let params = ModelParams::natural(0.125).unwrap();
        let g = Grid::new(GridSpec::new(128, -10.0, 10.0).unwrap()).unwrap();
        let a = 2.0;
        let s2 = 0.4;
        let mk = |c: f64| {
            make_gaussian(
                &GaussianSpec {
                    center: c,
                    momentum: 0.0,
                    sigma2: s2,
                    chirp: 0.0,
                },
                &g,
                params.hbar,
            )
            .unwrap()
        };
        let rp = pure_to_density(&mk(a)).unwrap();
        let rm = pure_to_density(&mk(-a)).unwrap();
        let rho = crate::state::mix(&[(0.5, &rp), (0.5, &rm)]).unwrap();
        let m = moments_of_density(&rho, &params).unwrap();
        assert!(m.mean_x.abs() < 1e-9);
        assert!(m.mean_p.abs() < 1e-10, "zero momentum by symmetry");
        assert!((m.sigma2 - (a * a + s2)).abs() < 1e-6);
    }

    #[test]
    fn corr_operator_matches_moment_definition() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = grid();
        let spec = GaussianSpec {
            center: 0.3,
            momentum: -0.8,
            sigma2: 0.9,
            chirp: 0.7,
        };
        let psi = make_gaussian(&spec, &g, params.hbar).unwrap();
        let m = moments_of(&psi, &params).unwrap();
        let r_op = corr_operator_expectation(&psi, &params).unwrap();
        assert!(
            (r_op - m.corr_r).abs() < 1e-12,
            "⟨R̂⟩ = {} vs R = {}",
            r_op,
            m.corr_r
        );
    }
}
