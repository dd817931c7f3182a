//! Operator actions built from the centered position and momentum: the
//! drag "Lindbladian" `Â_c`, the state-dependent Hamiltonian `Ĥ_ψ` and the
//! correlation operator `R̂`.
//!
//! All functions take the state's [`Moments`] explicitly so steppers can
//! evaluate every coefficient on the pre-step state (Itô convention).

use ndarray::Array1;
use num_complex::Complex64;

use crate::observables::Moments;
use crate::state::{ModelParams, WaveFunction};

/// `(x̂ − ⟨x⟩) ψ`.
pub fn apply_centered_position(psi: &WaveFunction, mean_x: f64) -> WaveFunction {
    let amp = Array1::from_iter(
        psi.amplitudes()
            .iter()
            .zip(psi.grid().positions())
            .map(|(a, &x)| a * (x - mean_x)),
    );
    WaveFunction::raw(psi.grid().clone(), amp)
}

/// `(p̂ − ⟨p⟩) ψ` applied spectrally.
pub fn apply_centered_momentum(psi: &WaveFunction, mean_p: f64, hbar: f64) -> WaveFunction {
    let grid = psi.grid();
    let mut buf: Vec<Complex64> = psi.amplitudes().to_vec();
    grid.forward(&mut buf);
    for (v, &k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *v *= hbar * k - mean_p;
    }
    grid.inverse(&mut buf);
    WaveFunction::raw(grid.clone(), Array1::from_vec(buf))
}

/// Free Hamiltonian action `Ĥψ = p̂²ψ / 2M`.
pub fn apply_free_hamiltonian(psi: &WaveFunction, params: &ModelParams) -> WaveFunction {
    let grid = psi.grid();
    let mut buf: Vec<Complex64> = psi.amplitudes().to_vec();
    grid.forward(&mut buf);
    let c = 0.5 / params.mass;
    for (v, &k) in buf.iter_mut().zip(grid.wavenumbers()) {
        let p = params.hbar * k;
        *v *= c * p * p;
    }
    grid.inverse(&mut buf);
    WaveFunction::raw(grid.clone(), Array1::from_vec(buf))
}

/// Correlation operator `R̂ψ = ħ⁻¹ · ½ (x_c p_c + p_c x_c) ψ`.
///
/// The symmetric ordering is forced by Hermiticity of `Ĥ_ψ`.
pub fn apply_corr_operator(psi: &WaveFunction, m: &Moments, params: &ModelParams) -> WaveFunction {
    let hbar = params.hbar;
    let pc = apply_centered_momentum(psi, m.mean_p, hbar);
    let x_pc = apply_centered_position(&pc, m.mean_x);
    let xc = apply_centered_position(psi, m.mean_x);
    let p_xc = apply_centered_momentum(&xc, m.mean_p, hbar);
    let amp = Array1::from_iter(
        x_pc.amplitudes()
            .iter()
            .zip(p_xc.amplitudes())
            .map(|(a, b)| (a + b) * (0.5 / hbar)),
    );
    WaveFunction::raw(psi.grid().clone(), amp)
}

/// Drag Lindbladian `Â_c ψ = (x_c − 2i[R x_c − ħ⁻¹σ² p_c]) ψ`.
pub fn apply_drag_lindblad(psi: &WaveFunction, m: &Moments, params: &ModelParams) -> WaveFunction {
    apply_drag_combination(psi, m, params, false)
}

/// Adjoint `Â_c† ψ = (x_c + 2i[R x_c − ħ⁻¹σ² p_c]) ψ`.
pub fn apply_drag_lindblad_adjoint(
    psi: &WaveFunction,
    m: &Moments,
    params: &ModelParams,
) -> WaveFunction {
    apply_drag_combination(psi, m, params, true)
}

fn apply_drag_combination(
    psi: &WaveFunction,
    m: &Moments,
    params: &ModelParams,
    adjoint: bool,
) -> WaveFunction {
    let hbar = params.hbar;
    let sign = if adjoint { 1.0 } else { -1.0 };
    // coefficient of x_c: 1 ∓ 2iR; coefficient of p_c: ± 2iσ²/ħ
    let cx = Complex64::new(1.0, sign * 2.0 * m.corr_r);
    let cp = Complex64::new(0.0, -sign * 2.0 * m.sigma2 / hbar);
    let xc = apply_centered_position(psi, m.mean_x);
    let pc = apply_centered_momentum(psi, m.mean_p, hbar);
    let amp = Array1::from_iter(
        xc.amplitudes()
            .iter()
            .zip(pc.amplitudes())
            .map(|(a, b)| cx * a + cp * b),
    );
    WaveFunction::raw(psi.grid().clone(), amp)
}

/// State-dependent drag Hamiltonian
/// `Ĥ_ψ ψ = (4D/ħ)(R x_c² − σ² R̂) ψ`.
pub fn apply_drag_hamiltonian(psi: &WaveFunction, m: &Moments, params: &ModelParams) -> WaveFunction {
    let d = params.collapse_strength;
    let hbar = params.hbar;
    let pref = 4.0 * d / hbar;
    let r_psi = apply_corr_operator(psi, m, params);
    let xs = psi.grid().positions();
    let amp = Array1::from_iter(
        psi.amplitudes()
            .iter()
            .zip(r_psi.amplitudes())
            .zip(xs)
            .map(|((a, r), &x)| {
                let xc = x - m.mean_x;
                pref * (m.corr_r * xc * xc * a - m.sigma2 * r)
            }),
    );
    WaveFunction::raw(psi.grid().clone(), amp)
}

/// `(Ĥ + Ĥ_ψ) ψ`.
pub fn apply_total_drag_hamiltonian(
    psi: &WaveFunction,
    m: &Moments,
    params: &ModelParams,
) -> WaveFunction {
    let h = apply_free_hamiltonian(psi, params);
    let hp = apply_drag_hamiltonian(psi, m, params);
    let amp = Array1::from_iter(
        h.amplitudes()
            .iter()
            .zip(hp.amplitudes())
            .map(|(a, b)| a + b),
    );
    WaveFunction::raw(psi.grid().clone(), amp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{make_gaussian, soliton_constants, GaussianSpec};
    use crate::grid::{Grid, GridSpec};
    use crate::observables::moments_of;
    use crate::state::ModelParams;

    #[test]
    fn lindblad_annihilates_soliton() {
        let params = ModelParams::natural(0.125).unwrap();
        let grid = Grid::new(GridSpec::new(256, -12.0, 12.0).unwrap()).unwrap();
        let (s2, _) = soliton_constants(&params).unwrap();
        let psi = make_gaussian(
            &GaussianSpec {
                center: 0.0,
                momentum: 0.0,
                sigma2: s2,
                chirp: 1.0,
            },
            &grid,
            params.hbar,
        )
        .unwrap();
        let m = moments_of(&psi, &params).unwrap();
        let a_psi = apply_drag_lindblad(&psi, &m, &params);
        assert!(
            a_psi.norm_sq().sqrt() < 1e-8,
            "Â_c kills the soliton, ‖Â_cψ‖ = {:e}",
            a_psi.norm_sq().sqrt()
        );
    }

    #[test]
    fn adjoint_is_adjoint() {
        let params = ModelParams::natural(0.3).unwrap();
        let grid = Grid::new(GridSpec::new(256, -12.0, 12.0).unwrap()).unwrap();
        let psi = make_gaussian(
            &GaussianSpec {
                center: 0.4,
                momentum: 1.0,
                sigma2: 0.7,
                chirp: 0.5,
            },
            &grid,
            params.hbar,
        )
        .unwrap();
        let phi = make_gaussian(
            &GaussianSpec {
                center: -0.6,
                momentum: -0.3,
                sigma2: 1.1,
                chirp: -0.2,
            },
            &grid,
            params.hbar,
        )
        .unwrap();
        let m = moments_of(&psi, &params).unwrap();
        let lhs = phi.inner(&apply_drag_lindblad(&psi, &m, &params));
        let rhs = apply_drag_lindblad_adjoint(&phi, &m, &params).inner(&psi);
        assert!((lhs - rhs).norm() < 1e-10, "⟨φ|Âψ⟩ = ⟨Â†φ|ψ⟩");
    }

    #[test]
    fn drag_hamiltonian_is_hermitian() {
        let params = ModelParams::natural(0.3).unwrap();
        let grid = Grid::new(GridSpec::new(256, -12.0, 12.0).unwrap()).unwrap();
        let psi = make_gaussian(
            &GaussianSpec {
                center: 0.2,
                momentum: 0.5,
                sigma2: 0.9,
                chirp: 0.8,
            },
            &grid,
            params.hbar,
        )
        .unwrap();
        let m = moments_of(&psi, &params).unwrap();
        let h_psi = apply_drag_hamiltonian(&psi, &m, &params);
        let exp = psi.inner(&h_psi);
        assert!(exp.im.abs() < 1e-10, "⟨Ĥ_ψ⟩ must be real, got {exp}");
    }
}
