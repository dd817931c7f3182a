//! Closed-form state constructors (chirped Gaussians, the asymptotic soliton,
//! cat states) and the operator identities behind the drag-frame dynamics as
//! executable residual checks.

use std::sync::Arc;

use ndarray::Array1;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::grid::Grid;
use crate::observables::{moments_of, Moments};
use crate::operators::{
    apply_centered_position, apply_drag_lindblad,
    apply_total_drag_hamiltonian,
};
use crate::state::{ModelParams, OperatorPower, WaveFunction};

/// Chirped Gaussian packet
/// `ψ(x) ∝ exp(−(1−ic)(x−x₀)²/4σ² + i p₀ x/ħ)`.
///
/// The asymptotic soliton is the member with `c = 1` and `σ² = σ∞²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub center: f64,
    pub momentum: f64,
    pub sigma2: f64,
    /// Dimensionless chirp `c`; the correlation of the packet is `R = c/2`.
    pub chirp: f64,
}

/// Superposition `α|branch1⟩ + β|branch2⟩` of two packets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatSpec {
    pub amp1: Complex64,
    pub amp2: Complex64,
    pub branch1: GaussianSpec,
    pub branch2: GaussianSpec,
}

/// Normalized Gaussian packet on the grid.
///
/// Requires the packet to fit: 6σ inside the domain and the momentum content
/// inside the spectral band.
pub fn make_gaussian(spec: &GaussianSpec, grid: &Arc<Grid>, hbar: f64) -> Result<WaveFunction> {
    if !(spec.sigma2 > 0.0) || !spec.sigma2.is_finite() {
        return Err(SimError::Fit(format!("sigma2 = {}, need > 0", spec.sigma2)));
    }
    let sigma = spec.sigma2.sqrt();
    let gs = grid.spec();
    if spec.center - 6.0 * sigma < gs.x_min || spec.center + 6.0 * sigma > gs.x_max {
        return Err(SimError::Fit(format!(
            "packet at {} with spread {} does not keep 6σ inside [{}, {}]",
            spec.center, sigma, gs.x_min, gs.x_max
        )));
    }
    let k_max = std::f64::consts::PI / grid.dx();
    let k_width = (1.0 + spec.chirp * spec.chirp).sqrt() / (2.0 * sigma);
    if (spec.momentum / hbar).abs() + 6.0 * k_width > k_max {
        return Err(SimError::Fit(format!(
            "momentum content {} + 6·{} exceeds the spectral band {}",
            spec.momentum / hbar,
            k_width,
            k_max
        )));
    }
    let a = Complex64::new(1.0, -spec.chirp) / (4.0 * spec.sigma2);
    let amp = Array1::from_iter(grid.positions().iter().map(|&x| {
        let dxc = x - spec.center;
        (-a * dxc * dxc + Complex64::new(0.0, spec.momentum * x / hbar)).exp()
    }));
    WaveFunction::from_unnormalized(grid.clone(), amp)
}

/// Stationary values of the soliton: `σ∞² = √(ħ³/8DM)` and `R∞ = 1/2`.
pub fn soliton_constants(params: &ModelParams) -> Result<(f64, f64)> {
    if params.collapse_strength <= 0.0 {
        return Err(SimError::ZeroCollapseStrength("soliton constants"));
    }
    let sigma2_inf =
        (params.hbar.powi(3) / (8.0 * params.collapse_strength * params.mass)).sqrt();
    Ok((sigma2_inf, 0.5))
}

/// Eigenvalue of `Ĥ + Ĥ_ψ` on the soliton: `ħ²/(4Mσ∞²)`.
pub fn soliton_energy(params: &ModelParams) -> Result<f64> {
    let (sigma2_inf, _) = soliton_constants(params)?;
    Ok(params.hbar * params.hbar / (4.0 * params.mass * sigma2_inf))
}

/// The traveling soliton: the standing solution boosted to momentum `p₀` and
/// shifted to `x₀` (Galilean covariance of the free SSE).
pub fn make_soliton(
    center: f64,
    momentum: f64,
    params: &ModelParams,
    grid: &Arc<Grid>,
) -> Result<WaveFunction> {
    let (sigma2_inf, _) = soliton_constants(params)?;
    make_gaussian(
        &GaussianSpec {
            center,
            momentum,
            sigma2: sigma2_inf,
            chirp: 1.0,
        },
        grid,
        params.hbar,
    )
}

/// Normalized cat state. For distant branches (separation > 6(σ₁+σ₂)) the
/// center of mass is verified to sit at `|α|²x₁ + |β|²x₂` up to 1e-8.
pub fn make_cat(spec: &CatSpec, grid: &Arc<Grid>, hbar: f64) -> Result<WaveFunction> {
    let w = (spec.amp1.norm_sqr() + spec.amp2.norm_sqr()).sqrt();
    if w == 0.0 {
        return Err(SimError::Fit("cat state with zero amplitudes".into()));
    }
    let (alpha, beta) = (spec.amp1 / w, spec.amp2 / w);
    if spec.amp2.norm_sqr() == 0.0 {
        return make_gaussian(&spec.branch1, grid, hbar);
    }
    if spec.amp1.norm_sqr() == 0.0 {
        return make_gaussian(&spec.branch2, grid, hbar);
    }
    let g1 = make_gaussian(&spec.branch1, grid, hbar)?;
    let g2 = make_gaussian(&spec.branch2, grid, hbar)?;
    let amp = Array1::from_iter(
        g1.amplitudes()
            .iter()
            .zip(g2.amplitudes())
            .map(|(a, b)| alpha * a + beta * b),
    );
    let cat = WaveFunction::from_unnormalized(grid.clone(), amp)?;

    let s1 = spec.branch1.sigma2.sqrt();
    let s2 = spec.branch2.sigma2.sqrt();
    let sep = (spec.branch2.center - spec.branch1.center).abs();
    if sep > 6.0 * (s1 + s2) {
        let expected =
            alpha.norm_sqr() * spec.branch1.center + beta.norm_sqr() * spec.branch2.center;
        let dx_mass = cat
            .amplitudes()
            .iter()
            .zip(grid.positions())
            .map(|(a, &x)| a.norm_sqr() * x)
            .sum::<f64>()
            * grid.dx();
        if (dx_mass - expected).abs() > 1e-8 {
            return Err(SimError::Fit(format!(
                "cat c.o.m. {} deviates from |α|²x₁+|β|²x₂ = {} by more than 1e-8",
                dx_mass, expected
            )));
        }
    }
    Ok(cat)
}

/// Random normalized superposition of a few Gaussian packets; used to check
/// the operator identities on generic smooth states.
pub fn random_superposition<R: Rng>(
    grid: &Arc<Grid>,
    hbar: f64,
    rng: &mut R,
) -> Result<WaveFunction> {
    let n_packets = rng.random_range(2..=4usize);
    let gs = grid.spec();
    let mut amp = Array1::from_elem(grid.n(), Complex64::ZERO);
    // Keep packets near the middle of the box: the identity checks involve
    // x²- and p²-weighted inner products whose float cancellation error grows
    // with the spatial extent of the superposition.
    let spread = 0.1 * (gs.x_max - gs.x_min).min(30.0);
    let mid = 0.5 * (gs.x_min + gs.x_max);
    for _ in 0..n_packets {
        let sigma2: f64 = rng.random_range(0.35..1.0);
        let center = rng.random_range(mid - spread..mid + spread);
        let momentum = rng.random_range(-1.5..1.5);
        let chirp = rng.random_range(-1.2..1.2);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let weight = rng.random_range(0.2..1.0);
        let g = make_gaussian(
            &GaussianSpec {
                center,
                momentum,
                sigma2,
                chirp,
            },
            grid,
            hbar,
        )?;
        let c = Complex64::from_polar(weight, phase);
        amp.zip_mut_with(g.amplitudes(), |a, b| *a += c * b);
    }
    WaveFunction::from_unnormalized(grid.clone(), amp)
}

/// Residuals of the operator identities behind the drag-frame proofs.
///
/// * `anticommutator`: `⟨{x_c, p̂}⟩ − 2ħR`
/// * `energy_gain`: `⟨2Â_c†p̂²Â_c − {Â_c†Â_c, p̂²}⟩ − [2ħ²(1+4R²) − 8σ²⟨p_c p̂⟩]`
/// * `x_noise`, `p_noise`: `⟨x̂Â_c + Â_c†x̂⟩` and `⟨p̂Â_c + Â_c†p̂⟩`
/// * `soliton_lindblad`, `soliton_eigen`: `‖Â_cψ‖` and
///   `‖(Ĥ+Ĥ_ψ)ψ − ħ²/(4Mσ∞²)·ψ‖`, meaningful when `ψ` is the soliton.
///
/// The first four vanish on *every* normalized state; the last two vanish on
/// the soliton only (and require `D > 0`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityReport {
    pub anticommutator: f64,
    pub energy_gain: f64,
    pub x_noise: f64,
    pub p_noise: f64,
    pub soliton_lindblad: Option<f64>,
    pub soliton_eigen: Option<f64>,
}

impl IdentityReport {
    /// Largest of the state-independent residuals (a)-(c).
    pub fn max_universal(&self) -> f64 {
        self.anticommutator
            .abs()
            .max(self.energy_gain.abs())
            .max(self.x_noise.abs())
            .max(self.p_noise.abs())
    }
}

/// Evaluates the identity residuals on `ψ`; see [`IdentityReport`].
pub fn check_appendix_identities(psi: &WaveFunction, params: &ModelParams) -> Result<IdentityReport> {
    let hbar = params.hbar;
    let m: Moments = moments_of(psi, params)?;

    let p_psi = psi.apply_momentum(OperatorPower::First, hbar);
    let p2_psi = psi.apply_momentum(OperatorPower::Second, hbar);
    let xc_psi = apply_centered_position(psi, m.mean_x);

    // (a) ⟨{x_c, p̂}⟩ = 2ħR
    let anti = 2.0 * xc_psi.inner(&p_psi).re;
    let anticommutator = anti - 2.0 * hbar * m.corr_r;

    // (b) ⟨2Â†p̂²Â − {Â†Â, p̂²}⟩ = 2ħ²(1+4R²) − 8σ²⟨p_c p̂⟩
    let a_psi = apply_drag_lindblad(psi, &m, params);
    let p2_a_psi = a_psi.apply_momentum(OperatorPower::Second, hbar);
    let a_p2_psi = apply_drag_lindblad(&p2_psi, &m, params);
    let lhs = 2.0 * a_psi.inner(&p2_a_psi).re - 2.0 * a_psi.inner(&a_p2_psi).re;
    let pc_p = m.mean_p2 - m.mean_p * m.mean_p; // ⟨p_c p̂⟩ = ⟨p_c²⟩
    let rhs = 2.0 * hbar * hbar * (1.0 + 4.0 * m.corr_r * m.corr_r) - 8.0 * m.sigma2 * pc_p;
    let energy_gain = lhs - rhs;

    // (c) ⟨x̂Â + Â†x̂⟩ = 0 and ⟨p̂Â + Â†p̂⟩ = 0
    let x_psi = psi.apply_position(OperatorPower::First);
    let x_noise = 2.0 * x_psi.inner(&a_psi).re;
    let p_noise = 2.0 * p_psi.inner(&a_psi).re;

    // (d) on the soliton: Â_cψ = 0 and (Ĥ+Ĥ_ψ)ψ = ħ²/(4Mσ∞²)·ψ
    let (soliton_lindblad, soliton_eigen) = if params.collapse_strength > 0.0 {
        let e = soliton_energy(params)?;
        let h_psi = apply_total_drag_hamiltonian(psi, &m, params);
        let mut resid = h_psi;
        let ec = Complex64::new(e, 0.0);
        resid
            .amplitudes_mut()
            .zip_mut_with(psi.amplitudes(), |r, p| *r -= ec * p);
        (
            Some(a_psi.norm_sq().sqrt()),
            Some(resid.norm_sq().sqrt()),
        )
    } else {
        (None, None)
    };

    Ok(IdentityReport {
        anticommutator,
        energy_gain,
        x_noise,
        p_noise,
        soliton_lindblad,
        soliton_eigen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::SeedableRng;

    fn grid(n: usize, half: f64) -> Arc<Grid> {
        Grid::new(GridSpec::new(n, -half, half).unwrap()).unwrap()
    }

    #[test]
    fn gaussian_moment_contract() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = grid(256, 12.0);
        for (c, want_r) in [(0.0, 0.0), (1.0, 0.5), (-0.8, -0.4)] {
            let psi = make_gaussian(
                &GaussianSpec {
                    center: 0.5,
                    momentum: 1.0,
                    sigma2: 0.7,
                    chirp: c,
                },
                &g,
                params.hbar,
            )
            .unwrap();
            let m = moments_of(&psi, &params).unwrap();
            assert!((m.mean_x - 0.5).abs() < 1e-9);
            assert!((m.mean_p - 1.0).abs() < 1e-9);
            assert!((m.sigma2 - 0.7).abs() < 1e-9);
            assert!((m.corr_r - want_r).abs() < 1e-9, "R = c/2");
            // Gaussians saturate the Schrödinger-Robertson bound.
            assert!(m.robertson_deficit(params.hbar).abs() < 1e-8);
        }
    }

    #[test]
    fn soliton_constants_examples() {
        // ħ = M = 1, D = 1/8 → σ∞² = 1.
        let p = ModelParams::natural(0.125).unwrap();
        let (s2, r) = soliton_constants(&p).unwrap();
        assert!((s2 - 1.0).abs() < 1e-15);
        assert!((r - 0.5).abs() < 1e-15);
        // D = 12.5 → σ∞² = √(1/100) = 0.1.
        let p = ModelParams::natural(12.5).unwrap();
        let (s2, _) = soliton_constants(&p).unwrap();
        assert!((s2 - 0.1).abs() < 1e-12);
        // Fourth-root scaling: D → 16 D quarters σ∞².
        let p16 = ModelParams::natural(2.0).unwrap();
        let (s2a, _) = soliton_constants(&ModelParams::natural(0.125).unwrap()).unwrap();
        let (s2b, _) = soliton_constants(&p16).unwrap();
        assert!((s2b - s2a / 4.0).abs() < 1e-12);
        // D = 0 is an error.
        assert!(soliton_constants(&ModelParams::natural(0.0).unwrap()).is_err());
    }

    #[test]
    fn cat_center_of_mass() {
        let params = ModelParams::natural(0.02).unwrap();
        let g = grid(512, 26.0);
        let branch = |c: f64| GaussianSpec {
            center: c,
            momentum: 0.0,
            sigma2: 0.25,
            chirp: 0.0,
        };
        // |α|² = 0.7, branches at 0 and 10 → ⟨x⟩ = 3.
        let spec = CatSpec {
            amp1: Complex64::new(0.7f64.sqrt(), 0.0),
            amp2: Complex64::new(0.3f64.sqrt(), 0.0),
            branch1: branch(0.0),
            branch2: branch(10.0),
        };
        let cat = make_cat(&spec, &g, params.hbar).unwrap();
        let m = moments_of(&cat, &params).unwrap();
        assert!((m.mean_x - 3.0).abs() < 1e-6);

        // Symmetric cat at ±a → ⟨x⟩ = 0.
        let spec = CatSpec {
            amp1: Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            amp2: Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            branch1: branch(-5.0),
            branch2: branch(5.0),
        };
        let cat = make_cat(&spec, &g, params.hbar).unwrap();
        let m = moments_of(&cat, &params).unwrap();
        assert!(m.mean_x.abs() < 1e-9);

        // β = 0 reduces to the first branch.
        let spec = CatSpec {
            amp1: Complex64::new(1.0, 0.0),
            amp2: Complex64::ZERO,
            branch1: branch(2.0),
            branch2: branch(-8.0),
        };
        let cat = make_cat(&spec, &g, params.hbar).unwrap();
        let gref = make_gaussian(&branch(2.0), &g, params.hbar).unwrap();
        let overlap = cat.inner(&gref).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_fit_errors() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = grid(64, 2.0);
        let r = make_gaussian(
            &GaussianSpec {
                center: 0.0,
                momentum: 0.0,
                sigma2: 1.0,
                chirp: 0.0,
            },
            &g,
            params.hbar,
        );
        assert!(matches!(r, Err(SimError::Fit(_))));
    }

    #[test]
    fn identities_on_random_states() {
        let params = ModelParams::natural(0.3).unwrap();
        let g = grid(256, 14.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let psi = random_superposition(&g, params.hbar, &mut rng).unwrap();
            let rep = check_appendix_identities(&psi, &params).unwrap();
            assert!(
                rep.max_universal() < 1e-7,
                "universal identity residual {:e}",
                rep.max_universal()
            );
        }
    }

    #[test]
    fn soliton_identities() {
        let params = ModelParams::natural(0.125).unwrap();
        let g = grid(512, 16.0);
        let psi = make_soliton(0.0, 0.0, &params, &g).unwrap();
        let rep = check_appendix_identities(&psi, &params).unwrap();
        assert!(rep.soliton_lindblad.unwrap() < 1e-6);
        assert!(rep.soliton_eigen.unwrap() < 1e-6);
        // The eigenvalue itself: ⟨Ĥ + Ĥ_ψ⟩ must equal ħ²/(4Mσ∞²).
        let m = moments_of(&psi, &params).unwrap();
        let h_tot = apply_total_drag_hamiltonian(&psi, &m, &params);
        let e = psi.inner(&h_tot).re;
        assert!(
            (e - soliton_energy(&params).unwrap()).abs() < 1e-9,
            "soliton energy {} vs ħ²/(4Mσ∞²) = {}",
            e,
            soliton_energy(&params).unwrap()
        );
    }

    #[test]
    fn traveling_soliton_is_annihilated_by_lindblad() {
        // The boosted soliton still satisfies Â_cψ = 0 (centered operators are
        // Galilean covariant); the static eigen-identity applies only to the
        // standing packet.
        let params = ModelParams::natural(0.5).unwrap();
        let g = grid(512, 16.0);
        let psi = make_soliton(1.0, 2.0, &params, &g).unwrap();
        let rep = check_appendix_identities(&psi, &params).unwrap();
        assert!(rep.soliton_lindblad.unwrap() < 1e-6);
        assert!(rep.max_universal() < 1e-7);
    }
}
