//! Uniform periodic spatial grid with planned FFTs for spectral momentum
//! application.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Fraction of grid points (per side) counted as the boundary band when
/// checking for probability leakage.
pub const EDGE_BAND_FRACTION: usize = 16;

/// Geometry of the uniform 1-D grid: `n_points` samples on `[x_min, x_max)`.
///
/// `n_points` must be a power of two so the momentum operator can be applied
/// spectrally without padding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_points < 8 {
            return Err(SimError::Grid(format!(
                "n_points = {n_points}, need at least 8"
            )));
        }
        if !n_points.is_power_of_two() {
            return Err(SimError::Grid(format!(
                "n_points = {n_points} is not a power of two"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(SimError::Grid(format!(
                "domain [{x_min}, {x_max}] is not a valid interval"
            )));
        }
        Ok(GridSpec {
            n_points,
            x_min,
            x_max,
        })
    }

    /// Grid spacing.
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    /// Domain length.
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
}

/// A [`GridSpec`] plus planned FFTs and precomputed coordinate/wavenumber
/// arrays. Construction plans the transforms once; the grid is then shared
/// read-only (via `Arc`) across trajectory workers.
pub struct Grid {
    spec: GridSpec,
    x: Vec<f64>,
    k: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

thread_local! {
    static FFT_SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        // Re-validate: specs may arrive from deserialized configs.
        let spec = GridSpec::new(spec.n_points, spec.x_min, spec.x_max)?;
        let n = spec.n_points;
        let dx = spec.dx();
        let x: Vec<f64> = (0..n).map(|j| spec.x_min + j as f64 * dx).collect();
        // Standard FFT ordering: k_j = 2π j / L for j < n/2, negative branch after.
        let dk = 2.0 * std::f64::consts::PI / spec.length();
        let k: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                m * dk
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            spec,
            x,
            k,
            fft,
            ifft,
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n_points
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx()
    }

    /// Sample coordinates `x_j`.
    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    /// Angular wavenumbers in FFT ordering; momentum eigenvalues are `ħ k`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// Number of points per side in the boundary band.
    pub fn edge_band(&self) -> usize {
        (self.n() / EDGE_BAND_FRACTION).max(1)
    }

    /// In-place unnormalized forward FFT.
    pub fn forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n());
        FFT_SCRATCH.with(|s| {
            let mut scratch = s.borrow_mut();
            scratch.resize(self.fft.get_inplace_scratch_len(), Complex64::ZERO);
            self.fft.process_with_scratch(buf, &mut scratch);
        });
    }

    /// In-place inverse FFT including the 1/n normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n());
        FFT_SCRATCH.with(|s| {
            let mut scratch = s.borrow_mut();
            scratch.resize(self.ifft.get_inplace_scratch_len(), Complex64::ZERO);
            self.ifft.process_with_scratch(buf, &mut scratch);
        });
        let inv_n = 1.0 / self.n() as f64;
        for v in buf.iter_mut() {
            *v *= inv_n;
        }
    }

    pub fn same_grid(&self, other: &Grid) -> bool {
        self.spec == other.spec
    }
}
