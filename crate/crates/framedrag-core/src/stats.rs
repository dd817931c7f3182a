//! Least-squares fits and trajectory-level bootstrap errors for ensemble
//! statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Ordinary least squares `y = a + b t`; returns `(slope, intercept)`.
pub fn ols(ts: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(SimError::InsufficientData(format!(
            "OLS needs two or more matched points, got {}/{}",
            ts.len(),
            ys.len()
        )));
    }
    let n = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&t, &y) in ts.iter().zip(ys) {
        num += (t - tbar) * (y - ybar);
        den += (t - tbar) * (t - tbar);
    }
    if den == 0.0 {
        return Err(SimError::InsufficientData(
            "OLS with degenerate abscissae".into(),
        ));
    }
    let slope = num / den;
    Ok((slope, ybar - slope * tbar))
}

/// A fitted rate with its trajectory-bootstrap standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub n_bins: usize,
    pub n_traj: usize,
}

/// Number of bootstrap resamples used throughout.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

fn mean_series(per_traj: &[Vec<f64>], idx: &[usize], n_bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_bins];
    for &i in idx {
        for (o, v) in out.iter_mut().zip(&per_traj[i]) {
            *o += v;
        }
    }
    let inv = 1.0 / idx.len() as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

fn variance_series_idx(per_traj: &[Vec<f64>], idx: &[usize], n_bins: usize) -> Vec<f64> {
    let m = mean_series(per_traj, idx, n_bins);
    let mut out = vec![0.0; n_bins];
    for &i in idx {
        for ((o, v), mu) in out.iter_mut().zip(&per_traj[i]).zip(&m) {
            let d = v - mu;
            *o += d * d;
        }
    }
    let denom = (idx.len().max(2) - 1) as f64;
    out.iter_mut().for_each(|v| *v /= denom);
    out
}

fn window_indices(times: &[f64], window: (f64, f64)) -> Vec<usize> {
    times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= window.0 - 1e-12 && t <= window.1 + 1e-12)
        .map(|(i, _)| i)
        .collect()
}

/// Slope of the ensemble-mean series over a time window, with a bootstrap
/// standard error from trajectory-level resampling (≥ 200 resamples).
pub fn fit_slope(
    times: &[f64],
    per_traj: &[Vec<f64>],
    window: (f64, f64),
    seed: u64,
) -> Result<SlopeFit> {
    fit_series_slope(times, per_traj, window, seed, false)
}

/// Slope of the across-trajectory variance series over a window, bootstrap
/// error as in [`fit_slope`].
pub fn fit_variance_slope(
    times: &[f64],
    per_traj: &[Vec<f64>],
    window: (f64, f64),
    seed: u64,
) -> Result<SlopeFit> {
    fit_series_slope(times, per_traj, window, seed, true)
}

fn fit_series_slope(
    times: &[f64],
    per_traj: &[Vec<f64>],
    window: (f64, f64),
    seed: u64,
    variance: bool,
) -> Result<SlopeFit> {
    let n_traj = per_traj.len();
    if n_traj == 0 {
        return Err(SimError::InsufficientData("no trajectories".into()));
    }
    let n_bins = times.len();
    if per_traj.iter().any(|s| s.len() != n_bins) {
        return Err(SimError::InsufficientData(
            "trajectory series length mismatch".into(),
        ));
    }
    let win = window_indices(times, window);
    if win.len() < 5 {
        return Err(SimError::InsufficientData(format!(
            "need at least 5 bins in the fit window, got {}",
            win.len()
        )));
    }
    let wts: Vec<f64> = win.iter().map(|&i| times[i]).collect();

    let all: Vec<usize> = (0..n_traj).collect();
    let stat = |idx: &[usize]| -> Result<f64> {
        let series = if variance {
            variance_series_idx(per_traj, idx, n_bins)
        } else {
            mean_series(per_traj, idx, n_bins)
        };
        let wys: Vec<f64> = win.iter().map(|&i| series[i]).collect();
        Ok(ols(&wts, &wys)?.0)
    };

    let slope = stat(&all)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let idx: Vec<usize> = (0..n_traj).map(|_| rng.random_range(0..n_traj)).collect();
        let s = stat(&idx)?;
        acc += s;
        acc2 += s * s;
    }
    let nb = BOOTSTRAP_RESAMPLES as f64;
    let var = (acc2 / nb - (acc / nb) * (acc / nb)).max(0.0);
    Ok(SlopeFit {
        slope,
        stderr: var.sqrt(),
        n_bins: win.len(),
        n_traj,
    })
}

/// Per-bin mean and standard error of the mean across trajectories.
pub fn bin_mean_se(per_traj: &[Vec<f64>], n_bins: usize) -> (Vec<f64>, Vec<f64>) {
    let n = per_traj.len();
    let all: Vec<usize> = (0..n).collect();
    let mean = mean_series(per_traj, &all, n_bins);
    let var = variance_series_idx(per_traj, &all, n_bins);
    let se = var
        .iter()
        .map(|v| (v / n.max(1) as f64).sqrt())
        .collect();
    (mean, se)
}

/// Across-trajectory variance per bin.
pub fn bin_variance(per_traj: &[Vec<f64>], n_bins: usize) -> Vec<f64> {
    let all: Vec<usize> = (0..per_traj.len()).collect();
    variance_series_idx(per_traj, &all, n_bins)
}
