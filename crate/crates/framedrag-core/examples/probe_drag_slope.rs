//! Dev helper: bias/error of the drag energy-rate slope vs dt.

use framedrag_core::ensemble::{run_experiment, ExperimentKind, ExperimentSpec, ExperimentSummary};

fn main() {
    for dt in [5e-4, 2.5e-4, 1.25e-4] {
        let mut spec = ExperimentSpec::default_for(ExperimentKind::EnergyRateDrag);
        spec.dt = dt;
        spec.n_traj = 200;
        spec.record_every = (spec.horizon / dt / 20.0).round() as usize;
        let t0 = std::time::Instant::now();
        let result = run_experiment(&spec).unwrap();
        if let ExperimentSummary::EnergyRate { fit, .. } = result.summary {
            println!(
                "dt={dt:.2e}: slope={:+.6e} stderr={:.3e}  ({} traj, {:.1}s)",
                fit.slope,
                fit.stderr,
                fit.n_traj,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
