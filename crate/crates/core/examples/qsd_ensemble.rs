// Ensemble of QSD trajectories on a worker pool: averaged entropy,
// stationary value and the estimators of the stationary distribution.
//
// cargo run --release --example qsd_ensemble [L] [gamma] [n_traj] [workers]

use ising_monitor::analysis;
use ising_monitor::ensemble::{self, EnsembleOptions};
use ising_monitor::model::{ModelParams, Protocol};

pub fn run(
    sites: usize,
    gamma: f64,
    n_traj: usize,
    workers: Option<usize>,
) -> ising_monitor::error::Result<()> {
    let params = ModelParams::new(sites, gamma)
        .with_dt(0.01)
        .with_t_max(20.0);
    let mut opts = EnsembleOptions::new(n_traj, 2024);
    opts.workers = workers;
    opts.t_sat = Some(10.0);
    opts.snapshots_per_trajectory = 5;
    opts.record.stride = 100;
    let stats = ensemble::run_ensemble(&params, Protocol::Qsd, &opts)?;

    println!(
        "{:>6} {:>9} {:>9} {:>9} {:>9}",
        "t", "mean", "stderr", "median", "typical"
    );
    for k in 0..stats.times.len() {
        println!(
            "{:>6.1} {:>9.5} {:>9.5} {:>9.5} {:>9.5}",
            stats.times[k], stats.mean[k], stats.stderr[k], stats.median[k], stats.typical[k]
        );
    }
    println!(
        "stationary S over [{}, {}]: {:.5} +- {:.5}",
        stats.t_sat, stats.t_end, stats.stationary_mean, stats.stationary_stderr
    );
    let e = ensemble::estimators(&stats.snapshots)?;
    println!(
        "{} snapshots: mean {:.4} median {:.4} typical {:.4}",
        stats.snapshots.len(),
        e.mean,
        e.median,
        e.typical
    );
    if let Ok(b) = analysis::bimodality_coefficient(&stats.snapshots) {
        println!(
            "bimodality coefficient {b:.3} (threshold {:.3})",
            analysis::BIMODALITY_THRESHOLD
        );
    }
    Ok(())
}

fn main() -> ising_monitor::error::Result<()> {
    let a: Vec<String> = std::env::args().collect();
    let sites = a.get(1).map_or(16, |s| s.parse().expect("L"));
    let gamma = a.get(2).map_or(2.0, |s| s.parse().expect("gamma"));
    let n_traj = a.get(3).map_or(64, |s| s.parse().expect("n_traj"));
    let workers = a.get(4).map(|s| s.parse().expect("workers"));
    run(sites, gamma, n_traj, workers)
}
