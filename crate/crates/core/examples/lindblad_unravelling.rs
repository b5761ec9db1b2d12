// The noise average of QSD trajectories against the master equation
// integrated on the full density matrix.
//
// cargo run --release --example lindblad_unravelling [n_traj]

use ising_monitor::ensemble::{self, EnsembleOptions};
use ising_monitor::model::{ModelParams, Protocol};
use ising_monitor::oracle;

pub fn run(n_traj: usize) -> ising_monitor::error::Result<()> {
    let params = ModelParams::new(4, 2.0).with_dt(0.005).with_t_max(5.0);
    let mut opts = EnsembleOptions::new(n_traj, 6);
    opts.record.stride = 100;
    let stats = ensemble::run_ensemble(&params, Protocol::Qsd, &opts)?;
    let exact = oracle::dense_lindblad(&params, &stats.times)?;
    println!("{:>5} {:>9} {:>18} {:>7}", "t", "Lindblad", "QSD", "z");
    for (k, t) in stats.times.iter().enumerate() {
        let (m, s, e) = (
            stats.mean_occupations[k][0],
            stats.stderr_occupations[k][0],
            exact.occupations[k][0],
        );
        let z = if s > 0.0 { (m - e) / s } else { 0.0 };
        println!("{t:>5.2} {e:>9.5} {m:>9.5} +- {s:.5} {z:>7.2}");
    }
    println!(
        "purity of the mean state at t={}: {:.4}",
        params.t_max,
        exact.purity.last().unwrap()
    );
    Ok(())
}

fn main() -> ising_monitor::error::Result<()> {
    let n = std::env::args()
        .nth(1)
        .map_or(500, |s| s.parse().expect("n_traj"));
    run(n)
}
