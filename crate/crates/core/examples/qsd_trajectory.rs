// A single QSD trajectory from the vacuum: entropy of the boundary block
// of length L/4 and the site occupations.
//
// cargo run --release --example qsd_trajectory [L] [gamma] [seed]

use ising_monitor::dynamics::{self, RecordOptions};
use ising_monitor::model::{ModelParams, Protocol};

pub fn run(sites: usize, gamma: f64, seed: u64) -> ising_monitor::error::Result<()> {
    let params = ModelParams::new(sites, gamma)
        .with_dt(0.01)
        .with_t_max(10.0);
    let cfg = dynamics::precompute_propagators(&params, Protocol::Qsd)?;
    let opts = RecordOptions {
        stride: 50,
        ..RecordOptions::default()
    };
    let rec = dynamics::run_trajectory_with(&cfg, seed, &opts)?;
    println!(
        "# L={sites} gamma={gamma} seed={seed} block={:?}",
        rec.subsystem
    );
    println!("{:>6} {:>10} {:>10}", "t", "S", "<n>");
    for k in 0..rec.times.len() {
        let n = rec.occupations[k].iter().sum::<f64>() / sites as f64;
        println!("{:>6.2} {:>10.5} {:>10.5}", rec.times[k], rec.entropy[k], n);
    }
    Ok(())
}

fn main() -> ising_monitor::error::Result<()> {
    let a: Vec<String> = std::env::args().collect();
    let sites = a.get(1).map_or(32, |s| s.parse().expect("L"));
    let gamma = a.get(2).map_or(1.0, |s| s.parse().expect("gamma"));
    let seed = a.get(3).map_or(1, |s| s.parse().expect("seed"));
    run(sites, gamma, seed)
}
