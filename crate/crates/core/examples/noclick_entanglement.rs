// Deterministic no-click evolution. The non-Hermitian propagator is exact,
// so a coarse step is fine. Prints S(t) for a few rates and the long-time
// value against L.
//
// cargo run --release --example noclick_entanglement

use ising_monitor::dynamics::{self, RecordOptions};
use ising_monitor::ensemble;
use ising_monitor::model::{ModelParams, Protocol};

fn stationary(sites: usize, gamma: f64) -> ising_monitor::error::Result<f64> {
    let t_max = (8.0 * sites as f64 / gamma).max(40.0);
    let params = ModelParams::new(sites, gamma)
        .with_dt(0.5)
        .with_t_max(t_max);
    let cfg = dynamics::precompute_propagators(&params, Protocol::NoClick)?;
    let opts = RecordOptions {
        stride: 1,
        occupations: false,
        ..RecordOptions::default()
    };
    let rec = dynamics::run_trajectory_with(&cfg, 0, &opts)?;
    ensemble::stationary_average(&rec.times, &rec.entropy, 0.5 * t_max, t_max)
}

pub fn run(sizes: &[usize]) -> ising_monitor::error::Result<()> {
    let params = ModelParams::new(32, 1.0).with_dt(0.5).with_t_max(20.0);
    let cfg = dynamics::precompute_propagators(&params, Protocol::NoClick)?;
    let rec = dynamics::run_trajectory_with(
        &cfg,
        0,
        &RecordOptions {
            stride: 4,
            ..Default::default()
        },
    )?;
    println!("L=32 gamma=1");
    for (t, s) in rec.times.iter().zip(&rec.entropy) {
        println!("  t={t:>5.1} S={s:.5}");
    }

    print!("{:>6}", "gamma");
    for l in sizes {
        print!(" {:>9}", format!("L={l}"));
    }
    println!();
    for gamma in [0.5, 1.0, 2.0, 3.0, 5.0, 6.0] {
        print!("{gamma:>6.2}");
        for &l in sizes {
            print!(" {:>9.5}", stationary(l, gamma)?);
        }
        println!();
    }
    Ok(())
}

fn main() -> ising_monitor::error::Result<()> {
    run(&[16, 32, 64])
}
