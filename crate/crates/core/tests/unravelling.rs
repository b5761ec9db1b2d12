//! The trajectory average reproduces the master equation; a reduced
//! version of the acceptance check that runs in seconds.

use ising_monitor::ensemble::{self, EnsembleOptions};
use ising_monitor::model::{ModelParams, Protocol};
use ising_monitor::oracle;

#[test]
fn mean_occupations_follow_lindblad() {
    let params = ModelParams::new(3, 2.0).with_dt(0.005).with_t_max(3.0);
    let mut opts = EnsembleOptions::new(600, 31);
    opts.record.stride = 100;
    let stats = ensemble::run_ensemble(&params, Protocol::Qsd, &opts).unwrap();
    let exact = oracle::dense_lindblad(&params, &stats.times).unwrap();
    assert!(exact.max_trace_error < 1e-9);
    for k in 1..stats.times.len() {
        for i in 0..3 {
            let z = (stats.mean_occupations[k][i] - exact.occupations[k][i])
                / stats.stderr_occupations[k][i];
            assert!(z.abs() < 4.0, "t={} site {i}: z = {z}", stats.times[k]);
        }
    }
}

#[test]
fn noclick_is_not_the_lindblad_average() {
    // the post-selected state drifts away from the unconditional one
    let params = ModelParams::new(3, 2.0).with_dt(0.005).with_t_max(3.0);
    let mut opts = EnsembleOptions::new(1, 0);
    opts.record.stride = 100;
    let nc = ensemble::run_ensemble(&params, Protocol::NoClick, &opts).unwrap();
    let exact = oracle::dense_lindblad(&params, &nc.times).unwrap();
    let last = nc.times.len() - 1;
    let d = (nc.mean_occupations[last][1] - exact.occupations[last][1]).abs();
    assert!(d > 1e-2, "{d}");
}
