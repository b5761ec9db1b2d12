// Quasiparticle band of the effective non-Hermitian Hamiltonian and the
// opening of its imaginary gap.
//
// cargo run --release --example spectrum [n_k]

use ising_monitor::analysis;
use ising_monitor::model;

pub fn run(n_k: usize) -> ising_monitor::error::Result<()> {
    let gammas: Vec<f64> = (0..=32).map(|j| 0.25 * j as f64).collect();
    println!(
        "{:>6} {:>12} {:>12} {:>12}",
        "gamma", "min Re", "min |Im|", "gap"
    );
    for &g in &gammas {
        let band = model::spectrum(g, n_k);
        let min_re = band
            .iter()
            .map(|p| p.lambda.re)
            .fold(f64::INFINITY, f64::min);
        let min_im = band
            .iter()
            .map(|p| p.lambda.im.abs())
            .fold(f64::INFINITY, f64::min);
        println!(
            "{g:>6.2} {min_re:>12.6} {min_im:>12.6} {:>12.6}",
            model::imaginary_gap(g, n_k)
        );
    }
    let onset = analysis::gap_onset(&gammas, n_k, 1e-12)?;
    println!("gap closed up to gamma = {onset}");
    let exact = 2.0 * (36.0f64 / 16.0 - 1.0).sqrt();
    println!(
        "gap(6) = {:.8}, closed form {exact:.8}",
        model::imaginary_gap(6.0, n_k)
    );
    Ok(())
}

fn main() -> ising_monitor::error::Result<()> {
    let n_k = std::env::args()
        .nth(1)
        .map_or(1001, |s| s.parse().expect("n_k"));
    run(n_k)
}
