// Runs the Gaussian engine and the dense 2^L simulator side by side with
// the same noise and reports the largest deviations.
//
// cargo run --release --example oracle_check [steps]

use ising_monitor::entanglement::Subsystem;
use ising_monitor::gaussian;
use ising_monitor::model::{ModelParams, Protocol};
use ising_monitor::oracle::{self, DenseState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run(steps: usize) -> ising_monitor::error::Result<()> {
    for sites in [2, 3, 4, 6] {
        for protocol in [Protocol::Qsd, Protocol::NoClick] {
            let params = ModelParams::new(sites, 1.5).with_dt(0.01);
            let r = oracle::equivalence_check(&params, protocol, 3, steps)?;
            println!(
                "L={sites} {:<8} max|dS| {:.2e}  max|dG| {:.2e}",
                protocol.as_str(),
                r.max_entropy_deviation,
                r.max_correlation_deviation
            );
        }
    }

    // a random Gaussian state, expanded into the full Fock space
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (state, _) = gaussian::random_state(5, &mut rng);
    let dense = DenseState::from_gaussian(&state)?;
    let sub = Subsystem::new(0, 2);
    let s_gauss = ising_monitor::entanglement::block_entropy(&state, sub)?;
    let s_dense = oracle::dense_entropy(&dense, sub)?;
    println!("random state, 2-site block: S = {s_gauss:.12} (Gaussian) vs {s_dense:.12} (dense)");
    Ok(())
}

fn main() -> ising_monitor::error::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .map_or(100, |s| s.parse().expect("steps"));
    run(steps)
}
