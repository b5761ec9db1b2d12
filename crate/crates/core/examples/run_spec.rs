// Drives a sweep the way the binary does: a TOML spec, one directory of
// CSV/JSON outputs per run, then the central-charge fit over it.
//
// cargo run --release --example run_spec [out_dir]

use std::path::PathBuf;

use ising_monitor::analysis::FitOptions;
use ising_monitor::cli;
use ising_monitor::model::Protocol;

const SPEC: &str = r#"
sites = [8, 12, 16]
gamma = [1.0, 5.0]
n_traj = 32
master_seed = 3
dt = 0.02
t_max = 8.0
stride = 5
"#;

pub fn run(out: PathBuf) -> ising_monitor::error::Result<()> {
    let spec = cli::parse_spec(SPEC)?;
    println!(
        "normalised spec (hash {}):\n{}",
        &spec.hash()[..12],
        spec.to_toml()?
    );
    let manifest = cli::execute(&spec, Protocol::Qsd, &out, Some(1))?;
    println!("{} jobs in {}", manifest.jobs.len(), out.display());
    let report = cli::fit_summaries(&cli::load_summaries(&out)?, &FitOptions::default())?;
    for row in &report.rows {
        if let Some(f) = row.fit {
            println!(
                "gamma={} c_eff={:.3} +- {:.3}",
                row.gamma, f.c_eff, f.stderr_c
            );
        }
    }
    Ok(())
}

fn main() -> ising_monitor::error::Result<()> {
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("ising-monitor-run-spec"),
        PathBuf::from,
    );
    run(out)
}
