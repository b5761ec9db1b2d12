use std::fs;
use std::path::Path;
use std::process::Command;

use ising_monitor::cli;
use ising_monitor::ensemble::{self, EnsembleOptions};
use ising_monitor::model::{ModelParams, Protocol};

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let params = ModelParams::new(8, 1.5).with_dt(0.02).with_t_max(2.0);
    let run = |w| {
        let mut o = EnsembleOptions::new(150, 5);
        o.workers = Some(w);
        ensemble::run_ensemble(&params, Protocol::Qsd, &o).unwrap()
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run(4));
}

const SPEC: &str = "sites = [4, 6]\ngamma = [1.0, 4.5]\nn_traj = 70\nmaster_seed = 12\ndt = 0.05\nt_max = 2.0\nsnapshots_per_trajectory = 3\n";

#[test]
fn library_runs_are_byte_identical() {
    let spec = cli::parse_spec(SPEC).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for (k, w) in [1, 4, 1, 4].into_iter().enumerate() {
        let out = dir.path().join(k.to_string());
        cli::execute(&spec, Protocol::Qsd, &out, Some(w)).unwrap();
        trees.push(tree(&out));
    }
    assert!(trees.iter().all(|t| *t == trees[0]));
    assert_eq!(trees[0].len(), 2 + 4 * 5);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ising-monitor"))
}

#[test]
fn binary_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("run.toml");
    fs::write(&spec, SPEC).unwrap();
    let out1 = dir.path().join("w1");
    let out4 = dir.path().join("w4");
    for (out, w) in [(&out1, "1"), (&out4, "4")] {
        let st = bin()
            .args(["noclick", "--spec"])
            .arg(&spec)
            .arg("--out")
            .arg(out)
            .args(["--workers", w, "--seed", "9"])
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    assert_eq!(tree(&out1), tree(&out4));

    let st = bin().arg("fit").arg("--out").arg(&out1).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out1.join("fit.csv").exists());

    // validation errors exit with 1
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "sites = [4]\ndt = 0\n").unwrap();
    let st = bin()
        .arg("qsd")
        .arg("--spec")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
    let st = bin().args(["qsd", "--workers", "many"]).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let st = bin()
        .arg("qsd")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(dir.path().join("y"))
        .args(["--workers", "0"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
    // a spec for the other protocol is refused
    fs::write(&bad, format!("protocol = \"qsd\"\n{SPEC}")).unwrap();
    let st = bin()
        .arg("noclick")
        .arg("--spec")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("z"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));

    let st = bin().arg("oracle-check").status().unwrap();
    assert_eq!(st.code(), Some(0));
    let st = bin()
        .arg("spectrum")
        .arg("--out")
        .arg(dir.path().join("sp"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let gap = fs::read_to_string(dir.path().join("sp/gap.csv")).unwrap();
    assert_eq!(gap.lines().count(), 25);
}

#[test]
fn failing_job_is_reported_and_exits_2() {
    // a walk that blows up the propagator check: huge rate times a big step
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("run.toml");
    fs::write(
        &spec,
        "sites = [4]\ngamma = [1e6]\nn_traj = 2\ndt = 10.0\nt_max = 20.0\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let st = bin()
        .arg("qsd")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["jobs"][0]["ok"], false);
}
