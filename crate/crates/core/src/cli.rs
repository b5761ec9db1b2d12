//! Command-line front end: TOML run specs, sweeps over `(γ, L)` and the
//! files they produce.
//!
//! A run spec looks like
//!
//! ```toml
//! protocol = "qsd"            # optional, the subcommand decides
//! sites = [16, 32]
//! gamma = { start = 0.25, stop = 6.0, step = 0.25 }   # or a list
//! n_traj = 200
//! master_seed = 1
//! dt = 0.005
//! t_max = 20.0                # or { scale = 8.0, min = 40.0 }: max(min, scale L/γ)
//! stride = 10
//! ```
//!
//! Every job `(γ, L)` writes `<stem>_trajectories.csv`,
//! `<stem>_stationary.csv`, `<stem>_histogram.csv`,
//! `<stem>_occupations.csv` and `<stem>_summary.json` with
//! `stem = <protocol>_L<L>_g<γ>`. The output directory also receives the
//! normalised spec (`spec.toml`) and `manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, FitOptions, FitPoint, TransitionPoint};
use crate::dynamics::RecordOptions;
use crate::ensemble::{self, Binning, EnsembleOptions, EnsembleStats};
use crate::entanglement::Anchor;
use crate::error::{Error, Result};
use crate::model::{self, ModelParams, Protocol};
use crate::oracle;

/// Environment variable read for the worker count when `--workers` is
/// absent.
pub const WORKERS_ENV: &str = "ISING_MONITOR_WORKERS";

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Grid of measurement rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Default for GammaGrid {
    fn default() -> Self {
        GammaGrid::Range {
            start: 0.25,
            stop: 6.0,
            step: 0.25,
        }
    }
}

impl GammaGrid {
    /// The grid values; a range includes `stop` when it lies on the grid.
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GammaGrid::List(v) => Ok(v.clone()),
            &GammaGrid::Range { start, stop, step } => {
                if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) {
                    return Err(Error::param(
                        "gamma",
                        "range needs finite start/stop and step > 0",
                    ));
                }
                if stop < start {
                    return Err(Error::param("gamma", "range stop lies below start"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|k| start + k as f64 * step).collect())
            }
        }
    }
}

/// Total simulated time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeRule {
    Fixed(f64),
    /// `max(min, scale · L / γ)`; `min` alone when `γ = 0`.
    Scaled {
        scale: f64,
        min: f64,
    },
}

impl TimeRule {
    pub fn resolve(&self, sites: usize, gamma: f64) -> f64 {
        match *self {
            TimeRule::Fixed(t) => t,
            TimeRule::Scaled { scale, min } => {
                let t = scale * sites as f64 / gamma;
                if t.is_finite() {
                    t.max(min)
                } else {
                    min
                }
            }
        }
    }
}

fn default_dt() -> f64 {
    model::DEFAULT_DT
}
fn default_t_max() -> TimeRule {
    TimeRule::Fixed(model::DEFAULT_T_MAX)
}
fn default_one() -> usize {
    1
}
fn default_stride() -> usize {
    10
}
fn default_n_k() -> usize {
    1001
}
fn default_coupling() -> f64 {
    1.0
}

/// Fit settings used by the `fit` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default = "default_min_l")]
    pub min_l: usize,
    #[serde(default)]
    pub weighted: bool,
}

fn default_min_l() -> usize {
    FitOptions::default().min_l
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            min_l: default_min_l(),
            weighted: false,
        }
    }
}

/// A declarative sweep over `(γ, L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(default)]
    pub sites: Vec<usize>,
    #[serde(default)]
    pub gamma: GammaGrid,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "default_one")]
    pub n_traj: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: TimeRule,
    /// Start of the stationary window; default `4L/γ` (or `t_max/2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_sat: Option<f64>,
    /// Entanglement block length; default `L/4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystem_len: Option<usize>,
    #[serde(default)]
    pub anchor: Anchor,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_points_per_decade: Option<u32>,
    #[serde(default = "default_one")]
    pub snapshots_per_trajectory: usize,
    /// Histogram bins; default Freedman-Diaconis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default = "default_one")]
    pub renorm_every: usize,
    /// Momentum points for `spectrum`.
    #[serde(default = "default_n_k")]
    pub n_k: usize,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, col)
}

/// Parses and validates a TOML run spec.
pub fn parse_spec(text: &str) -> Result<RunSpec> {
    let spec: RunSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::SpecParse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sites.iter().any(|&l| l < 2) {
            return Err(Error::param("sites", "every chain needs at least 2 sites"));
        }
        let gammas = self.gamma.values()?;
        if gammas.is_empty() || gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::param("gamma", "values must be finite and >= 0"));
        }
        if !self.coupling.is_finite() {
            return Err(Error::param("coupling", "must be finite"));
        }
        if self.n_traj == 0 {
            return Err(Error::param("n_traj", "must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        match self.t_max {
            TimeRule::Fixed(t) if !(t.is_finite() && t >= 0.0) => {
                return Err(Error::param(
                    "t_max",
                    format!("must be finite and >= 0, got {t}"),
                ))
            }
            TimeRule::Scaled { scale, min }
                if !(scale > 0.0 && min >= 0.0 && scale.is_finite() && min.is_finite()) =>
            {
                return Err(Error::param("t_max", "scale must be > 0 and min >= 0"))
            }
            _ => {}
        }
        if let Some(t) = self.t_sat {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::param("t_sat", "must be finite and >= 0"));
            }
        }
        if self.subsystem_len == Some(0) {
            return Err(Error::param("subsystem_len", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        if self.log_points_per_decade == Some(0) {
            return Err(Error::param("log_points_per_decade", "must be at least 1"));
        }
        if self.bins == Some(0) {
            return Err(Error::param("bins", "must be at least 1"));
        }
        if self.renorm_every == 0 {
            return Err(Error::param("renorm_every", "must be at least 1"));
        }
        if self.n_k < 2 {
            return Err(Error::param("n_k", "need at least two momenta"));
        }
        for &l in &self.sites {
            self.params_for(l, gammas[0]).validate()?;
        }
        Ok(())
    }

    pub fn params_for(&self, sites: usize, gamma: f64) -> ModelParams {
        ModelParams::new(sites, gamma)
            .with_coupling(self.coupling)
            .with_dt(self.dt)
            .with_t_max(self.t_max.resolve(sites, gamma))
            .with_subsystem_len(self.subsystem_len.unwrap_or((sites / 4).max(1)))
    }

    pub fn ensemble_options(&self, workers: Option<usize>) -> EnsembleOptions {
        EnsembleOptions {
            n_traj: self.n_traj,
            master_seed: self.master_seed,
            workers,
            record: RecordOptions {
                stride: self.stride,
                log_points_per_decade: self.log_points_per_decade,
                anchor: self.anchor,
                occupations: true,
            },
            t_sat: self.t_sat,
            t_end: None,
            snapshots_per_trajectory: self.snapshots_per_trajectory,
            binning: self.bins.map_or(Binning::FreedmanDiaconis, Binning::Fixed),
            renorm_every: self.renorm_every,
        }
    }

    /// The spec with every default filled in, as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("cannot serialise spec: {e}")))
    }

    /// SHA-256 of the normalised spec, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.out = None;
        let bytes = serde_json::to_vec(&s).expect("spec serialises");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// File stem of the job `(γ, L)`.
pub fn job_stem(protocol: Protocol, sites: usize, gamma: f64) -> String {
    format!("{}_L{}_g{}", protocol.as_str(), sites, gamma)
}

/// Contents of `<stem>_summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub spec_hash: String,
    pub code_version: String,
    pub protocol: Protocol,
    pub sites: usize,
    pub gamma: f64,
    pub params: ModelParams,
    pub fingerprint: String,
    pub n_traj: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub t_sat: f64,
    pub t_end: f64,
    /// Mean of the per-trajectory time averages: the fit input.
    pub stationary_mean: f64,
    pub stationary_stderr: f64,
    pub snapshot_count: usize,
    pub snapshot_estimators: ensemble::Estimators,
    pub bimodality: Option<f64>,
    pub window_log_slope: f64,
    pub files: Vec<String>,
}

fn trajectories_csv(stats: &EnsembleStats) -> String {
    let mut s = String::from("time,mean_S,stderr_S,median_S,typical_S\n");
    for k in 0..stats.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f(stats.times[k]),
            fmt_f(stats.mean[k]),
            fmt_f(stats.stderr[k]),
            fmt_f(stats.median[k]),
            fmt_f(stats.typical[k])
        );
    }
    s
}

fn stationary_csv(stats: &EnsembleStats) -> String {
    let mut s = String::from("trajectory,seed,S_inf\n");
    for (k, (&v, &seed)) in stats.stationary.iter().zip(&stats.seeds).enumerate() {
        let _ = writeln!(s, "{k},{seed},{}", fmt_f(v));
    }
    s
}

fn histogram_csv(stats: &EnsembleStats) -> String {
    let h = &stats.histogram;
    let mut s = String::from("bin_lo,bin_hi,count,density\n");
    for k in 0..h.n_bins() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f(h.edges[k]),
            fmt_f(h.edges[k + 1]),
            h.counts[k],
            fmt_f(h.density[k])
        );
    }
    s
}

fn occupations_csv(stats: &EnsembleStats, sites: usize) -> String {
    let mut s = String::from("time");
    for i in 1..=sites {
        let _ = write!(s, ",n_{i}");
    }
    for i in 1..=sites {
        let _ = write!(s, ",stderr_n_{i}");
    }
    s.push('\n');
    for (k, t) in stats
        .times
        .iter()
        .enumerate()
        .take(stats.mean_occupations.len())
    {
        s.push_str(&fmt_f(*t));
        for v in stats.mean_occupations[k]
            .iter()
            .chain(&stats.stderr_occupations[k])
        {
            s.push(',');
            s.push_str(&fmt_f(*v));
        }
        s.push('\n');
    }
    s
}

/// Writes the files of one job and returns its summary.
pub fn write_job(
    out: &Path,
    spec_hash: &str,
    params: &ModelParams,
    stats: &EnsembleStats,
) -> Result<JobSummary> {
    let stem = job_stem(stats.protocol, params.sites, params.gamma);
    let files = [
        (format!("{stem}_trajectories.csv"), trajectories_csv(stats)),
        (format!("{stem}_stationary.csv"), stationary_csv(stats)),
        (format!("{stem}_histogram.csv"), histogram_csv(stats)),
        (
            format!("{stem}_occupations.csv"),
            occupations_csv(stats, params.sites),
        ),
    ];
    for (name, body) in &files {
        fs::write(out.join(name), body)?;
    }
    let summary_name = format!("{stem}_summary.json");
    let summary = JobSummary {
        spec_hash: spec_hash.to_string(),
        code_version: CODE_VERSION.to_string(),
        protocol: stats.protocol,
        sites: params.sites,
        gamma: params.gamma,
        params: params.clone(),
        fingerprint: stats.fingerprint.clone(),
        n_traj: stats.n_traj,
        master_seed: stats.master_seed,
        seeds: stats.seeds.clone(),
        t_sat: stats.t_sat,
        t_end: stats.t_end,
        stationary_mean: stats.stationary_mean,
        stationary_stderr: stats.stationary_stderr,
        snapshot_count: stats.snapshots.len(),
        snapshot_estimators: ensemble::estimators(&stats.snapshots)?,
        bimodality: analysis::bimodality_coefficient(&stats.snapshots).ok(),
        window_log_slope: stats.window_log_slope,
        files: files
            .iter()
            .map(|f| f.0.clone())
            .chain([summary_name.clone()])
            .collect(),
    };
    fs::write(
        out.join(&summary_name),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobStatus {
    pub gamma: f64,
    pub sites: usize,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_hash: String,
    pub code_version: String,
    pub protocol: Protocol,
    pub spec: RunSpec,
    pub jobs: Vec<JobStatus>,
}

/// Runs every `(γ, L)` job of the spec into `out`. Jobs that fail are
/// listed in the manifest and turn the result into
/// [`Error::JobsFailed`].
pub fn execute(
    spec: &RunSpec,
    protocol: Protocol,
    out: &Path,
    workers: Option<usize>,
) -> Result<Manifest> {
    spec.validate()?;
    if spec.sites.is_empty() {
        return Err(Error::param(
            "sites",
            "at least one chain length is required",
        ));
    }
    if let Some(p) = spec.protocol {
        if p != protocol {
            return Err(Error::param(
                "protocol",
                format!("spec says `{p}` but the `{protocol}` subcommand was used"),
            ));
        }
    }
    let mut spec = spec.clone();
    spec.protocol = Some(protocol);
    fs::create_dir_all(out)?;
    let hash = spec.hash();
    fs::write(out.join("spec.toml"), spec.to_toml()?)?;

    let gammas = spec.gamma.values()?;
    let opts = spec.ensemble_options(workers);
    let mut jobs = Vec::new();
    for &gamma in &gammas {
        for &sites in &spec.sites {
            let params = spec.params_for(sites, gamma);
            let result = ensemble::run_ensemble(&params, protocol, &opts)
                .and_then(|stats| write_job(out, &hash, &params, &stats));
            let status = match result {
                Ok(_) => JobStatus {
                    gamma,
                    sites,
                    ok: true,
                    failed_seed: None,
                    error: None,
                },
                Err(e) => {
                    let failed_seed = match &e {
                        Error::Trajectory { seed, .. } => Some(*seed),
                        _ => None,
                    };
                    eprintln!("job gamma={gamma} L={sites} failed: {e}");
                    JobStatus {
                        gamma,
                        sites,
                        ok: false,
                        failed_seed,
                        error: Some(e.to_string()),
                    }
                }
            };
            jobs.push(status);
        }
    }
    let manifest = Manifest {
        spec_hash: hash,
        code_version: CODE_VERSION.to_string(),
        protocol,
        spec,
        jobs,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    let failed = manifest.jobs.iter().filter(|j| !j.ok).count();
    if failed > 0 {
        return Err(Error::JobsFailed {
            failed,
            total: manifest.jobs.len(),
        });
    }
    Ok(manifest)
}

/// One row of the `fit` table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitRow {
    pub protocol: Protocol,
    pub gamma: f64,
    pub fit: Option<analysis::FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub spec_hash: String,
    pub min_l: usize,
    pub weighted: bool,
    pub rows: Vec<FitRow>,
    /// `γ_c` per protocol, or the reason it could not be located.
    pub transition: BTreeMap<String, std::result::Result<f64, String>>,
}

/// Reads every job summary in `dir` and fits `c_eff(γ)`.
pub fn load_summaries(dir: &Path) -> Result<Vec<JobSummary>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_summary.json"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Input(format!(
            "no *_summary.json files in {}",
            dir.display()
        )));
    }
    names
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn fit_summaries(summaries: &[JobSummary], opts: &FitOptions) -> Result<FitReport> {
    let hash = summaries[0].spec_hash.clone();
    if let Some(bad) = summaries.iter().find(|s| s.spec_hash != hash) {
        return Err(Error::Input(format!(
            "spec hash mismatch: {} vs {} (L={}, gamma={})",
            hash, bad.spec_hash, bad.sites, bad.gamma
        )));
    }
    let mut keys: Vec<(Protocol, f64)> = Vec::new();
    for s in summaries {
        if !keys.contains(&(s.protocol, s.gamma)) {
            keys.push((s.protocol, s.gamma));
        }
    }
    keys.sort_by(|a, b| a.0.as_str().cmp(b.0.as_str()).then(a.1.total_cmp(&b.1)));
    let mut rows = Vec::new();
    for key in keys {
        let pts: Vec<FitPoint> = summaries
            .iter()
            .filter(|s| (s.protocol, s.gamma) == key)
            .map(|s| FitPoint {
                sites: s.sites,
                entropy: s.stationary_mean,
                stderr: s.stationary_stderr,
            })
            .collect();
        let (fit, error) = match analysis::fit_central_charge_with(&pts, opts) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(FitRow {
            protocol: key.0,
            gamma: key.1,
            fit,
            error,
        });
    }
    let mut transition = BTreeMap::new();
    for protocol in [Protocol::Qsd, Protocol::NoClick] {
        let pts: Vec<TransitionPoint> = rows
            .iter()
            .filter(|r| r.protocol == protocol)
            .filter_map(|r| {
                r.fit.map(|f| TransitionPoint {
                    gamma: r.gamma,
                    c_eff: f.c_eff,
                    stderr: f.stderr_c,
                })
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        transition.insert(
            protocol.as_str().to_string(),
            analysis::locate_transition(&pts).map_err(|e| e.to_string()),
        );
    }
    Ok(FitReport {
        spec_hash: hash,
        min_l: opts.min_l,
        weighted: opts.weighted,
        rows,
        transition,
    })
}

fn fit_csv(report: &FitReport) -> String {
    let mut s = String::from(
        "protocol,gamma,c_eff,stderr_c,intercept,stderr_intercept,r_squared,n_points\n",
    );
    for r in &report.rows {
        if let Some(f) = r.fit {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.protocol,
                fmt_f(r.gamma),
                fmt_f(f.c_eff),
                fmt_f(f.stderr_c),
                fmt_f(f.intercept),
                fmt_f(f.stderr_intercept),
                fmt_f(f.r_squared),
                f.n_points
            );
        }
    }
    s
}

/// Dumps `Λ_k` on the momentum grid and the imaginary gap for every `γ`.
pub fn write_spectrum(spec: &RunSpec, out: &Path) -> Result<Vec<(f64, f64)>> {
    fs::create_dir_all(out)?;
    let gammas = spec.gamma.values()?;
    let mut band = String::from("gamma,k,re_lambda,im_lambda\n");
    let mut gap = String::from("gamma,gap\n");
    let mut gaps = Vec::new();
    for &g in &gammas {
        for p in model::spectrum(g, spec.n_k) {
            let _ = writeln!(
                band,
                "{},{},{},{}",
                fmt_f(g),
                fmt_f(p.k),
                fmt_f(p.lambda.re),
                fmt_f(p.lambda.im)
            );
        }
        let d = model::imaginary_gap(g, spec.n_k);
        let _ = writeln!(gap, "{},{}", fmt_f(g), fmt_f(d));
        gaps.push((g, d));
    }
    fs::write(out.join("spectrum.csv"), band)?;
    fs::write(out.join("gap.csv"), gap)?;
    Ok(gaps)
}

/// Tolerances used by `oracle-check`.
pub const ORACLE_ENTROPY_TOL: f64 = 1e-6;
pub const ORACLE_CORRELATION_TOL: f64 = 1e-7;

#[derive(Parser, Debug)]
#[command(
    name = "ising-monitor",
    version,
    about = "Entanglement dynamics of the monitored quantum Ising chain"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML run spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory (overrides `out` in the spec).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: $ISING_MONITOR_WORKERS or all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Master seed (overrides `master_seed` in the spec).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quantum-state-diffusion ensembles over the spec grid.
    Qsd(CommonArgs),
    /// Deterministic no-click evolution over the spec grid.
    Noclick(CommonArgs),
    /// Analytic quasiparticle spectrum and imaginary gap.
    Spectrum(CommonArgs),
    /// Central-charge fits and transition location from run outputs.
    Fit(CommonArgs),
    /// Compare the Gaussian engine with the dense simulator.
    OracleCheck(CommonArgs),
}

fn load_spec(args: &CommonArgs, required: bool) -> Result<RunSpec> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read spec {}: {e}", path.display())))?;
            parse_spec(&text)?
        }
        None if required => return Err(Error::Input("--spec <path> is required".into())),
        None => parse_spec("")?,
    };
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    Ok(spec)
}

fn resolve_out(args: &CommonArgs, spec: &RunSpec) -> Result<PathBuf> {
    args.out
        .clone()
        .or_else(|| spec.out.clone())
        .ok_or_else(|| {
            Error::Input("an output directory is required (--out or `out` in the spec)".into())
        })
}

/// Worker count from the flag, then the environment.
pub fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(Error::param("workers", "must be at least 1"));
        }
        return Ok(Some(n));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::param(
                "workers",
                format!("{WORKERS_ENV}={v:?} is not a positive integer"),
            )),
        },
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Qsd(args) => run_protocol(&args, Protocol::Qsd),
        Command::Noclick(args) => run_protocol(&args, Protocol::NoClick),
        Command::Spectrum(args) => {
            let spec = load_spec(&args, false)?;
            let out = resolve_out(&args, &spec)?;
            let gaps = write_spectrum(&spec, &out)?;
            let gammas: Vec<f64> = gaps.iter().map(|g| g.0).collect();
            match analysis::gap_onset(&gammas, spec.n_k, 1e-10) {
                Ok(g) => println!("imaginary gap closed up to gamma = {g}, open beyond"),
                Err(_) => println!("the imaginary gap does not open on this grid"),
            }
            Ok(())
        }
        Command::Fit(args) => {
            let dir = args.out.clone().ok_or_else(|| {
                Error::Input("fit needs --out <dir> pointing at run outputs".into())
            })?;
            let fit_spec = match &args.spec {
                Some(_) => load_spec(&args, true)?.fit,
                None => FitSpec::default(),
            };
            let summaries = load_summaries(&dir)?;
            let opts = FitOptions {
                min_l: fit_spec.min_l,
                weighted: fit_spec.weighted,
            };
            let report = fit_summaries(&summaries, &opts)?;
            fs::write(dir.join("fit.csv"), fit_csv(&report))?;
            fs::write(
                dir.join("fit.json"),
                serde_json::to_string_pretty(&report)? + "\n",
            )?;
            println!(
                "{:<8} {:>8} {:>12} {:>12}",
                "protocol", "gamma", "c_eff", "stderr"
            );
            for r in &report.rows {
                match (&r.fit, &r.error) {
                    (Some(f), _) => println!(
                        "{:<8} {:>8} {:>12.5} {:>12.5}",
                        r.protocol, r.gamma, f.c_eff, f.stderr_c
                    ),
                    (None, Some(e)) => println!("{:<8} {:>8} {e}", r.protocol, r.gamma),
                    _ => {}
                }
            }
            for (p, t) in &report.transition {
                match t {
                    Ok(g) => println!("{p}: gamma_c = {g:.4}"),
                    Err(e) => println!("{p}: {e}"),
                }
            }
            Ok(())
        }
        Command::OracleCheck(args) => {
            let seed = args.seed.unwrap_or(0);
            let mut reports = Vec::new();
            let mut worst = (0.0f64, 0.0f64);
            for sites in [2, 3, 4] {
                for protocol in [Protocol::Qsd, Protocol::NoClick] {
                    let params = ModelParams::new(sites, 2.0).with_dt(0.01);
                    let r = oracle::equivalence_check(&params, protocol, seed, 100)?;
                    println!(
                        "L={sites} {:<8} max|dS| = {:.3e}  max|dG| = {:.3e}",
                        protocol.as_str(),
                        r.max_entropy_deviation,
                        r.max_correlation_deviation
                    );
                    worst.0 = worst.0.max(r.max_entropy_deviation);
                    worst.1 = worst.1.max(r.max_correlation_deviation);
                    reports.push(r);
                }
            }
            if let Some(out) = &args.out {
                fs::create_dir_all(out)?;
                fs::write(
                    out.join("oracle_check.json"),
                    serde_json::to_string_pretty(&reports)? + "\n",
                )?;
            }
            if worst.0 < ORACLE_ENTROPY_TOL && worst.1 < ORACLE_CORRELATION_TOL {
                Ok(())
            } else {
                Err(Error::OracleMismatch(format!(
                    "max|dS| = {:.3e}, max|dG| = {:.3e}",
                    worst.0, worst.1
                )))
            }
        }
    }
}

fn run_protocol(args: &CommonArgs, protocol: Protocol) -> Result<()> {
    let spec = load_spec(args, true)?;
    let out = resolve_out(args, &spec)?;
    let workers = resolve_workers(args.workers)?;
    let manifest = execute(&spec, protocol, &out, workers)?;
    println!(
        "{} jobs written to {} (spec hash {})",
        manifest.jobs.len(),
        out.display(),
        &manifest.spec_hash[..12]
    );
    Ok(())
}

/// Process exit code for a result: 0 success, 1 bad input, 2 runtime
/// failure.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_fills_defaults() {
        let s = parse_spec("protocol = \"qsd\"\nsites = [8]\ngamma = [1.0]\n").unwrap();
        assert_eq!(s.n_traj, 1);
        assert_eq!(s.dt, model::DEFAULT_DT);
        assert_eq!(s.stride, 10);
        let normal = s.to_toml().unwrap();
        assert_eq!(parse_spec(&normal).unwrap(), s);
        assert!(normal.contains("n_traj = 1"));
    }

    #[test]
    fn gamma_range_has_24_points() {
        let s = parse_spec("gamma = { start = 0.25, stop = 6.0, step = 0.25 }").unwrap();
        let g = s.gamma.values().unwrap();
        assert_eq!(g.len(), 24);
        assert_eq!(g[0], 0.25);
        assert_eq!(g[23], 6.0);
        // integers are accepted for floats
        let s = parse_spec("gamma = [1, 6]").unwrap();
        assert_eq!(s.gamma.values().unwrap(), vec![1.0, 6.0]);
    }

    #[test]
    fn validation_names_the_field() {
        let e = parse_spec("sites = [8]\ndt = -0.1\n").unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("`dt`"), "{e}");
        let e = parse_spec("sites = [1]").unwrap_err();
        assert!(e.to_string().contains("sites"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let e = parse_spec("sites = [8]\nbogus = 3\n").unwrap_err();
        match e {
            Error::SpecParse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let e = parse_spec("sites = [8\n").unwrap_err();
        assert!(matches!(e, Error::SpecParse { line: 1.., .. }));
    }

    #[test]
    fn time_rules() {
        let s = parse_spec("sites = [8]\nt_max = { scale = 8.0, min = 40.0 }").unwrap();
        assert_eq!(s.params_for(16, 1.0).t_max, 128.0);
        assert_eq!(s.params_for(16, 6.0).t_max, 40.0);
        assert_eq!(s.params_for(16, 0.0).t_max, 40.0);
        assert_eq!(s.params_for(16, 1.0).subsystem_len, 4);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = parse_spec("sites = [8]\nout = \"a\"").unwrap();
        let b = parse_spec("sites = [8]\nout = \"b\"").unwrap();
        let c = parse_spec("sites = [8]\nmaster_seed = 2").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn line_columns() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }

    #[test]
    fn protocol_mismatch_is_validation_error() {
        let s = parse_spec("protocol = \"qsd\"\nsites = [4]\ngamma = [1.0]").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let e = execute(&s, Protocol::NoClick, dir.path(), Some(1)).unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn fit_rejects_mixed_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut s =
            parse_spec("sites = [8, 12, 16]\ngamma = [1.0]\nt_max = 2.0\ndt = 0.05").unwrap();
        execute(&s, Protocol::NoClick, dir.path(), Some(1)).unwrap();
        let summaries = load_summaries(dir.path()).unwrap();
        assert_eq!(summaries.len(), 3);
        let report = fit_summaries(&summaries, &FitOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].fit.is_some());
        s.master_seed = 99;
        s.sites = vec![8];
        execute(&s, Protocol::NoClick, dir.path(), Some(1)).unwrap();
        let summaries = load_summaries(dir.path()).unwrap();
        let e = fit_summaries(&summaries, &FitOptions::default()).unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(())), 0);
        assert_eq!(exit_code(&Err(Error::param("dt", "bad"))), 1);
        assert_eq!(exit_code(&Err(Error::Linalg("x".into()))), 2);
    }
}
