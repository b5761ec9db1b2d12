//! Trajectory ensembles and their statistics.
//!
//! Trajectory `k` of an ensemble with master seed `m` uses the noise seed
//! [`split_seed`]`(m, k)`. Trajectories run on a rayon pool in fixed-size
//! chunks; each chunk is collected in index order and folded into the
//! running statistics sequentially, so the result does not depend on the
//! number of workers or on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, RecordOptions, StepperConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Protocol};

/// Entropies at or below this value count as zero for the typical value.
pub const ZERO_ENTROPY: f64 = 1e-12;

/// Trajectories handed to the pool at a time.
const CHUNK: usize = 64;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`: the `index`-th output of a SplitMix64
/// generator started at `master`. For a fixed master the map is a
/// bijection of the index, so seeds never collide within an ensemble.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Histogram bin selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    #[default]
    FreedmanDiaconis,
    Fixed(usize),
}

const MAX_BINS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Probability density; `Σ density · width = 1` over in-range samples.
    pub density: Vec<f64>,
    /// Samples that fell outside the requested range.
    pub clipped: usize,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Normalised histogram of `samples` over `range` (default: the sample
/// range). Samples outside an explicit range are counted in `clipped`.
pub fn histogram(
    samples: &[f64],
    binning: Binning,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::Statistics("histogram of an empty sample set".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Statistics("histogram of non-finite samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = match range {
        Some((a, b)) => {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::param(
                    "range",
                    format!("invalid histogram range [{a}, {b}]"),
                ));
            }
            (a, b)
        }
        None => (sorted[0], sorted[sorted.len() - 1]),
    };
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let n_bins = match binning {
        Binning::Fixed(0) => return Err(Error::param("bins", "need at least one bin")),
        Binning::Fixed(n) => n,
        Binning::FreedmanDiaconis => {
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let n = sorted.len() as f64;
            if iqr > 0.0 {
                let width = 2.0 * iqr / n.cbrt();
                ((hi - lo) / width).ceil().max(1.0) as usize
            } else {
                // Sturges
                (n.log2().ceil() as usize + 1).max(1)
            }
        }
    }
    .min(MAX_BINS);
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    let mut clipped = 0;
    for &x in samples {
        if x < lo || x > hi {
            clipped += 1;
            continue;
        }
        let k = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let inside = (samples.len() - clipped) as f64;
    let edges = (0..=n_bins)
        .map(|k| {
            if k == n_bins {
                hi
            } else {
                lo + k as f64 * width
            }
        })
        .collect();
    let density = counts
        .iter()
        .map(|&c| {
            if inside > 0.0 {
                c as f64 / (inside * width)
            } else {
                0.0
            }
        })
        .collect();
    Ok(Histogram {
        edges,
        counts,
        density,
        clipped,
    })
}

/// Mean, median and typical value of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimators {
    pub mean: f64,
    pub median: f64,
    /// `exp(mean ln S)` over the samples above [`ZERO_ENTROPY`]; zero if
    /// there are none.
    pub typical: f64,
    /// Samples left out of the typical value.
    pub excluded_zeros: usize,
}

pub fn estimators(samples: &[f64]) -> Result<Estimators> {
    if samples.is_empty() {
        return Err(Error::Statistics(
            "estimators of an empty sample set".into(),
        ));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let positive: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|&s| s > ZERO_ENTROPY)
        .collect();
    let typical = if positive.is_empty() {
        0.0
    } else {
        (positive.iter().map(|s| s.ln()).sum::<f64>() / positive.len() as f64).exp()
    };
    Ok(Estimators {
        mean,
        median,
        typical,
        excluded_zeros: n - positive.len(),
    })
}

fn stderr_of(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x < t);
    if k == 0 {
        return values[0];
    }
    if k == times.len() {
        return values[k - 1];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    if t1 == t0 {
        return values[k];
    }
    values[k - 1] + (values[k] - values[k - 1]) * (t - t0) / (t1 - t0)
}

/// Time average of a sampled series over `[t_sat, t_end]` by trapezoidal
/// quadrature, with the window endpoints linearly interpolated.
pub fn stationary_average(times: &[f64], values: &[f64], t_sat: f64, t_end: f64) -> Result<f64> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::Statistics(
            "series and time grid differ in length or are empty".into(),
        ));
    }
    let last = times[times.len() - 1];
    let tol = 1e-9 * last.abs().max(1.0);
    if !(t_sat < t_end) || t_end > last + tol || t_sat < times[0] - tol {
        return Err(Error::Statistics(format!(
            "empty stationary window [{t_sat}, {t_end}] for samples on [{}, {last}]",
            times[0]
        )));
    }
    let t_end = t_end.min(last);
    let mut pts = vec![(t_sat, interpolate(times, values, t_sat))];
    for (&t, &v) in times.iter().zip(values) {
        if t > t_sat && t < t_end {
            pts.push((t, v));
        }
    }
    pts.push((t_end, interpolate(times, values, t_end)));
    let area: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(area / (t_end - t_sat))
}

/// Default start of the stationary window, `4L/γ`, falling back to half of
/// `t_end` when that lies beyond it.
pub fn default_t_sat(params: &ModelParams, t_end: f64) -> f64 {
    let t = 4.0 * params.sites as f64 / params.gamma;
    if t.is_finite() && t < t_end {
        t
    } else {
        0.5 * t_end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub record: RecordOptions,
    pub t_sat: Option<f64>,
    pub t_end: Option<f64>,
    /// Instantaneous samples per trajectory taken from the stationary
    /// window, evenly spaced over it and ending at its last sample.
    pub snapshots_per_trajectory: usize,
    pub binning: Binning,
    pub renorm_every: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            n_traj: 1,
            master_seed: 0,
            workers: None,
            record: RecordOptions::default(),
            t_sat: None,
            t_end: None,
            snapshots_per_trajectory: 1,
            binning: Binning::default(),
            renorm_every: 1,
        }
    }
}

impl EnsembleOptions {
    pub fn new(n_traj: usize, master_seed: u64) -> Self {
        Self {
            n_traj,
            master_seed,
            ..Default::default()
        }
    }
}

/// Aggregated statistics of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub fingerprint: String,
    pub protocol: Protocol,
    pub n_traj: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub median: Vec<f64>,
    pub typical: Vec<f64>,
    pub typical_excluded: Vec<usize>,
    /// Mean occupations per sample time (empty if not recorded).
    pub mean_occupations: Vec<Vec<f64>>,
    pub stderr_occupations: Vec<Vec<f64>>,
    pub t_sat: f64,
    pub t_end: f64,
    /// Time average of `S` over the window, one per trajectory.
    pub stationary: Vec<f64>,
    pub stationary_mean: f64,
    pub stationary_stderr: f64,
    /// Instantaneous `S` values from the window.
    pub snapshots: Vec<f64>,
    pub histogram: Histogram,
    /// Least-squares slope of the mean `S` against `ln t` inside the window.
    pub window_log_slope: f64,
}

fn snapshot_indices(times: &[f64], t_sat: f64, t_end: f64, count: usize) -> Vec<usize> {
    let inside: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= t_sat - 1e-12 && times[k] <= t_end + 1e-12)
        .collect();
    if inside.is_empty() || count == 0 {
        return Vec::new();
    }
    let m = inside.len();
    let count = count.min(m);
    // evenly spaced, always including the last sample of the window
    let mut out: Vec<usize> = if count == 1 {
        vec![inside[m - 1]]
    } else {
        (0..count)
            .map(|j| inside[m - 1 - (count - 1 - j) * (m - 1) / (count - 1)])
            .collect()
    };
    out.dedup();
    out
}

/// Ordinary least-squares slope of `y` against `x`.
pub(crate) fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match workers {
        Some(0) => return Err(Error::param("workers", "must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))
}

/// Runs an ensemble from the vacuum. For the no-click protocol a single
/// trajectory is run whatever `opts.n_traj` says.
pub fn run_ensemble(
    params: &ModelParams,
    protocol: Protocol,
    opts: &EnsembleOptions,
) -> Result<EnsembleStats> {
    params.validate()?;
    opts.record.validate()?;
    if opts.n_traj == 0 {
        return Err(Error::param("n_traj", "must be at least 1"));
    }
    let n_traj = if protocol == Protocol::NoClick {
        1
    } else {
        opts.n_traj
    };
    let cfg =
        dynamics::precompute_propagators(params, protocol)?.with_renorm_every(opts.renorm_every)?;
    let pool = build_pool(opts.workers)?;

    let times: Vec<f64> = opts
        .record
        .sample_steps(params.n_steps())
        .iter()
        .map(|&s| s as f64 * params.dt)
        .collect();
    let last = *times.last().unwrap();
    let t_end = opts.t_end.unwrap_or(last).min(last);
    let t_sat = opts.t_sat.unwrap_or_else(|| default_t_sat(params, t_end));
    if !(t_sat < t_end) && n_traj > 0 && last > 0.0 {
        return Err(Error::param(
            "t_sat",
            format!("stationary window [{t_sat}, {t_end}] is empty"),
        ));
    }
    let snap_idx = snapshot_indices(&times, t_sat, t_end, opts.snapshots_per_trajectory);

    let n_t = times.len();
    let seeds: Vec<u64> = (0..n_traj as u64)
        .map(|k| split_seed(opts.master_seed, k))
        .collect();
    let mut entropy = vec![Vec::with_capacity(n_traj); n_t];
    let l = params.sites;
    let track_occ = opts.record.occupations;
    let mut occ_sum = vec![vec![0.0; l]; if track_occ { n_t } else { 0 }];
    let mut occ_sq = occ_sum.clone();
    let mut stationary = Vec::with_capacity(n_traj);
    let mut snapshots = Vec::with_capacity(n_traj * snap_idx.len());

    let run_one = |cfg: &StepperConfig, index: usize, seed: u64| -> Result<TrajectoryRecord> {
        dynamics::run_trajectory_with(cfg, seed, &opts.record).map_err(|e| Error::Trajectory {
            index,
            seed,
            source: Box::new(e),
        })
    };

    for chunk_start in (0..n_traj).step_by(CHUNK) {
        let chunk_end = (chunk_start + CHUNK).min(n_traj);
        let records: Vec<Result<TrajectoryRecord>> = pool.install(|| {
            (chunk_start..chunk_end)
                .into_par_iter()
                .map(|k| run_one(&cfg, k, seeds[k]))
                .collect()
        });
        for rec in records {
            let rec = rec?;
            for (k, &s) in rec.entropy.iter().enumerate() {
                entropy[k].push(s);
            }
            if track_occ {
                for (k, occ) in rec.occupations.iter().enumerate() {
                    for i in 0..l {
                        occ_sum[k][i] += occ[i];
                        occ_sq[k][i] += occ[i] * occ[i];
                    }
                }
            }
            if last > 0.0 {
                stationary.push(stationary_average(&rec.times, &rec.entropy, t_sat, t_end)?);
            } else {
                stationary.push(rec.entropy[0]);
            }
            snapshots.extend(snap_idx.iter().map(|&k| rec.entropy[k]));
        }
    }
    if snapshots.is_empty() {
        snapshots.push(*entropy[n_t - 1].last().unwrap());
    }

    let nf = n_traj as f64;
    let mut stats = EnsembleStats {
        fingerprint: cfg.fingerprint().to_string(),
        protocol,
        n_traj,
        master_seed: opts.master_seed,
        seeds,
        times: times.clone(),
        mean: Vec::with_capacity(n_t),
        stderr: Vec::with_capacity(n_t),
        median: Vec::with_capacity(n_t),
        typical: Vec::with_capacity(n_t),
        typical_excluded: Vec::with_capacity(n_t),
        mean_occupations: Vec::new(),
        stderr_occupations: Vec::new(),
        t_sat,
        t_end,
        stationary_mean: 0.0,
        stationary_stderr: stderr_of(&stationary),
        stationary,
        histogram: histogram(&snapshots, opts.binning, None)?,
        snapshots,
        window_log_slope: 0.0,
    };
    stats.stationary_mean = stats.stationary.iter().sum::<f64>() / nf;
    for samples in &entropy {
        let e = estimators(samples)?;
        stats.mean.push(e.mean);
        stats.stderr.push(stderr_of(samples));
        stats.median.push(e.median);
        stats.typical.push(e.typical);
        stats.typical_excluded.push(e.excluded_zeros);
    }
    if track_occ {
        for k in 0..n_t {
            let mean: Vec<f64> = occ_sum[k].iter().map(|s| s / nf).collect();
            let se = (0..l)
                .map(|i| {
                    if n_traj < 2 {
                        0.0
                    } else {
                        let var = ((occ_sq[k][i] - nf * mean[i] * mean[i]) / (nf - 1.0)).max(0.0);
                        (var / nf).sqrt()
                    }
                })
                .collect();
            stats.mean_occupations.push(mean);
            stats.stderr_occupations.push(se);
        }
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&stats.mean)
        .filter(|(&t, _)| t >= t_sat && t <= t_end && t > 0.0)
        .map(|(&t, &s)| (t.ln(), s))
        .unzip();
    stats.window_log_slope = ols_slope(&lx, &ly);
    Ok(stats)
}
