//! Post-processing: central-charge fits, bimodality, transition location
//! and saturation diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model;

/// Straight-line fit `y = slope · x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub stderr_intercept: f64,
    /// `sqrt(Σ w r²)` of the residuals.
    pub residual_norm: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Least squares with optional weights; standard errors are scaled by the
/// residual variance (`n - 2` degrees of freedom).
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.len();
    if y.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::Fit("fit inputs differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Fit(format!("need at least two points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite fit input".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Fit("weights must be positive and finite".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - mx) * (y[i] - my)).sum();
    let syy: f64 = w.iter().zip(y).map(|(w, y)| w * (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("degenerate design matrix (all x equal)".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n)
        .map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let s2 = if n > 2 { rss / (n - 2) as f64 } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        stderr_slope: (s2 / sxx).sqrt(),
        stderr_intercept: (s2 * (1.0 / sw + mx * mx / sxx)).sqrt(),
        residual_norm: rss.sqrt(),
        r_squared: if syy > 0.0 { 1.0 - rss / syy } else { 1.0 },
        n_points: n,
    })
}

/// One stationary entropy value for a chain of `sites` sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub sites: usize,
    pub entropy: f64,
    /// Standard error of `entropy`, used by the weighted fit.
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Points with fewer sites are dropped.
    pub min_l: usize,
    /// Weight points by `1/stderr²`.
    pub weighted: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_l: 8,
            weighted: false,
        }
    }
}

/// Result of fitting `S = (c/3) ln L + a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c_eff: f64,
    pub intercept: f64,
    pub stderr_c: f64,
    pub stderr_intercept: f64,
    pub residual_norm: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Unweighted fit with the default `min_l`.
pub fn fit_central_charge(points: &[(usize, f64)]) -> Result<FitResult> {
    let pts: Vec<FitPoint> = points
        .iter()
        .map(|&(sites, entropy)| FitPoint {
            sites,
            entropy,
            stderr: 0.0,
        })
        .collect();
    fit_central_charge_with(&pts, &FitOptions::default())
}

pub fn fit_central_charge_with(points: &[FitPoint], opts: &FitOptions) -> Result<FitResult> {
    let kept: Vec<&FitPoint> = points.iter().filter(|p| p.sites >= opts.min_l).collect();
    let mut distinct: Vec<usize> = kept.iter().map(|p| p.sites).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 distinct L >= {}, got {}",
            opts.min_l,
            distinct.len()
        )));
    }
    let x: Vec<f64> = kept.iter().map(|p| (p.sites as f64).ln() / 3.0).collect();
    let y: Vec<f64> = kept.iter().map(|p| p.entropy).collect();
    let w: Option<Vec<f64>> = if opts.weighted {
        Some(kept.iter().map(|p| 1.0 / (p.stderr * p.stderr)).collect())
    } else {
        None
    };
    let f = linear_fit(&x, &y, w.as_deref())?;
    Ok(FitResult {
        c_eff: f.slope,
        intercept: f.intercept,
        stderr_c: f.stderr_slope,
        stderr_intercept: f.stderr_intercept,
        residual_norm: f.residual_norm,
        r_squared: f.r_squared,
        n_points: f.n_points,
    })
}

/// Unimodal threshold of the bimodality coefficient.
pub const BIMODALITY_THRESHOLD: f64 = 5.0 / 9.0;

/// Sarle's bimodality coefficient
/// `(G1² + 1) / (G2 + 3(n-1)²/((n-2)(n-3)))` with the bias-corrected sample
/// skewness `G1` and excess kurtosis `G2`.
pub fn bimodality_coefficient(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 20 {
        return Err(Error::Statistics(format!(
            "bimodality needs at least 20 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let moment = |k: i32| samples.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / nf;
    let m2 = moment(2);
    let scale = samples.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(m2 > (1e-14 * scale).powi(2)) {
        return Err(Error::Statistics(
            "bimodality of zero-variance samples".into(),
        ));
    }
    let g1 = moment(3) / m2.powf(1.5);
    let g2 = moment(4) / (m2 * m2) - 3.0;
    let big_g1 = g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0);
    let big_g2 = (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) * ((nf + 1.0) * g2 + 6.0);
    let correction = 3.0 * (nf - 1.0).powi(2) / ((nf - 2.0) * (nf - 3.0));
    Ok((big_g1 * big_g1 + 1.0) / (big_g2 + correction))
}

/// `c_eff(γ)` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionPoint {
    pub gamma: f64,
    pub c_eff: f64,
    pub stderr: f64,
}

/// Smallest `γ` at which `c_eff ≤ 2·stderr`, linearly interpolating
/// `c_eff - 2·stderr` between the first qualifying grid point and its
/// predecessor.
pub fn locate_transition(points: &[TransitionPoint]) -> Result<f64> {
    let mut pts = points.to_vec();
    if pts
        .iter()
        .any(|p| !(p.gamma.is_finite() && p.c_eff.is_finite() && p.stderr >= 0.0))
    {
        return Err(Error::Fit("invalid transition input".into()));
    }
    pts.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let f = |p: &TransitionPoint| p.c_eff - 2.0 * p.stderr;
    let k = pts
        .iter()
        .position(|p| f(p) <= 0.0)
        .ok_or(Error::NoCrossing)?;
    if k == 0 {
        return Err(Error::NoCrossing);
    }
    let (a, b) = (&pts[k - 1], &pts[k]);
    let (fa, fb) = (f(a), f(b));
    Ok(a.gamma + fa / (fa - fb) * (b.gamma - a.gamma))
}

/// Largest `γ` of the grid at which the analytic imaginary gap is still
/// below `tol`, provided the gap opens further along the grid.
pub fn gap_onset(gammas: &[f64], n_k: usize, tol: f64) -> Result<f64> {
    let mut g = gammas.to_vec();
    g.sort_by(f64::total_cmp);
    let closed: Vec<bool> = g
        .iter()
        .map(|&x| model::imaginary_gap(x, n_k) <= tol)
        .collect();
    let last_closed = closed.iter().rposition(|&c| c).ok_or(Error::NoCrossing)?;
    if last_closed + 1 == g.len() {
        return Err(Error::NoCrossing);
    }
    Ok(g[last_closed])
}

/// First time the series reaches `fraction · target`, linearly
/// interpolated between samples.
pub fn saturation_time(times: &[f64], values: &[f64], target: f64, fraction: f64) -> Result<f64> {
    let level = fraction * target;
    let k = values
        .iter()
        .position(|&v| v >= level)
        .ok_or_else(|| Error::Statistics(format!("series never reaches {level}")))?;
    if k == 0 {
        return Ok(times[0]);
    }
    let (v0, v1) = (values[k - 1], values[k]);
    Ok(times[k - 1] + (level - v0) / (v1 - v0) * (times[k] - times[k - 1]))
}

/// Fit of `S` against `ln t` for samples with `t_lo ≤ t ≤ t_hi`, `t > 0`.
pub fn log_growth_fit(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> Result<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t > 0.0 && t >= t_lo && t <= t_hi)
        .map(|(&t, &v)| (t.ln(), v))
        .unzip();
    linear_fit(&x, &y, None)
}

/// True when no step of the sequence rises by more than `k` combined
/// standard errors.
pub fn monotone_within_errors(values: &[f64], stderr: &[f64], k: f64) -> bool {
    values
        .windows(2)
        .zip(stderr.windows(2))
        .all(|(v, s)| v[1] <= v[0] + k * (s[0] * s[0] + s[1] * s[1]).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn exact_on_noiseless_log_law() {
        let pts: Vec<(usize, f64)> = [8, 16, 32, 64]
            .iter()
            .map(|&l| (l, 1.5 / 3.0 * (l as f64).ln() + 0.2))
            .collect();
        let f = fit_central_charge(&pts).unwrap();
        assert!((f.c_eff - 1.5).abs() < 1e-13);
        assert!((f.intercept - 0.2).abs() < 1e-13);
        assert!(f.stderr_c < 1e-12 && f.residual_norm < 1e-13);
    }

    #[test]
    fn area_law_fit() {
        let pts: Vec<(usize, f64)> = [8, 16, 32, 64].iter().map(|&l| (l, 0.7)).collect();
        let f = fit_central_charge(&pts).unwrap();
        assert!(f.c_eff.abs() < 1e-13);
        assert!((f.intercept - 0.7).abs() < 1e-13);
        assert!(f.stderr_c >= 0.0);
    }

    #[test]
    fn fit_preconditions() {
        assert!(fit_central_charge(&[(8, 1.0), (16, 1.1), (16, 1.2)]).is_err());
        assert!(fit_central_charge(&[(4, 1.0), (8, 1.1), (16, 1.2)]).is_err());
        let pts = [
            FitPoint {
                sites: 4,
                entropy: 1.0,
                stderr: 0.1,
            },
            FitPoint {
                sites: 8,
                entropy: 1.2,
                stderr: 0.1,
            },
            FitPoint {
                sites: 16,
                entropy: 1.4,
                stderr: 0.0,
            },
        ];
        let opts = FitOptions {
            min_l: 2,
            weighted: true,
        };
        assert!(fit_central_charge_with(&pts, &opts).is_err());
        let opts = FitOptions {
            min_l: 2,
            weighted: false,
        };
        assert!(fit_central_charge_with(&pts, &opts).is_ok());
    }

    #[test]
    fn weighted_fit_downweights_outlier() {
        let mut pts: Vec<FitPoint> = [8, 16, 32, 64]
            .iter()
            .map(|&l| FitPoint {
                sites: l,
                entropy: (l as f64).ln() / 3.0,
                stderr: 0.01,
            })
            .collect();
        pts[3].entropy += 1.0;
        pts[3].stderr = 100.0;
        let w = fit_central_charge_with(
            &pts,
            &FitOptions {
                weighted: true,
                ..Default::default()
            },
        )
        .unwrap();
        let u = fit_central_charge_with(&pts, &FitOptions::default()).unwrap();
        assert!((w.c_eff - 1.0).abs() < 1e-3);
        assert!((u.c_eff - 1.0).abs() > 0.1);
    }

    #[test]
    fn gaussian_bimodality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let b = bimodality_coefficient(&xs).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 0.02, "{b}");
    }

    #[test]
    fn two_delta_bimodality() {
        let xs: Vec<f64> = (0..10_000)
            .map(|k| if k % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        let b = bimodality_coefficient(&xs).unwrap();
        assert!((b - 1.0).abs() < 1e-3, "{b}");
    }

    #[test]
    fn bimodality_preconditions() {
        assert!(bimodality_coefficient(&[1.0; 10]).is_err());
        assert!(bimodality_coefficient(&[1.0; 30]).is_err());
    }

    #[test]
    fn synthetic_transition() {
        let pts: Vec<TransitionPoint> = (0..=24)
            .map(|k| {
                let g = 0.25 * k as f64;
                TransitionPoint {
                    gamma: g,
                    c_eff: (4.0 - g).max(0.0),
                    stderr: 0.0,
                }
            })
            .collect();
        let gc = locate_transition(&pts).unwrap();
        assert!((gc - 4.0).abs() <= 0.25);
    }

    #[test]
    fn transition_needs_a_crossing() {
        let up = [
            TransitionPoint {
                gamma: 1.0,
                c_eff: 1.0,
                stderr: 0.1,
            },
            TransitionPoint {
                gamma: 2.0,
                c_eff: 0.9,
                stderr: 0.1,
            },
        ];
        assert!(matches!(locate_transition(&up), Err(Error::NoCrossing)));
        let flat = [
            TransitionPoint {
                gamma: 1.0,
                c_eff: 0.0,
                stderr: 0.1,
            },
            TransitionPoint {
                gamma: 2.0,
                c_eff: 0.0,
                stderr: 0.1,
            },
        ];
        assert!(matches!(locate_transition(&flat), Err(Error::NoCrossing)));
    }

    #[test]
    fn analytic_gap_onset_is_four() {
        let gammas: Vec<f64> = (0..=24).map(|k| 0.25 * k as f64).collect();
        assert_eq!(gap_onset(&gammas, 1001, 1e-10).unwrap(), 4.0);
    }

    #[test]
    fn saturation_and_log_growth() {
        let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|&t| 1.0 - (-t).exp()).collect();
        let ts = saturation_time(&t, &v, 1.0, 0.9).unwrap();
        assert!((ts - 10f64.ln()).abs() < 0.01);
        let v: Vec<f64> = t.iter().map(|&t| 0.5 * t.max(1e-9).ln() + 2.0).collect();
        let f = log_growth_fit(&t, &v, 0.5, 10.0).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_tolerance() {
        assert!(monotone_within_errors(
            &[3.0, 2.0, 2.05, 1.0],
            &[0.1; 4],
            2.0
        ));
        assert!(!monotone_within_errors(
            &[3.0, 2.0, 2.5, 1.0],
            &[0.1; 4],
            2.0
        ));
    }

    proptest! {
        #[test]
        fn bimodality_is_affine_invariant(
            xs in proptest::collection::vec(-5.0f64..5.0, 20..200),
            a in 0.1f64..10.0,
            b in -10.0f64..10.0,
        ) {
            prop_assume!(bimodality_coefficient(&xs).is_ok());
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let bx = bimodality_coefficient(&xs).unwrap();
            let by = bimodality_coefficient(&ys).unwrap();
            prop_assert!((bx - by).abs() < 1e-10 * bx.abs().max(1.0));
        }

        #[test]
        fn shifting_up_never_lowers_gamma_c(
            cs in proptest::collection::vec(-1.0f64..3.0, 3..20),
            errs in proptest::collection::vec(0.0f64..0.3, 20),
            shift in 0.0f64..1.0,
        ) {
            let pts: Vec<TransitionPoint> = cs.iter().enumerate()
                .map(|(k, &c)| TransitionPoint { gamma: 0.25 * k as f64, c_eff: c, stderr: errs[k] })
                .collect();
            let shifted: Vec<TransitionPoint> = pts.iter()
                .map(|p| TransitionPoint { c_eff: p.c_eff + shift, ..*p })
                .collect();
            if let (Ok(a), Ok(b)) = (locate_transition(&pts), locate_transition(&shifted)) {
                prop_assert!(b >= a - 1e-12);
            }
        }

        #[test]
        fn fit_is_exact_on_lines(c in -2.0f64..3.0, a in -1.0f64..2.0) {
            let pts: Vec<(usize, f64)> = [8, 12, 16, 24, 32]
                .iter().map(|&l| (l, c / 3.0 * (l as f64).ln() + a)).collect();
            let f = fit_central_charge(&pts).unwrap();
            prop_assert!((f.c_eff - c).abs() < 1e-12);
            prop_assert!((f.intercept - a).abs() < 1e-12);
        }
    }
}
