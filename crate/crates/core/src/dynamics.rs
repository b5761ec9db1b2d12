//! Time stepping of Gaussian states for the two measurement protocols.
//!
//! Both protocols act on the creator block `Y` (first `L` columns of `𝓤`)
//! through creator propagators (see [`crate::gaussian::creator_propagator`]):
//!
//! * unitary part `exp(-iĤ dt)`: `Y ← exp(i dt conj(𝓗)) Y`;
//! * no-click `exp(-iĤ_eff dt)`: `Y ← exp(i dt conj(𝓗_eff)) Y`;
//! * QSD measurement factor `exp(Σ a_i n_i)` with
//!   `a_i = dξ_i + γ dt (2⟨n_i⟩ - 1)`: particle row `i` of `Y` is scaled by
//!   `e^{a_i}` and hole row `i` by `e^{-a_i}`.
//!
//! A QSD step applies the unitary part first and the measurement factor
//! second, with `⟨n_i⟩` taken from the state before the step, and then
//! restores the norm by re-orthonormalising `Y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::entanglement::{self, Anchor, Subsystem};
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState};
use crate::linalg::{self, CMat, C64};
use crate::model::{self, ModelParams, Protocol};

/// Slack allowed on occupations fed to [`qsd_step`].
pub const OCCUPATION_SLACK: f64 = 1e-8;
/// Bound on `‖expm(A) expm(-A) - 1‖` checked by [`precompute_propagators`].
pub const PROPAGATOR_CHECK: f64 = 1e-10;

/// Gaussian Wiener increments `dξ_i` with variance `γ dt`, one value per
/// site and step, drawn from a ChaCha8 stream keyed by `seed`.
#[derive(Clone, Debug)]
pub struct NoiseRealization {
    seed: u64,
    sites: usize,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoiseRealization {
    pub fn new(seed: u64, sites: usize, gamma: f64, dt: f64) -> Self {
        Self {
            seed,
            sites,
            sigma: (gamma * dt).sqrt(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_params(seed: u64, params: &ModelParams) -> Self {
        Self::new(seed, params.sites, params.gamma, params.dt)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fills `out` (length `L`) with the increments of the next step.
    pub fn fill(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.sites);
        for x in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *x = self.sigma * z;
        }
    }

    pub fn next_step(&mut self) -> Vec<f64> {
        let mut v = vec![0.0; self.sites];
        self.fill(&mut v);
        v
    }
}

/// Precomputed propagators for one set of model parameters.
#[derive(Clone, Debug)]
pub struct StepperConfig {
    protocol: Protocol,
    params: ModelParams,
    fingerprint: String,
    /// Creator propagator of `exp(-iĤ dt)`.
    unitary: CMat,
    /// Creator propagator of `exp(-iĤ_eff dt)` (no-click only).
    non_hermitian: Option<CMat>,
    renorm_every: usize,
}

impl StepperConfig {
    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn unitary_propagator(&self) -> &CMat {
        &self.unitary
    }

    pub fn non_hermitian_propagator(&self) -> Option<&CMat> {
        self.non_hermitian.as_ref()
    }

    pub fn renorm_every(&self) -> usize {
        self.renorm_every
    }

    /// Re-orthonormalise every `n` steps instead of every step (QSD needs
    /// an extra Cholesky solve for the occupations in between).
    pub fn with_renorm_every(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("renorm_every", "must be at least 1"));
        }
        self.renorm_every = n;
        Ok(self)
    }

    /// Fails with [`Error::ConfigMismatch`] unless `params` are the ones the
    /// propagators were built from.
    pub fn check(&self, params: &ModelParams) -> Result<()> {
        if params.fingerprint() != self.fingerprint {
            return Err(Error::ConfigMismatch);
        }
        Ok(())
    }
}

pub fn precompute_propagators(params: &ModelParams, protocol: Protocol) -> Result<StepperConfig> {
    params.validate()?;
    let h = model::build_hamiltonian_generator(params)?;
    let dt = params.dt;
    let unitary = linalg::expm_hermitian(
        linalg::conj(h.matrix().as_ref()).as_ref(),
        C64::new(0.0, dt),
    )?;
    let dev = linalg::unitarity_deviation(unitary.as_ref());
    if !(dev < PROPAGATOR_CHECK) {
        return Err(Error::Linalg(format!(
            "unitary propagator deviates from unitarity by {dev:.3e}"
        )));
    }
    let non_hermitian = match protocol {
        Protocol::Qsd => None,
        Protocol::NoClick => {
            let heff = model::build_effective_generator(params)?;
            let a = linalg::scale(
                linalg::conj(heff.matrix().as_ref()).as_ref(),
                C64::new(0.0, dt),
            );
            let fwd = linalg::expm(a.as_ref())?;
            let back = linalg::expm(linalg::scale(a.as_ref(), C64::from(-1.0)).as_ref())?;
            let prod = linalg::mul(fwd.as_ref(), back.as_ref());
            let n = prod.nrows();
            let err = linalg::max_abs_diff(prod.as_ref(), CMat::identity(n, n).as_ref());
            if !(err < PROPAGATOR_CHECK) {
                return Err(Error::Linalg(format!(
                    "non-Hermitian propagator check failed ({err:.3e})"
                )));
            }
            Some(fwd)
        }
    };
    Ok(StepperConfig {
        protocol,
        params: params.clone(),
        fingerprint: params.fingerprint(),
        unitary,
        non_hermitian,
        renorm_every: 1,
    })
}

fn check_occupations(occ: &[f64]) -> Result<()> {
    for (site, &value) in occ.iter().enumerate() {
        if !(-OCCUPATION_SLACK..=1.0 + OCCUPATION_SLACK).contains(&value) {
            return Err(Error::OccupationOutOfRange { site, value });
        }
    }
    Ok(())
}

/// Unnormalised QSD update of a creator block.
fn qsd_update(y: &CMat, cfg: &StepperConfig, noise: &[f64], occ: &[f64]) -> Result<CMat> {
    let l = y.ncols();
    if noise.len() != l || occ.len() != l {
        return Err(Error::param(
            "noise",
            format!("expected {l} values per step"),
        ));
    }
    check_occupations(occ)?;
    let gdt = cfg.params.gamma * cfg.params.dt;
    let mut out = linalg::mul(cfg.unitary.as_ref(), y.as_ref());
    for i in 0..l {
        let a = noise[i] + gdt * (2.0 * occ[i].clamp(0.0, 1.0) - 1.0);
        let up = a.exp();
        let down = (-a).exp();
        for k in 0..l {
            out[(i, k)] *= up;
            out[(l + i, k)] *= down;
        }
    }
    Ok(out)
}

fn noclick_update(y: &CMat, cfg: &StepperConfig) -> Result<CMat> {
    let p = cfg.non_hermitian.as_ref().ok_or_else(|| {
        Error::param(
            "protocol",
            "stepper was not built for the no-click protocol",
        )
    })?;
    Ok(linalg::mul(p.as_ref(), y.as_ref()))
}

/// One QSD step: unitary part, measurement factor, norm restoration.
pub fn qsd_step(
    state: &GaussianState,
    cfg: &StepperConfig,
    noise: &[f64],
    occupations: &[f64],
) -> Result<GaussianState> {
    if state.sites() != cfg.params.sites {
        return Err(Error::ConfigMismatch);
    }
    let y = qsd_update(&state.creators().to_owned(), cfg, noise, occupations)?;
    let mut next = GaussianState::from_creators(y.as_ref());
    gaussian::renormalize_in_place(&mut next)?;
    Ok(next)
}

/// One no-click step: non-Hermitian propagator, then norm restoration.
pub fn noclick_step(state: &GaussianState, cfg: &StepperConfig) -> Result<GaussianState> {
    if state.sites() != cfg.params.sites {
        return Err(Error::ConfigMismatch);
    }
    let y = noclick_update(&state.creators().to_owned(), cfg)?;
    let mut next = GaussianState::from_creators(y.as_ref());
    gaussian::renormalize_in_place(&mut next)?;
    Ok(next)
}

/// Which steps get recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordOptions {
    /// Record every `stride` steps (the first and last step are always
    /// recorded).
    pub stride: usize,
    /// When set, record on a logarithmic grid with this many points per
    /// decade of steps instead of the linear stride.
    pub log_points_per_decade: Option<u32>,
    pub anchor: Anchor,
    pub occupations: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            stride: 10,
            log_points_per_decade: None,
            anchor: Anchor::Boundary,
            occupations: true,
        }
    }
}

impl RecordOptions {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        if self.log_points_per_decade == Some(0) {
            return Err(Error::param("log_points_per_decade", "must be at least 1"));
        }
        Ok(())
    }

    /// Step indices at which a trajectory of `n_steps` steps is sampled.
    pub fn sample_steps(&self, n_steps: usize) -> Vec<usize> {
        let mut steps = vec![0];
        match self.log_points_per_decade {
            None => steps.extend((self.stride..n_steps).step_by(self.stride)),
            Some(ppd) => {
                let mut k = 0u32;
                loop {
                    let s = 10f64.powf(k as f64 / ppd as f64).round() as usize;
                    if s >= n_steps {
                        break;
                    }
                    if s > *steps.last().unwrap() {
                        steps.push(s);
                    }
                    k += 1;
                }
            }
        }
        if n_steps > 0 {
            steps.push(n_steps);
        }
        steps
    }
}

/// Sampled observables of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub fingerprint: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub subsystem: Subsystem,
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    /// One vector of `L` occupations per sample (empty if not recorded).
    pub occupations: Vec<Vec<f64>>,
}

/// Evolves the vacuum with default recording options.
pub fn run_trajectory(
    params: &ModelParams,
    protocol: Protocol,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let cfg = precompute_propagators(params, protocol)?;
    run_trajectory_with(&cfg, seed, &RecordOptions::default())
}

/// Evolves the vacuum with a prebuilt stepper. For the no-click protocol
/// the seed is only stored.
pub fn run_trajectory_with(
    cfg: &StepperConfig,
    seed: u64,
    opts: &RecordOptions,
) -> Result<TrajectoryRecord> {
    opts.validate()?;
    let params = &cfg.params;
    let l = params.sites;
    let sub = Subsystem::anchored(opts.anchor, params.subsystem_len, l);
    sub.validate(l)?;
    let n_steps = params.n_steps();
    let samples = opts.sample_steps(n_steps);

    let mut rec = TrajectoryRecord {
        fingerprint: cfg.fingerprint.clone(),
        protocol: cfg.protocol,
        seed,
        subsystem: sub,
        times: Vec::with_capacity(samples.len()),
        entropy: Vec::with_capacity(samples.len()),
        occupations: Vec::new(),
    };

    let mut noise = NoiseRealization::for_params(seed, params);
    let mut dxi = vec![0.0; l];
    let mut y = gaussian::init_vacuum(l)?.creators().to_owned();
    let mut normalized = true;
    let mut next_sample = 0;

    let wrap = |step: usize, e: Error| Error::Step {
        step,
        source: Box::new(e),
    };

    for step in 0..=n_steps {
        if samples.get(next_sample) == Some(&step) {
            next_sample += 1;
            if !normalized {
                y = linalg::thin_qr_positive(y.as_ref()).0;
                normalized = true;
            }
            let state = GaussianState::from_creators(y.as_ref());
            let s = entanglement::block_entropy(&state, sub).map_err(|e| wrap(step, e))?;
            if !(s.is_finite() && s >= 0.0) {
                return Err(wrap(
                    step,
                    Error::CorruptedCorrelations(format!("entropy {s}")),
                ));
            }
            rec.times.push(step as f64 * params.dt);
            rec.entropy.push(s);
            if opts.occupations {
                rec.occupations.push(state.occupations());
            }
        }
        if step == n_steps {
            break;
        }

        let next = match cfg.protocol {
            Protocol::Qsd => {
                let occ = if normalized {
                    GaussianState::from_creators(y.as_ref()).occupations()
                } else {
                    GaussianState::from_creators(y.as_ref())
                        .occupations_unnormalized()
                        .map_err(|e| wrap(step, e))?
                };
                noise.fill(&mut dxi);
                qsd_update(&y, cfg, &dxi, &occ)
            }
            Protocol::NoClick => noclick_update(&y, cfg),
        };
        y = next.map_err(|e| wrap(step, e))?;
        normalized = false;
        if (step + 1) % cfg.renorm_every == 0 {
            let (q, condition) = linalg::thin_qr_positive(y.as_ref());
            if !(condition <= gaussian::MAX_CONDITION) {
                return Err(wrap(step, Error::Singular { condition }));
            }
            y = q;
            normalized = true;
        }
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{correlation_matrix, init_vacuum};

    #[test]
    fn zero_dt_gives_identity() {
        // dt must be positive for validation; a tiny dt is the practical check
        let p = ModelParams::new(4, 1.0).with_dt(1e-300);
        let cfg = precompute_propagators(&p, Protocol::NoClick).unwrap();
        let id = CMat::identity(8, 8);
        assert!(linalg::max_abs_diff(cfg.unitary_propagator().as_ref(), id.as_ref()) < 1e-15);
        assert!(
            linalg::max_abs_diff(
                cfg.non_hermitian_propagator().unwrap().as_ref(),
                id.as_ref()
            ) < 1e-15
        );
    }

    #[test]
    fn noclick_without_damping_is_unitary_part() {
        let p = ModelParams::new(5, 0.0).with_dt(0.05);
        let cfg = precompute_propagators(&p, Protocol::NoClick).unwrap();
        let d = linalg::max_abs_diff(
            cfg.unitary_propagator().as_ref(),
            cfg.non_hermitian_propagator().unwrap().as_ref(),
        );
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn gamma_zero_qsd_is_unitary() {
        let p = ModelParams::new(6, 0.0).with_dt(0.05).with_t_max(2.0);
        let a = run_trajectory(&p, Protocol::Qsd, 1).unwrap();
        let b = run_trajectory(&p, Protocol::NoClick, 99).unwrap();
        for (x, y) in a.entropy.iter().zip(&b.entropy) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(a.entropy.iter().any(|&s| s > 0.1));
    }

    #[test]
    fn energy_is_conserved_without_measurement() {
        let p = ModelParams::new(8, 0.0).with_dt(0.01);
        let cfg = precompute_propagators(&p, Protocol::Qsd).unwrap();
        let h = model::build_hamiltonian_generator(&p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let (mut state, _) = gaussian::random_state(8, &mut rng);
        let e0 = correlation_matrix(&state).unwrap().expectation(&h);
        let zeros = vec![0.0; 8];
        for _ in 0..1000 {
            let occ = state.occupations();
            state = qsd_step(&state, &cfg, &zeros, &occ).unwrap();
        }
        let e1 = correlation_matrix(&state).unwrap().expectation(&h);
        assert!((e1 - e0).norm() < 1e-6, "{e0} {e1}");
    }

    #[test]
    fn t_max_zero_records_initial_state() {
        let p = ModelParams::new(4, 1.0).with_t_max(0.0);
        let r = run_trajectory(&p, Protocol::Qsd, 3).unwrap();
        assert_eq!(r.times, vec![0.0]);
        assert_eq!(r.entropy, vec![0.0]);
    }

    #[test]
    fn noclick_is_deterministic() {
        let p = ModelParams::new(6, 1.5).with_dt(0.05).with_t_max(3.0);
        let a = run_trajectory(&p, Protocol::NoClick, 1).unwrap();
        let b = run_trajectory(&p, Protocol::NoClick, 2).unwrap();
        assert_eq!(a.entropy, b.entropy);
        assert_eq!(a.occupations, b.occupations);
    }

    #[test]
    fn qsd_seeds_reproduce() {
        let p = ModelParams::new(6, 1.5).with_dt(0.02).with_t_max(2.0);
        let a = run_trajectory(&p, Protocol::Qsd, 5).unwrap();
        let b = run_trajectory(&p, Protocol::Qsd, 5).unwrap();
        let c = run_trajectory(&p, Protocol::Qsd, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entropy, c.entropy);
    }

    #[test]
    fn strong_measurement_pins_vacuum() {
        let p = ModelParams::new(4, 50.0).with_dt(0.005).with_t_max(5.0);
        let r = run_trajectory(&p, Protocol::NoClick, 0).unwrap();
        let last = r.occupations.last().unwrap();
        assert!(last.iter().all(|&n| n < 1e-3), "{last:?}");
        // residual entanglement from virtual pair creation scales like (J/γ)²
        let s = *r.entropy.last().unwrap();
        let weaker = run_trajectory(
            &ModelParams::new(4, 10.0).with_t_max(5.0),
            Protocol::NoClick,
            0,
        )
        .unwrap();
        assert!(s < 1e-2 && s < 0.2 * weaker.entropy.last().unwrap(), "{s}");
    }

    #[test]
    fn sparse_renormalisation_agrees() {
        let p = ModelParams::new(6, 2.0).with_dt(0.01).with_t_max(1.0);
        let opts = RecordOptions::default();
        let every = precompute_propagators(&p, Protocol::Qsd).unwrap();
        let sparse = every.clone().with_renorm_every(5).unwrap();
        let a = run_trajectory_with(&every, 4, &opts).unwrap();
        let b = run_trajectory_with(&sparse, 4, &opts).unwrap();
        for (x, y) in a.entropy.iter().zip(&b.entropy) {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn occupations_are_validated() {
        let p = ModelParams::new(3, 1.0);
        let cfg = precompute_propagators(&p, Protocol::Qsd).unwrap();
        let s = init_vacuum(3).unwrap();
        let err = qsd_step(&s, &cfg, &[0.0; 3], &[0.0, 1.1, 0.0]).unwrap_err();
        assert!(matches!(err, Error::OccupationOutOfRange { site: 1, .. }));
    }

    #[test]
    fn wrong_protocol_is_rejected() {
        let p = ModelParams::new(3, 1.0);
        let cfg = precompute_propagators(&p, Protocol::Qsd).unwrap();
        assert!(noclick_step(&init_vacuum(3).unwrap(), &cfg).is_err());
        assert!(cfg.check(&p).is_ok());
        assert!(matches!(
            cfg.check(&p.clone().with_dt(0.01)),
            Err(Error::ConfigMismatch)
        ));
    }

    #[test]
    fn sample_grids() {
        let o = RecordOptions {
            stride: 10,
            ..Default::default()
        };
        assert_eq!(o.sample_steps(25), vec![0, 10, 20, 25]);
        assert_eq!(o.sample_steps(20), vec![0, 10, 20]);
        assert_eq!(o.sample_steps(0), vec![0]);
        let o = RecordOptions {
            log_points_per_decade: Some(2),
            ..Default::default()
        };
        assert_eq!(o.sample_steps(150), vec![0, 1, 3, 10, 32, 100, 150]);
    }

    #[test]
    fn noise_statistics() {
        let mut n = NoiseRealization::new(17, 10, 2.0, 0.01);
        let draws: Vec<f64> = (0..2000).flat_map(|_| n.next_step()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 5.0 * (0.02f64 / 20000.0).sqrt());
        assert!((var / 0.02 - 1.0).abs() < 0.05);
    }
}
