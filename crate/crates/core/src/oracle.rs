//! Dense reference simulator on the full `2^L` Hilbert space.
//!
//! Basis states are bit strings with site `i` (0-based) on bit `i`; a set
//! bit means the site is occupied (`n_i = 1`, spin up in the measured
//! basis). Fermion operators carry the Jordan-Wigner sign
//! `(-1)^{#occupied sites below i}`. The Hamiltonian is built from Pauli
//! matrices and never from the Nambu matrices, so agreement with the
//! Gaussian engine checks the fermionisation as a whole.

use serde::Serialize;

use crate::dynamics::{self, NoiseRealization, RecordOptions};
use crate::entanglement::{self, Subsystem};
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState};
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::model::{ModelParams, NambuGenerator, Protocol};

pub const MAX_SITES: usize = 8;
pub const MAX_LINDBLAD_SITES: usize = 6;

fn check_size(sites: usize, max: usize) -> Result<()> {
    if sites > max {
        return Err(Error::OracleTooLarge { sites, max });
    }
    if sites < 2 {
        return Err(Error::param(
            "sites",
            format!("need at least 2 sites, got {sites}"),
        ));
    }
    Ok(())
}

/// Action of `Ψ_a` on a basis state: `None` if it annihilates it,
/// otherwise the image state and its sign.
fn nambu_action(a: usize, sites: usize, s: usize) -> Option<(usize, f64)> {
    let (i, create) = if a < sites {
        (a, false)
    } else {
        (a - sites, true)
    };
    let bit = 1usize << i;
    let occupied = s & bit != 0;
    if occupied == create {
        return None;
    }
    let sign = if (s & (bit - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    Some((s ^ bit, sign))
}

/// Action of `Ψ†_a`, i.e. `Ψ` with the particle and hole halves swapped.
fn nambu_dagger_action(a: usize, sites: usize, s: usize) -> Option<(usize, f64)> {
    let swapped = if a < sites { a + sites } else { a - sites };
    nambu_action(swapped, sites, s)
}

fn apply_nambu(a: usize, sites: usize, psi: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; psi.len()];
    for (s, &amp) in psi.iter().enumerate() {
        if let Some((t, sign)) = nambu_action(a, sites, s) {
            out[t] += amp * sign;
        }
    }
    out
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn matvec(m: &CMat, v: &[C64]) -> Vec<C64> {
    let n = v.len();
    let mut out = vec![ZERO; n];
    for j in 0..n {
        let x = v[j];
        if x == ZERO {
            continue;
        }
        for i in 0..n {
            out[i] += m[(i, j)] * x;
        }
    }
    out
}

/// State vector on `2^L` amplitudes.
#[derive(Clone, Debug)]
pub struct DenseState {
    sites: usize,
    amps: Vec<C64>,
}

impl DenseState {
    pub fn vacuum(sites: usize) -> Result<Self> {
        check_size(sites, MAX_SITES)?;
        let mut amps = vec![ZERO; 1 << sites];
        amps[0] = ONE;
        Ok(Self { sites, amps })
    }

    pub fn from_amplitudes(sites: usize, amps: Vec<C64>) -> Result<Self> {
        check_size(sites, MAX_SITES)?;
        if amps.len() != 1 << sites {
            return Err(Error::param(
                "amplitudes",
                format!("expected {} amplitudes", 1usize << sites),
            ));
        }
        Ok(Self { sites, amps })
    }

    /// The many-body vector of a Gaussian state: the common null vector of
    /// its quasiparticle annihilators. Defined up to a global phase.
    pub fn from_gaussian(state: &GaussianState) -> Result<Self> {
        let l = state.sites();
        check_size(l, MAX_SITES)?;
        let dim = 1usize << l;
        let u = state.u_matrix();
        let mut m = CMat::zeros(dim, dim);
        for k in 0..l {
            // χ_k = Σ_a conj(U_ak) Ψ†_a
            let mut x = CMat::zeros(dim, dim);
            for s in 0..dim {
                for a in 0..2 * l {
                    if let Some((t, sign)) = nambu_dagger_action(a, l, s) {
                        x[(t, s)] += u[(a, k)].conj() * sign;
                    }
                }
            }
            m += &linalg::mul(x.as_ref().adjoint(), x.as_ref());
        }
        let evd = m
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Linalg(format!("{e:?}")))?;
        let lowest = evd.S().column_vector()[0].re;
        if lowest.abs() > 1e-8 {
            return Err(Error::Linalg(format!(
                "no Gaussian null vector (lowest eigenvalue {lowest:.3e})"
            )));
        }
        let amps = (0..dim).map(|i| evd.U()[(i, 0)]).collect();
        Ok(Self { sites: l, amps })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        inner(&self.amps, &self.amps).re.sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Linalg(format!(
                "cannot normalise a state of norm {n}"
            )));
        }
        for a in &mut self.amps {
            *a /= n;
        }
        Ok(())
    }

    pub fn occupations(&self) -> Vec<f64> {
        let mut occ = vec![0.0; self.sites];
        for (s, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (i, o) in occ.iter_mut().enumerate() {
                if s >> i & 1 == 1 {
                    *o += p;
                }
            }
        }
        occ
    }

    /// `G_ab = ⟨Ψ†_a Ψ_b⟩ = ⟨Ψ_a ψ | Ψ_b ψ⟩`.
    pub fn correlation_matrix(&self) -> CMat {
        let n = 2 * self.sites;
        let images: Vec<Vec<C64>> = (0..n)
            .map(|a| apply_nambu(a, self.sites, &self.amps))
            .collect();
        CMat::from_fn(n, n, |a, b| inner(&images[a], &images[b]))
    }

    /// `⟨a_μ a_ν⟩` for the interleaved Majorana operators
    /// `a_{j,1} = c_j + c†_j`, `a_{j,2} = i(c†_j - c_j)`.
    pub fn majorana_correlators(&self) -> CMat {
        let l = self.sites;
        let images: Vec<Vec<C64>> = (0..2 * l)
            .map(|mu| {
                let j = mu / 2;
                let c = apply_nambu(j, l, &self.amps);
                let cd = apply_nambu(l + j, l, &self.amps);
                if mu % 2 == 0 {
                    c.iter().zip(&cd).map(|(x, y)| x + y).collect()
                } else {
                    c.iter()
                        .zip(&cd)
                        .map(|(x, y)| C64::new(0.0, 1.0) * (y - x))
                        .collect()
                }
            })
            .collect();
        CMat::from_fn(2 * l, 2 * l, |m, n| inner(&images[m], &images[n]))
    }
}

/// `J Σ σˣ_i σˣ_{i+1}` with open boundaries.
pub fn build_pauli_hamiltonian(params: &ModelParams) -> Result<CMat> {
    check_size(params.sites, MAX_SITES)?;
    let l = params.sites;
    let dim = 1usize << l;
    let mut h = CMat::zeros(dim, dim);
    for s in 0..dim {
        for i in 0..l - 1 {
            let mask = (1usize << i) | (1usize << (i + 1));
            h[(s ^ mask, s)] += C64::from(params.coupling);
        }
    }
    Ok(h)
}

/// `H - i(γ/2) Σ n_i`.
pub fn build_effective_hamiltonian(params: &ModelParams) -> Result<CMat> {
    let mut h = build_pauli_hamiltonian(params)?;
    for s in 0..h.nrows() {
        h[(s, s)] += C64::new(0.0, -0.5 * params.gamma * s.count_ones() as f64);
    }
    Ok(h)
}

/// Dense image `½ Σ Ψ†_a 𝓗_ab Ψ_b` of a Nambu matrix (no constant).
pub fn nambu_to_dense(gen: &NambuGenerator) -> Result<CMat> {
    let l = gen.sites();
    check_size(l, MAX_SITES)?;
    let dim = 1usize << l;
    let m = gen.matrix();
    let mut out = CMat::zeros(dim, dim);
    for s in 0..dim {
        for b in 0..2 * l {
            let Some((t, sb)) = nambu_action(b, l, s) else {
                continue;
            };
            for a in 0..2 * l {
                let coef = m[(a, b)];
                if coef == ZERO {
                    continue;
                }
                if let Some((r, sa)) = nambu_dagger_action(a, l, t) {
                    out[(r, s)] += 0.5 * coef * sa * sb;
                }
            }
        }
    }
    Ok(out)
}

/// `exp(a)` by Taylor series with scaling and squaring. Kept separate from
/// the Padé routine used by the production code.
pub fn taylor_expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = linalg::one_norm(a.as_ref());
    let mut squarings = 0;
    while norm * 0.5f64.powi(squarings) > 0.25 {
        squarings += 1;
    }
    let a = linalg::scale(a.as_ref(), C64::from(0.5f64.powi(squarings)));
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..60 {
        term = linalg::scale(
            linalg::mul(term.as_ref(), a.as_ref()).as_ref(),
            C64::from(1.0 / k as f64),
        );
        sum += &term;
        if term.as_ref().norm_max() < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = linalg::mul(sum.as_ref(), sum.as_ref());
    }
    sum
}

/// Dense propagators for one parameter set.
#[derive(Clone, Debug)]
pub struct DenseStepper {
    params: ModelParams,
    unitary: CMat,
    non_hermitian: CMat,
}

impl DenseStepper {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        check_size(params.sites, MAX_SITES)?;
        let h = build_pauli_hamiltonian(params)?;
        let unitary = taylor_expm(&linalg::scale(h.as_ref(), C64::new(0.0, -params.dt)));
        let heff = build_effective_hamiltonian(params)?;
        let non_hermitian = taylor_expm(&linalg::scale(heff.as_ref(), C64::new(0.0, -params.dt)));
        Ok(Self {
            params: params.clone(),
            unitary,
            non_hermitian,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

/// One QSD step: `exp(-iH dt)`, then `exp(Σ a_i n_i)` with
/// `a_i = dξ_i + γ dt (2⟨n_i⟩ - 1)` from the pre-step occupations, then
/// normalisation.
pub fn dense_qsd_step(
    state: &DenseState,
    noise: &[f64],
    stepper: &DenseStepper,
) -> Result<DenseState> {
    let l = state.sites;
    if noise.len() != l || stepper.params.sites != l {
        return Err(Error::ConfigMismatch);
    }
    let occ = state.occupations();
    let gdt = stepper.params.gamma * stepper.params.dt;
    let a: Vec<f64> = (0..l)
        .map(|i| noise[i] + gdt * (2.0 * occ[i] - 1.0))
        .collect();
    let mut amps = matvec(&stepper.unitary, &state.amps);
    for (s, amp) in amps.iter_mut().enumerate() {
        let x: f64 = (0..l).filter(|&i| s >> i & 1 == 1).map(|i| a[i]).sum();
        *amp *= x.exp();
    }
    let mut out = DenseState { sites: l, amps };
    out.normalize()?;
    Ok(out)
}

/// One no-click step `exp(-iH_eff dt)` followed by normalisation.
pub fn dense_noclick_step(state: &DenseState, stepper: &DenseStepper) -> Result<DenseState> {
    if stepper.params.sites != state.sites {
        return Err(Error::ConfigMismatch);
    }
    let mut out = DenseState {
        sites: state.sites,
        amps: matvec(&stepper.non_hermitian, &state.amps),
    };
    out.normalize()?;
    Ok(out)
}

/// Unitary step without normalisation (for norm-preservation checks).
pub fn dense_unitary_step(state: &DenseState, stepper: &DenseStepper) -> DenseState {
    DenseState {
        sites: state.sites,
        amps: matvec(&stepper.unitary, &state.amps),
    }
}

/// Von Neumann entropy of a contiguous block from the reduced density
/// matrix.
pub fn dense_entropy(state: &DenseState, sub: Subsystem) -> Result<f64> {
    sub.validate(state.sites)?;
    let l = state.sites;
    let da = 1usize << sub.len;
    let block_mask = (da - 1) << sub.start;
    let mut rho = CMat::zeros(da, da);
    // group amplitudes by the environment configuration
    let rest = l - sub.len;
    for env in 0..1usize << rest {
        let low = env & ((1 << sub.start) - 1);
        let high = (env >> sub.start) << (sub.start + sub.len);
        let base = low | high;
        debug_assert_eq!(base & block_mask, 0);
        let col: Vec<C64> = (0..da)
            .map(|a| state.amps[base | (a << sub.start)])
            .collect();
        for i in 0..da {
            if col[i] == ZERO {
                continue;
            }
            for j in 0..da {
                rho[(i, j)] += col[i] * col[j].conj();
            }
        }
    }
    let ev = linalg::hermitian_eigenvalues(rho.as_ref())?;
    Ok(ev
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0))
}

/// Sampled observables of a dense trajectory, on the same grid as
/// [`dynamics::run_trajectory_with`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DenseRecord {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub occupations: Vec<Vec<f64>>,
}

pub fn dense_trajectory(
    params: &ModelParams,
    protocol: Protocol,
    seed: u64,
    opts: &RecordOptions,
) -> Result<DenseRecord> {
    let stepper = DenseStepper::new(params)?;
    let l = params.sites;
    let sub = Subsystem::anchored(opts.anchor, params.subsystem_len, l);
    let n_steps = params.n_steps();
    let samples = opts.sample_steps(n_steps);
    let mut noise = NoiseRealization::for_params(seed, params);
    let mut state = DenseState::vacuum(l)?;
    let mut rec = DenseRecord {
        times: Vec::new(),
        entropy: Vec::new(),
        occupations: Vec::new(),
    };
    let mut next = 0;
    for step in 0..=n_steps {
        if samples.get(next) == Some(&step) {
            next += 1;
            rec.times.push(step as f64 * params.dt);
            rec.entropy.push(dense_entropy(&state, sub)?);
            rec.occupations.push(state.occupations());
        }
        if step == n_steps {
            break;
        }
        state = match protocol {
            Protocol::Qsd => dense_qsd_step(&state, &noise.next_step(), &stepper)?,
            Protocol::NoClick => dense_noclick_step(&state, &stepper)?,
        };
    }
    Ok(rec)
}

/// Mean-state observables from the master equation.
#[derive(Clone, Debug, Serialize)]
pub struct LindbladSolution {
    pub times: Vec<f64>,
    pub occupations: Vec<Vec<f64>>,
    pub purity: Vec<f64>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    /// Most negative eigenvalue of `ρ` seen at the output times.
    pub min_eigenvalue: f64,
    #[serde(skip)]
    pub states: Vec<CMat>,
}

/// Integrates `dρ/dt = -i[H, ρ] - (γ/2) Σ [n_i, [n_i, ρ]]` from the vacuum
/// with classical RK4 at step `params.dt`, reporting at the times in
/// `t_grid` (rounded to the step grid).
pub fn dense_lindblad(params: &ModelParams, t_grid: &[f64]) -> Result<LindbladSolution> {
    check_size(params.sites, MAX_LINDBLAD_SITES)?;
    let dim = 1usize << params.sites;
    let mut rho = CMat::zeros(dim, dim);
    rho[(0, 0)] = ONE;
    dense_lindblad_from(params, rho, t_grid)
}

/// Same as [`dense_lindblad`] from an arbitrary initial density matrix.
pub fn dense_lindblad_from(
    params: &ModelParams,
    mut rho: CMat,
    t_grid: &[f64],
) -> Result<LindbladSolution> {
    params.validate()?;
    check_size(params.sites, MAX_LINDBLAD_SITES)?;
    let l = params.sites;
    let dim = 1usize << l;
    let h = build_pauli_hamiltonian(params)?;
    let gamma = params.gamma;
    // the double commutator is diagonal in the occupation basis: it
    // multiplies ρ_ss' by the Hamming distance of s and s'
    let damp = CMat::from_fn(dim, dim, |i, j| {
        C64::from(-0.5 * gamma * (i ^ j).count_ones() as f64)
    });
    let minus_i = C64::new(0.0, -1.0);
    let rhs = |rho: &CMat| -> CMat {
        let hr = linalg::mul(h.as_ref(), rho.as_ref());
        let rh = linalg::mul(rho.as_ref(), h.as_ref());
        CMat::from_fn(dim, dim, |i, j| {
            minus_i * (hr[(i, j)] - rh[(i, j)]) + damp[(i, j)] * rho[(i, j)]
        })
    };
    let axpy =
        |x: &CMat, k: &CMat, s: f64| CMat::from_fn(dim, dim, |i, j| x[(i, j)] + k[(i, j)] * s);

    let dt = params.dt;
    let mut targets: Vec<(usize, f64)> = t_grid
        .iter()
        .map(|&t| {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::param("t_grid", format!("invalid time {t}")));
            }
            Ok(((t / dt).round() as usize, t))
        })
        .collect::<Result<_>>()?;
    targets.sort_by_key(|x| x.0);
    let last = targets.last().map(|x| x.0).unwrap_or(0);

    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::param(
            "rho",
            format!("expected a {dim}x{dim} matrix"),
        ));
    }
    let mut sol = LindbladSolution {
        times: Vec::new(),
        occupations: Vec::new(),
        purity: Vec::new(),
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        min_eigenvalue: 0.0,
        states: Vec::new(),
    };
    let mut ti = 0;
    for step in 0..=last {
        let tr: C64 = (0..dim).map(|i| rho[(i, i)]).sum();
        let tr_err = (tr - ONE).norm();
        if !(tr_err < 1e-6) || !rho.as_ref().norm_max().is_finite() {
            return Err(Error::Unstable {
                time: step as f64 * dt,
            });
        }
        sol.max_trace_error = sol.max_trace_error.max(tr_err);
        while ti < targets.len() && targets[ti].0 == step {
            let herm = linalg::hermiticity_deviation(rho.as_ref());
            sol.max_hermiticity_error = sol.max_hermiticity_error.max(herm);
            let ev = linalg::hermitian_eigenvalues(rho.as_ref())?;
            sol.min_eigenvalue = sol.min_eigenvalue.min(ev[0]);
            sol.times.push(targets[ti].1);
            sol.occupations.push(
                (0..l)
                    .map(|i| {
                        (0..dim)
                            .filter(|s| s >> i & 1 == 1)
                            .map(|s| rho[(s, s)].re)
                            .sum()
                    })
                    .collect(),
            );
            let purity = linalg::mul(rho.as_ref(), rho.as_ref());
            sol.purity.push((0..dim).map(|i| purity[(i, i)].re).sum());
            sol.states.push(rho.clone());
            ti += 1;
        }
        if step == last {
            break;
        }
        let k1 = rhs(&rho);
        let k2 = rhs(&axpy(&rho, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&rho, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&rho, &k3, dt));
        rho = CMat::from_fn(dim, dim, |i, j| {
            rho[(i, j)]
                + (k1[(i, j)] + 2.0 * k2[(i, j)] + 2.0 * k3[(i, j)] + k4[(i, j)]) * (dt / 6.0)
        });
    }
    Ok(sol)
}

/// Largest deviations between the Gaussian engine and the dense oracle.
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub sites: usize,
    pub protocol: Protocol,
    pub steps: usize,
    pub seed: u64,
    /// Over every step and every contiguous block.
    pub max_entropy_deviation: f64,
    /// Entrywise, over every step.
    pub max_correlation_deviation: f64,
}

/// Runs both engines side by side from the vacuum with the same noise
/// stream, comparing `G` and all block entropies after every step.
pub fn equivalence_check(
    params: &ModelParams,
    protocol: Protocol,
    seed: u64,
    steps: usize,
) -> Result<EquivalenceReport> {
    let l = params.sites;
    check_size(l, MAX_SITES)?;
    let cfg = dynamics::precompute_propagators(params, protocol)?;
    let dense_stepper = DenseStepper::new(params)?;
    let mut noise = NoiseRealization::for_params(seed, params);
    let mut g_state = gaussian::init_vacuum(l)?;
    let mut d_state = DenseState::vacuum(l)?;
    let mut report = EquivalenceReport {
        sites: l,
        protocol,
        steps,
        seed,
        max_entropy_deviation: 0.0,
        max_correlation_deviation: 0.0,
    };
    let blocks: Vec<Subsystem> = (0..l)
        .flat_map(|start| (1..=l - start).map(move |len| Subsystem::new(start, len)))
        .collect();
    for _ in 0..steps {
        match protocol {
            Protocol::Qsd => {
                let dxi = noise.next_step();
                let occ = g_state.occupations();
                g_state = dynamics::qsd_step(&g_state, &cfg, &dxi, &occ)?;
                d_state = dense_qsd_step(&d_state, &dxi, &dense_stepper)?;
            }
            Protocol::NoClick => {
                g_state = dynamics::noclick_step(&g_state, &cfg)?;
                d_state = dense_noclick_step(&d_state, &dense_stepper)?;
            }
        }
        let g = gaussian::correlation_matrix(&g_state)?;
        let gd = d_state.correlation_matrix();
        report.max_correlation_deviation = report
            .max_correlation_deviation
            .max(linalg::max_abs_diff(g.matrix().as_ref(), gd.as_ref()));
        let w = entanglement::majorana_covariance(&g)?;
        for &b in &blocks {
            let dev = (entanglement::entropy(&w, b)? - dense_entropy(&d_state, b)?).abs();
            report.max_entropy_deviation = report.max_entropy_deviation.max(dev);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_effective_generator, build_hamiltonian_generator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn two_site_ising_spectrum() {
        let h = build_pauli_hamiltonian(&ModelParams::new(2, 0.0)).unwrap();
        let mut ev = linalg::hermitian_eigenvalues(h.as_ref()).unwrap();
        ev.sort_by(f64::total_cmp);
        for (e, x) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((e - x).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_coupling_and_symmetric_spectrum() {
        let h = build_pauli_hamiltonian(&ModelParams::new(3, 0.0).with_coupling(0.0)).unwrap();
        assert_eq!(h.as_ref().norm_max(), 0.0);
        let h = build_pauli_hamiltonian(&ModelParams::new(3, 0.0)).unwrap();
        let mut ev = linalg::hermitian_eigenvalues(h.as_ref()).unwrap();
        ev.sort_by(f64::total_cmp);
        for k in 0..8 {
            assert!((ev[k] + ev[7 - k]).abs() < 1e-13);
        }
    }

    #[test]
    fn size_limits() {
        assert!(matches!(
            DenseState::vacuum(9),
            Err(Error::OracleTooLarge { .. })
        ));
        assert!(matches!(
            dense_lindblad(&ModelParams::new(7, 1.0), &[0.1]),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn fermionised_hamiltonian_matches_pauli() {
        for l in 2..=5 {
            let p = ModelParams::new(l, 1.3).with_coupling(0.7);
            let pauli = build_pauli_hamiltonian(&p).unwrap();
            let nambu = nambu_to_dense(&build_hamiltonian_generator(&p).unwrap()).unwrap();
            assert!(
                linalg::max_abs_diff(pauli.as_ref(), nambu.as_ref()) < 1e-14,
                "L={l}"
            );
            // the damping term differs only by the constant iγL/4
            let heff = build_effective_hamiltonian(&p).unwrap();
            let neff = nambu_to_dense(&build_effective_generator(&p).unwrap()).unwrap();
            let shift = C64::new(0.0, 1.3 * l as f64 / 4.0);
            let dim = 1 << l;
            let diff = CMat::from_fn(dim, dim, |i, j| {
                neff[(i, j)] - heff[(i, j)] - if i == j { shift } else { ZERO }
            });
            assert!(diff.as_ref().norm_max() < 1e-14);
        }
    }

    #[test]
    fn entropy_of_simple_states() {
        let vac = DenseState::vacuum(4).unwrap();
        assert_eq!(dense_entropy(&vac, Subsystem::new(1, 2)).unwrap(), 0.0);
        // (|00⟩ + |11⟩)/√2 on sites 1, 2 of four
        let mut amps = vec![ZERO; 16];
        amps[0] = C64::from(0.5f64.sqrt());
        amps[0b0110] = C64::from(0.5f64.sqrt());
        let bell = DenseState::from_amplitudes(4, amps).unwrap();
        assert!((dense_entropy(&bell, Subsystem::new(0, 2)).unwrap() - LN_2).abs() < 1e-14);
        assert!((dense_entropy(&bell, Subsystem::new(2, 2)).unwrap() - LN_2).abs() < 1e-14);
        assert!(dense_entropy(&bell, Subsystem::new(1, 2)).unwrap() < 1e-14);
    }

    #[test]
    fn gaussian_states_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for l in [2, 3, 4, 5] {
            let (s, _) = gaussian::random_state(l, &mut rng);
            let d = DenseState::from_gaussian(&s).unwrap();
            assert!((d.norm() - 1.0).abs() < 1e-12);
            let g = gaussian::correlation_matrix(&s).unwrap();
            assert!(
                linalg::max_abs_diff(g.matrix().as_ref(), d.correlation_matrix().as_ref()) < 1e-9
            );
            let w = entanglement::majorana_covariance(&g).unwrap();
            let dm = d.majorana_correlators();
            for mu in 0..2 * l {
                for nu in 0..2 * l {
                    let expected = C64::new(if mu == nu { 1.0 } else { 0.0 }, w.get(mu, nu));
                    assert!((dm[(mu, nu)] - expected).norm() < 1e-8);
                }
            }
            for start in 0..l {
                for len in 1..=l - start {
                    let b = Subsystem::new(start, len);
                    let a = entanglement::entropy(&w, b).unwrap();
                    let e = dense_entropy(&d, b).unwrap();
                    assert!((a - e).abs() < 1e-8, "L={l} {b:?}: {a} vs {e}");
                }
            }
        }
    }

    #[test]
    fn unitary_step_preserves_norm() {
        let p = ModelParams::new(4, 0.0).with_dt(0.05);
        let st = DenseStepper::new(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (g, _) = gaussian::random_state(4, &mut rng);
        let d = DenseState::from_gaussian(&g).unwrap();
        let next = dense_unitary_step(&d, &st);
        assert!((next.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_drift_direction() {
        let p = ModelParams::new(3, 1.0).with_dt(0.01);
        let st = DenseStepper::new(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (g, _) = gaussian::random_state(3, &mut rng);
        let mut d = DenseState::from_gaussian(&g).unwrap();
        let before = d.occupations()[1];
        for _ in 0..5 {
            d = dense_qsd_step(&d, &[0.0, 3.0, 0.0], &st).unwrap();
        }
        assert!(
            d.occupations()[1] > 0.999,
            "{before} -> {:?}",
            d.occupations()
        );
    }

    #[test]
    fn one_step_propagator_matches() {
        let p = ModelParams::new(2, 0.0).with_dt(0.01);
        for protocol in [Protocol::Qsd, Protocol::NoClick] {
            let r = equivalence_check(&p, protocol, 1, 1).unwrap();
            assert!(r.max_correlation_deviation < 1e-10, "{r:?}");
        }
    }

    #[test]
    fn engines_agree_over_many_steps() {
        for l in [2, 3, 4] {
            let p = ModelParams::new(l, 2.0).with_dt(0.01);
            for protocol in [Protocol::Qsd, Protocol::NoClick] {
                let r = equivalence_check(&p, protocol, 11, 100).unwrap();
                assert!(r.max_entropy_deviation < 1e-7, "{r:?}");
                assert!(r.max_correlation_deviation < 1e-8, "{r:?}");
            }
        }
    }

    #[test]
    fn lindblad_limits() {
        // no measurement: purity stays one
        let p = ModelParams::new(3, 0.0).with_dt(0.01);
        let sol = dense_lindblad(&p, &[0.0, 0.5, 1.0]).unwrap();
        for pu in &sol.purity {
            assert!((pu - 1.0).abs() < 1e-9);
        }
        // no Hamiltonian: the vacuum is stationary
        let p = ModelParams::new(3, 2.0).with_coupling(0.0).with_dt(0.01);
        let sol = dense_lindblad(&p, &[1.0]).unwrap();
        assert!(sol.occupations[0].iter().all(|&n| n.abs() < 1e-15));
        let p = ModelParams::new(4, 2.0).with_dt(0.01);
        let sol = dense_lindblad(&p, &[1.0, 5.0, 10.0]).unwrap();
        assert!(sol.max_trace_error < 1e-9 && sol.max_hermiticity_error < 1e-9);
        assert!(sol.min_eigenvalue > -1e-8);
    }

    #[test]
    fn lindblad_pure_dephasing() {
        // H = 0: populations frozen, coherences decay as exp(-γ t d / 2)
        let p = ModelParams::new(2, 1.0).with_coupling(0.0).with_dt(0.01);
        let rho0 = CMat::from_fn(4, 4, |_, _| C64::from(0.25));
        let sol = dense_lindblad_from(&p, rho0, &[2.0]).unwrap();
        let rho = &sol.states[0];
        for i in 0..4 {
            assert!((rho[(i, i)].re - 0.25).abs() < 1e-14);
            for j in 0..4 {
                let d = (i ^ j).count_ones() as f64;
                let expected = 0.25 * (-0.5 * 2.0 * d).exp();
                assert!((rho[(i, j)].re - expected).abs() < 1e-9);
            }
        }
    }
}
