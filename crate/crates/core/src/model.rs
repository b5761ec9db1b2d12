//! Model parameters, Nambu generators and the analytic quasiparticle
//! spectrum of the monitored Ising chain.
//!
//! # Nambu convention
//!
//! The Nambu vector is `Ψ = (c_1, …, c_L, c†_1, …, c†_L)` and a quadratic
//! operator is stored as the `2L × 2L` matrix `𝓗` with
//!
//! ```text
//! Ĥ = ½ Σ_ab (Ψ_a)† 𝓗_ab Ψ_b + const,      𝓗 = [[A, B], [C, -Aᵀ]]
//! ```
//!
//! where `B` and `C` are antisymmetric. Every such matrix satisfies
//! `τ 𝓗 τ = -𝓗ᵀ` with `τ` the particle-hole swap; for a Hermitian operator
//! this reads `τ 𝓗 τ = -conj(𝓗)`.
//!
//! The Jordan-Wigner string is `K_i = Π_{j<i} (1 - 2 n_j)` with
//! `n_i = |1⟩⟨1|_i`, so that `σˣ_i σˣ_{i+1} = c†_i c_{i+1} + c†_i c†_{i+1} + h.c.`
//! and the Ising chain keeps the sign of the coupling. The dense oracle
//! checks this identity operator by operator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

/// Measurement protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Quantum state diffusion: Wiener-noise unravelling.
    Qsd,
    /// Post-selected no-click evolution under the non-Hermitian Hamiltonian.
    #[serde(rename = "noclick")]
    NoClick,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Qsd => "qsd",
            Protocol::NoClick => "noclick",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qsd" => Ok(Protocol::Qsd),
            "noclick" | "no-click" => Ok(Protocol::NoClick),
            other => Err(Error::param(
                "protocol",
                format!("unknown protocol `{other}`"),
            )),
        }
    }
}

/// Physical and numerical parameters of one simulation.
///
/// The chain always has open boundaries. Energies are in units of the
/// coupling `J`, times in units of `1/J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub sites: usize,
    pub coupling: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Length of the entanglement subsystem.
    pub subsystem_len: usize,
}

pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_T_MAX: f64 = 10.0;

impl ModelParams {
    /// Parameters with `J = 1`, the default time step, `t_max = 10` and a
    /// subsystem of `L/4` sites (at least one).
    pub fn new(sites: usize, gamma: f64) -> Self {
        Self {
            sites,
            coupling: 1.0,
            gamma,
            dt: DEFAULT_DT,
            t_max: DEFAULT_T_MAX,
            subsystem_len: (sites / 4).max(1),
        }
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_subsystem_len(mut self, len: usize) -> Self {
        self.subsystem_len = len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::param(
                "sites",
                format!("need at least 2 sites, got {}", self.sites),
            ));
        }
        if !self.coupling.is_finite() {
            return Err(Error::param("coupling", "must be finite"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::param(
                "gamma",
                format!("must be finite and >= 0, got {}", self.gamma),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::param(
                "t_max",
                format!("must be finite and >= 0, got {}", self.t_max),
            ));
        }
        if self.subsystem_len < 1 || self.subsystem_len > self.sites {
            return Err(Error::param(
                "subsystem_len",
                format!(
                    "must lie in [1, {}], got {}",
                    self.sites, self.subsystem_len
                ),
            ));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_max`.
    pub fn n_steps(&self) -> usize {
        if self.t_max <= 0.0 {
            0
        } else {
            (self.t_max / self.dt - 1e-9).ceil() as usize
        }
    }

    /// Short stable hash of every field, used to tie outputs and
    /// precomputed propagators to the parameters that produced them.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sites.to_le_bytes());
        for x in [self.coupling, self.gamma, self.dt, self.t_max] {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update(self.subsystem_len.to_le_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A quadratic operator in Nambu form (see the module docs).
#[derive(Clone, Debug)]
pub struct NambuGenerator {
    matrix: CMat,
    hermitian: bool,
}

impl NambuGenerator {
    /// Wraps a raw Nambu matrix. The particle-hole structure is the caller's
    /// responsibility; `particle_hole_residual` measures it.
    pub fn from_matrix(matrix: CMat, hermitian: bool) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        assert!(
            matrix.nrows().is_multiple_of(2),
            "Nambu matrices have even dimension"
        );
        Self { matrix, hermitian }
    }

    pub fn sites(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |τ 𝓗 τ + 𝓗ᵀ|`, zero for a well-formed generator.
    pub fn particle_hole_residual(&self) -> f64 {
        let l = self.sites();
        let m = &self.matrix;
        let swap = |i: usize| if i < l { i + l } else { i - l };
        let mut worst = 0.0f64;
        for i in 0..2 * l {
            for j in 0..2 * l {
                worst = worst.max((m[(swap(i), swap(j))] + m[(j, i)]).norm());
            }
        }
        worst
    }

    /// Single-particle spectrum of a Hermitian generator, ascending.
    pub fn hermitian_spectrum(&self) -> Result<Vec<f64>> {
        if !self.hermitian {
            return Err(Error::param(
                "generator",
                "spectrum requested for a non-Hermitian generator",
            ));
        }
        linalg::hermitian_eigenvalues(self.matrix.as_ref())
    }
}

/// Nambu matrix of `H = J Σ_{i<L} (c†_i c_{i+1} + c†_i c†_{i+1} + h.c.)`.
pub fn build_hamiltonian_generator(params: &ModelParams) -> Result<NambuGenerator> {
    if params.sites < 2 {
        return Err(Error::param(
            "sites",
            format!("need at least 2 sites, got {}", params.sites),
        ));
    }
    params.validate()?;
    let l = params.sites;
    let j = C64::from(params.coupling);
    let mut m = CMat::zeros(2 * l, 2 * l);
    for i in 0..l - 1 {
        // hopping: A and -Aᵀ blocks
        m[(i, i + 1)] = j;
        m[(i + 1, i)] = j;
        m[(l + i, l + i + 1)] = -j;
        m[(l + i + 1, l + i)] = -j;
        // pairing c†_i c†_{i+1}: B block
        m[(i, l + i + 1)] = j;
        m[(i + 1, l + i)] = -j;
        // its conjugate c_{i+1} c_i: C block
        m[(l + i + 1, i)] = j;
        m[(l + i, i + 1)] = -j;
    }
    Ok(NambuGenerator::from_matrix(m, true))
}

/// Nambu matrix of `H_eff = H - i(γ/2) Σ n_i`, up to an additive constant.
pub fn build_effective_generator(params: &ModelParams) -> Result<NambuGenerator> {
    let h = build_hamiltonian_generator(params)?;
    if params.gamma == 0.0 {
        return Ok(h);
    }
    let l = params.sites;
    let mut m = h.matrix;
    let damp = C64::new(0.0, -0.5 * params.gamma);
    for i in 0..l {
        m[(i, i)] += damp;
        m[(l + i, l + i)] -= damp;
    }
    Ok(NambuGenerator::from_matrix(m, false))
}

/// Complex quasiparticle energy `Λ_k = 2 √(1 - γ²/16 + i (γ/2) cos k)` of
/// the translation-invariant non-Hermitian chain, principal branch.
pub fn quasiparticle_energy(k: f64, gamma: f64) -> C64 {
    quasiparticle_energy_from_cos(k.cos(), gamma)
}

pub fn quasiparticle_energy_from_cos(cos_k: f64, gamma: f64) -> C64 {
    let radicand = C64::new(1.0 - gamma * gamma / 16.0, 0.5 * gamma * cos_k);
    2.0 * radicand.sqrt()
}

/// A point of the quasiparticle band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub k: f64,
    pub lambda: C64,
}

/// Interior grid `k_j = jπ/(n+1)`, `j = 1..=n`, with `cos k_j` evaluated as
/// `sin(π/2 - k_j)` so that the node at `π/2` (present for odd `n`) has an
/// exactly vanishing cosine.
pub fn k_grid(n_k: usize) -> Vec<(f64, f64)> {
    let denom = (n_k + 1) as f64;
    (1..=n_k)
        .map(|j| {
            let k = PI * j as f64 / denom;
            let offset = (n_k + 1) as f64 - 2.0 * j as f64;
            let cos_k = (PI * offset / (2.0 * denom)).sin();
            (k, cos_k)
        })
        .collect()
}

pub fn spectrum(gamma: f64, n_k: usize) -> Vec<SpectrumPoint> {
    k_grid(n_k)
        .into_iter()
        .map(|(k, c)| SpectrumPoint {
            k,
            lambda: quasiparticle_energy_from_cos(c, gamma),
        })
        .collect()
}

/// `min_k |Im Λ_k|` over the interior grid of `n_k` points.
///
/// Use an odd `n_k` so the grid contains `k = π/2`, where the gap closes
/// for `γ ≤ 4`.
pub fn imaginary_gap(gamma: f64, n_k: usize) -> f64 {
    assert!(n_k >= 2, "need at least two k points");
    k_grid(n_k)
        .into_iter()
        .map(|(_, c)| quasiparticle_energy_from_cos(c, gamma).im.abs())
        .fold(f64::INFINITY, f64::min)
}
