//! Pure fermionic Gaussian states in the `𝓤`-matrix representation.
//!
//! The first `L` columns of the `2L × 2L` unitary `𝓤 = [[U, V̄], [V, Ū]]`
//! hold the Nambu coefficients of the quasiparticle creators `χ†_k`, i.e.
//! `χ†_k = Σ_a 𝓤_ak Ψ_a`; the state is the common vacuum of the `χ_k`. The
//! last `L` columns are fixed by particle-hole symmetry as `τ · conj` of the
//! first ones. The correlation matrix is
//!
//! ```text
//! G_ab = ⟨(Ψ_a)† Ψ_b⟩ = (𝓤 P 𝓤†)_ab,   P = diag(1_L, 0_L),
//! ```
//!
//! so `G` has blocks `⟨c†_i c_j⟩`, `⟨c†_i c†_j⟩`, `⟨c_i c_j⟩`, `⟨c_i c†_j⟩`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE};
use crate::model::NambuGenerator;

/// Unitarity tolerance accepted by [`correlation_matrix`].
pub const UNITARITY_GATE: f64 = 1e-6;
/// Condition estimate above which [`renormalize`] reports a singular state.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct GaussianState {
    u: CMat,
}

impl GaussianState {
    /// Wraps an arbitrary `2L × 2L` matrix without checking its structure.
    pub fn from_matrix(u: CMat) -> Self {
        assert_eq!(u.nrows(), u.ncols());
        assert!(u.nrows().is_multiple_of(2) && u.nrows() >= 4);
        Self { u }
    }

    /// Builds `𝓤` from its creator block (`2L × L`), completing the second
    /// half by particle-hole symmetry. No normalization is applied.
    pub fn from_creators(y: faer::MatRef<'_, C64>) -> Self {
        let n = y.nrows();
        let l = y.ncols();
        assert_eq!(n, 2 * l);
        let swap = |i: usize| if i < l { i + l } else { i - l };
        let u = CMat::from_fn(n, n, |i, j| {
            if j < l {
                y[(i, j)]
            } else {
                y[(swap(i), j - l)].conj()
            }
        });
        Self { u }
    }

    pub fn sites(&self) -> usize {
        self.u.nrows() / 2
    }

    pub fn u_matrix(&self) -> &CMat {
        &self.u
    }

    /// The creator block (first `L` columns of `𝓤`).
    pub fn creators(&self) -> faer::MatRef<'_, C64> {
        self.u.as_ref().subcols(0, self.sites())
    }

    pub fn unitarity_deviation(&self) -> f64 {
        linalg::unitarity_deviation(self.u.as_ref())
    }

    /// `⟨n_i⟩ = Σ_k |U_ik|²`; valid when the creator block is orthonormal.
    pub fn occupations(&self) -> Vec<f64> {
        let l = self.sites();
        let y = self.creators();
        let mut occ = vec![0.0; l];
        for k in 0..l {
            let col = y.col(k);
            for (i, o) in occ.iter_mut().enumerate() {
                *o += col[i].norm_sqr();
            }
        }
        occ
    }

    /// Occupations for a creator block that is not orthonormal, through
    /// `G = Y (Y†Y)⁻¹ Y†`.
    pub fn occupations_unnormalized(&self) -> Result<Vec<f64>> {
        use faer::linalg::solvers::Solve;
        let l = self.sites();
        let y = self.creators();
        let gram = linalg::mul(y.adjoint(), y);
        let chol = gram.llt(faer::Side::Lower).map_err(|_| Error::Singular {
            condition: f64::INFINITY,
        })?;
        let mut rhs = linalg::adjoint(y.subrows(0, l));
        chol.solve_in_place(rhs.as_mut());
        Ok((0..l)
            .map(|i| (0..l).map(|k| y[(i, k)] * rhs[(k, i)]).sum::<C64>().re)
            .collect())
    }
}

/// The Fock vacuum `|00…0⟩`, annihilated by every `c_i`.
pub fn init_vacuum(sites: usize) -> Result<GaussianState> {
    if sites < 2 {
        return Err(Error::param(
            "sites",
            format!("need at least 2 sites, got {sites}"),
        ));
    }
    let l = sites;
    let y = CMat::from_fn(
        2 * l,
        l,
        |i, j| if i == l + j { ONE } else { C64::from(0.0) },
    );
    Ok(GaussianState::from_creators(y.as_ref()))
}

/// Two-point function of a Gaussian state.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    g: CMat,
}

impl CorrelationMatrix {
    pub fn from_matrix(g: CMat) -> Self {
        assert_eq!(g.nrows(), g.ncols());
        Self { g }
    }

    pub fn sites(&self) -> usize {
        self.g.nrows() / 2
    }

    pub fn matrix(&self) -> &CMat {
        &self.g
    }

    /// `⟨c†_i c_j⟩`.
    pub fn hopping(&self, i: usize, j: usize) -> C64 {
        self.g[(i, j)]
    }

    /// `⟨c_i c_j⟩`.
    pub fn pairing(&self, i: usize, j: usize) -> C64 {
        let l = self.sites();
        self.g[(l + i, j)]
    }

    /// `⟨n_i⟩`, clipped to `[0, 1]`.
    pub fn occupations(&self) -> Vec<f64> {
        (0..self.sites())
            .map(|i| self.g[(i, i)].re.clamp(0.0, 1.0))
            .collect()
    }

    /// `(hermiticity, idempotency, |tr G - L|)` residuals.
    pub fn residuals(&self) -> (f64, f64, f64) {
        let herm = linalg::hermiticity_deviation(self.g.as_ref());
        let g2 = linalg::mul(self.g.as_ref(), self.g.as_ref());
        let idem = linalg::max_abs_diff(g2.as_ref(), self.g.as_ref());
        let trace: C64 = (0..self.g.nrows()).map(|i| self.g[(i, i)]).sum();
        (herm, idem, (trace - C64::from(self.sites() as f64)).norm())
    }

    /// `⟨Ĥ⟩` for the operator `½ Σ Ψ†_a 𝓗_ab Ψ_b`.
    pub fn expectation(&self, op: &NambuGenerator) -> C64 {
        let m = op.matrix();
        let n = self.g.nrows();
        let mut acc = C64::from(0.0);
        for a in 0..n {
            for b in 0..n {
                acc += m[(a, b)] * self.g[(a, b)];
            }
        }
        0.5 * acc
    }
}

/// `G = 𝓤 P 𝓤†`. Fails if `𝓤` is further than [`UNITARITY_GATE`] from
/// unitary.
pub fn correlation_matrix(state: &GaussianState) -> Result<CorrelationMatrix> {
    let deviation = state.unitarity_deviation();
    if !(deviation <= UNITARITY_GATE) {
        return Err(Error::NotUnitary { deviation });
    }
    let y = state.creators();
    Ok(CorrelationMatrix {
        g: linalg::mul(y, y.adjoint()),
    })
}

/// Replaces the creator block by the `Q` factor of its thin QR
/// decomposition (positive real diagonal of `R`) and rebuilds `𝓤` from it.
pub fn renormalize(state: &GaussianState) -> Result<GaussianState> {
    let mut out = state.clone();
    renormalize_in_place(&mut out)?;
    Ok(out)
}

pub fn renormalize_in_place(state: &mut GaussianState) -> Result<()> {
    let (q, condition) = linalg::thin_qr_positive(state.creators());
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    *state = GaussianState::from_creators(q.as_ref());
    Ok(())
}

/// Random Hermitian quadratic generator with the Nambu particle-hole
/// structure, entries of order one.
pub fn random_hermitian_generator<R: Rng + ?Sized>(sites: usize, rng: &mut R) -> NambuGenerator {
    let l = sites;
    let mut gauss = || -> C64 {
        C64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    };
    let mut a = CMat::zeros(l, l);
    let mut b = CMat::zeros(l, l);
    for i in 0..l {
        a[(i, i)] = C64::from(gauss().re);
        for j in i + 1..l {
            let z = gauss();
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
            let w = gauss();
            b[(i, j)] = w;
            b[(j, i)] = -w;
        }
    }
    let m = CMat::from_fn(2 * l, 2 * l, |i, j| match (i < l, j < l) {
        (true, true) => a[(i, j)],
        (true, false) => b[(i, j - l)],
        (false, true) => -b[(i - l, j)].conj(),
        (false, false) => -a[(j - l, i - l)],
    });
    NambuGenerator::from_matrix(m, true)
}

/// Creator-block propagator `exp(conj(𝓚))` for the many-body operator
/// `exp(K̂)` with `K̂ = ½ Ψ† 𝓚 Ψ`.
///
/// Conjugating `Ψ` with `exp(K̂)` gives `exp(K̂) Ψ exp(-K̂) = exp(-𝓚) Ψ`,
/// so annihilator coefficients move with `exp(-𝓚ᵀ)` and creator
/// coefficients with `exp(conj(𝓚))`.
pub fn creator_propagator(kernel: faer::MatRef<'_, C64>) -> Result<CMat> {
    linalg::expm(linalg::conj(kernel).as_ref())
}

/// The state `exp(-iĤ)|0⟩` for a random Hermitian quadratic `Ĥ`, together
/// with the generator used.
pub fn random_state<R: Rng + ?Sized>(sites: usize, rng: &mut R) -> (GaussianState, NambuGenerator) {
    let gen = random_hermitian_generator(sites, rng);
    let kernel = linalg::scale(gen.matrix().as_ref(), C64::new(0.0, -1.0));
    let prop = creator_propagator(kernel.as_ref()).expect("bounded random generator");
    let vac = init_vacuum(sites).expect("sites >= 2");
    let y = linalg::mul(prop.as_ref(), vac.creators());
    let mut state = GaussianState::from_creators(y.as_ref());
    renormalize_in_place(&mut state).expect("unitary evolution keeps full rank");
    (state, gen)
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"IMGS";
const SNAPSHOT_VERSION: u32 = 1;

/// Writes a binary snapshot of `𝓤`.
///
/// Layout (little endian): magic `IMGS`, `u32` version (1), `u64` sites,
/// `u64` step index, then the `(2L)²` entries row-major as `(re, im)` pairs
/// of `f64`.
pub fn write_snapshot<W: Write>(mut w: W, state: &GaussianState, step: u64) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(state.sites() as u64).to_le_bytes())?;
    w.write_all(&step.to_le_bytes())?;
    let n = state.u.nrows();
    for i in 0..n {
        for j in 0..n {
            let z = state.u[(i, j)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]; returns the state and
/// the step index.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(GaussianState, u64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let sites = u64::from_le_bytes(b8) as usize;
    if !(2..=1 << 16).contains(&sites) {
        return Err(Error::Snapshot(format!("implausible site count {sites}")));
    }
    r.read_exact(&mut b8)?;
    let step = u64::from_le_bytes(b8);
    let n = 2 * sites;
    let mut u = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            u[(i, j)] = C64::new(re, im);
        }
    }
    Ok((GaussianState::from_matrix(u), step))
}
