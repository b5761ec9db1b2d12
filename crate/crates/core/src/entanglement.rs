//! Entanglement entropy from the Majorana covariance matrix.
//!
//! Majorana operators are `a_{j,1} = c_j + c†_j` and `a_{j,2} = i(c†_j - c_j)`,
//! interleaved by site: index `2j` is species 1 and `2j + 1` species 2 of
//! site `j` (0-based). The covariance is `⟨a_μ a_ν⟩ = δ_μν + i w̃_μν`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CorrelationMatrix, GaussianState};
use crate::linalg::{self, CMat, C64};

/// Residue allowed in the antisymmetric/real extraction before failing.
pub const ANTISYMMETRY_GATE: f64 = 1e-6;
/// Eigenvalues of `i w̃_A` beyond `1 + EIGEN_SLACK` in modulus abort.
pub const EIGEN_SLACK: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct MajoranaCovariance {
    w: Vec<f64>,
    n: usize,
}

impl MajoranaCovariance {
    pub fn sites(&self) -> usize {
        self.n / 2
    }

    pub fn get(&self, mu: usize, nu: usize) -> f64 {
        self.w[mu * self.n + nu]
    }

    /// `max |w̃ + w̃ᵀ|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `i w̃` restricted to the Majorana indices of `sub`, as a Hermitian
    /// complex matrix.
    pub fn restricted_hermitian(&self, sub: Subsystem) -> CMat {
        let off = 2 * sub.start;
        let m = 2 * sub.len;
        CMat::from_fn(m, m, |i, j| C64::new(0.0, self.get(off + i, off + j)))
    }
}

/// Builds `w̃` from the Dirac correlation matrix.
pub fn majorana_covariance(g: &CorrelationMatrix) -> Result<MajoranaCovariance> {
    let l = g.sites();
    let gm = g.matrix();
    // a_μ = Σ_b V_μb Ψ_b with the interleaved V; ⟨a_μ a_ν⟩ = (conj(V) G Vᵀ)_μν.
    // Each row of V has two entries, so the product is assembled directly.
    let row = |mu: usize| -> [(usize, C64); 2] {
        let j = mu / 2;
        if mu.is_multiple_of(2) {
            [(j, C64::from(1.0)), (l + j, C64::from(1.0))]
        } else {
            [(j, C64::new(0.0, -1.0)), (l + j, C64::new(0.0, 1.0))]
        }
    };
    let n = 2 * l;
    let mut w = vec![0.0; n * n];
    let mut residue = 0.0f64;
    for mu in 0..n {
        let rm = row(mu);
        for nu in 0..n {
            let rn = row(nu);
            let mut acc = C64::from(0.0);
            for &(a, va) in &rm {
                for &(b, vb) in &rn {
                    acc += va.conj() * gm[(a, b)] * vb;
                }
            }
            let delta = if mu == nu { 1.0 } else { 0.0 };
            residue = residue.max((acc.re - delta).abs());
            w[mu * n + nu] = acc.im;
        }
    }
    let cov = MajoranaCovariance { w, n };
    let residue = residue.max(cov.antisymmetry_residual());
    if residue > ANTISYMMETRY_GATE {
        return Err(Error::CorruptedCorrelations(format!(
            "Majorana covariance residue {residue:.3e}"
        )));
    }
    Ok(cov)
}

/// Contiguous block of sites `[start, start + len)` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsystem {
    pub start: usize,
    pub len: usize,
}

/// Where the entanglement block sits in the chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    /// Starts at the first site.
    #[default]
    Boundary,
    /// Centered in the chain (rounded towards the left).
    Center,
}

impl Subsystem {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn anchored(anchor: Anchor, len: usize, sites: usize) -> Self {
        let start = match anchor {
            Anchor::Boundary => 0,
            Anchor::Center => sites.saturating_sub(len) / 2,
        };
        Self { start, len }
    }

    pub fn validate(&self, sites: usize) -> Result<()> {
        if self.len == 0 || self.start + self.len > sites {
            return Err(Error::InvalidSubsystem {
                start: self.start,
                len: self.len,
                sites,
            });
        }
        Ok(())
    }
}

/// Entropy of one fermionic mode with covariance eigenvalue `λ ∈ [0, 1]`.
pub fn mode_entropy(lambda: f64) -> f64 {
    let p = 0.5 * (1.0 + lambda);
    let q = 0.5 * (1.0 - lambda);
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(p) + h(q)
}

/// Von Neumann entropy (natural log) of the block `sub`.
pub fn entropy(w: &MajoranaCovariance, sub: Subsystem) -> Result<f64> {
    sub.validate(w.sites())?;
    let herm = w.restricted_hermitian(sub);
    let mut ev = linalg::hermitian_eigenvalues(herm.as_ref())?;
    ev.sort_by(|a, b| a.total_cmp(b));
    let mut s = 0.0;
    for &lambda in &ev[sub.len..] {
        if !(lambda.abs() <= 1.0 + EIGEN_SLACK) {
            return Err(Error::CorruptedCorrelations(format!(
                "covariance eigenvalue {lambda} outside [-1, 1]"
            )));
        }
        s += mode_entropy(lambda.clamp(0.0, 1.0));
    }
    Ok(s.max(0.0))
}

/// Correlation matrix of the block `sub` alone: the rows and columns of
/// `G` belonging to its sites, in the same Nambu layout. Only the
/// corresponding rows of the creator block are touched.
pub fn block_correlations(state: &GaussianState, sub: Subsystem) -> Result<CorrelationMatrix> {
    let l = state.sites();
    sub.validate(l)?;
    let y = state.creators();
    let n = sub.len;
    let rows = CMat::from_fn(2 * n, l, |r, k| {
        let site = sub.start + r % n;
        if r < n {
            y[(site, k)]
        } else {
            y[(l + site, k)]
        }
    });
    Ok(CorrelationMatrix::from_matrix(linalg::mul(
        rows.as_ref(),
        rows.as_ref().adjoint(),
    )))
}

/// Entropy of `sub` for a state with orthonormal creator columns, working
/// on the block rows only.
pub fn block_entropy(state: &GaussianState, sub: Subsystem) -> Result<f64> {
    let g = block_correlations(state, sub)?;
    entropy(&majorana_covariance(&g)?, Subsystem::new(0, sub.len))
}

/// Shortcut: entropy of `sub` straight from the correlation matrix.
pub fn entropy_of(g: &CorrelationMatrix, sub: Subsystem) -> Result<f64> {
    entropy(&majorana_covariance(g)?, sub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{correlation_matrix, init_vacuum, random_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn vacuum_is_symplectic_form() {
        let g = correlation_matrix(&init_vacuum(3).unwrap()).unwrap();
        let w = majorana_covariance(&g).unwrap();
        for mu in 0..6 {
            for nu in 0..6 {
                let expected = if mu % 2 == 0 && nu == mu + 1 {
                    1.0
                } else if mu % 2 == 1 && nu + 1 == mu {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(w.get(mu, nu), expected, "({mu},{nu})");
            }
        }
    }

    #[test]
    fn product_state_has_zero_entropy() {
        let g = correlation_matrix(&init_vacuum(4).unwrap()).unwrap();
        for start in 0..4 {
            for len in 1..=4 - start {
                assert!(entropy_of(&g, Subsystem::new(start, len)).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn maximally_mixed_mode() {
        assert!((mode_entropy(0.0) - LN_2).abs() < 1e-15);
        assert_eq!(mode_entropy(1.0), 0.0);
    }

    #[test]
    fn pure_states_have_unit_spectrum_and_complementary_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (s, _) = random_state(6, &mut rng);
            let g = correlation_matrix(&s).unwrap();
            let w = majorana_covariance(&g).unwrap();
            assert!(w.antisymmetry_residual() < 1e-9);
            let full = w.restricted_hermitian(Subsystem::new(0, 6));
            for e in linalg::hermitian_eigenvalues(full.as_ref()).unwrap() {
                assert!((e.abs() - 1.0).abs() < 1e-7);
            }
            for cut in 1..6 {
                let a = entropy(&w, Subsystem::new(0, cut)).unwrap();
                let b = entropy(&w, Subsystem::new(cut, 6 - cut)).unwrap();
                assert!((a - b).abs() < 1e-7);
                assert!(a <= cut.min(6 - cut) as f64 * LN_2 + 1e-9);
            }
        }
    }

    #[test]
    fn block_route_matches_full_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (s, _) = random_state(7, &mut rng);
        let g = correlation_matrix(&s).unwrap();
        for start in 0..7 {
            for len in 1..=7 - start {
                let sub = Subsystem::new(start, len);
                let a = entropy_of(&g, sub).unwrap();
                let b = block_entropy(&s, sub).unwrap();
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn out_of_range_subsystem() {
        let g = correlation_matrix(&init_vacuum(4).unwrap()).unwrap();
        assert!(entropy_of(&g, Subsystem::new(3, 2)).is_err());
        assert!(entropy_of(&g, Subsystem::new(0, 0)).is_err());
    }

    #[test]
    fn anchors() {
        assert_eq!(
            Subsystem::anchored(Anchor::Boundary, 4, 16),
            Subsystem::new(0, 4)
        );
        assert_eq!(
            Subsystem::anchored(Anchor::Center, 4, 16),
            Subsystem::new(6, 4)
        );
    }

    #[test]
    fn corrupted_g_is_rejected() {
        let g = correlation_matrix(&init_vacuum(3).unwrap()).unwrap();
        let mut m = g.matrix().clone();
        m[(0, 4)] = C64::from(0.3);
        assert!(majorana_covariance(&CorrelationMatrix::from_matrix(m)).is_err());
    }
}
