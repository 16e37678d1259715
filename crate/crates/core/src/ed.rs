//! Exact diagonalization for short chains.
//!
//! Basis index convention: bit `n - 1` of the index is site `n`, 0 = up.
//! The Hamiltonian is real, so states are stored as real amplitudes.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{gemm, lanczos_lowest, svd_truncated, DenseMatrix};
use crate::model::HamiltonianSpec;
use crate::mps::DEFAULT_SUBSET_LIMIT;
use crate::ops::LocalOp;
use crate::state::{check_sites, entropy_of_probabilities, SpinState};

pub const ED_MAX_SITES: usize = 14;

/// Two lowest levels closer than this mark the ground state as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

const LANCZOS_TOL: f64 = 1e-13;
const LANCZOS_MAX_MATVECS: usize = 20_000;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    amps: Vec<f64>,
}

impl StateVector {
    /// Normalizes `amps`; its length must be `2^n_sites`.
    pub fn new(n_sites: usize, mut amps: Vec<f64>) -> Result<Self> {
        if n_sites == 0 || n_sites > 30 || amps.len() != 1 << n_sites {
            return Err(Error::Dimension(format!("{} amplitudes for {n_sites} sites", amps.len())));
        }
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("amps", "state must be nonzero and finite"));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_sites, amps })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amps
    }

    /// Rows are configurations of the sites outside `sites`, columns the
    /// configurations of `sites` (bit `j` = `j`-th listed site).
    fn split_matrix(&self, sites: &[usize]) -> (usize, usize, Vec<f64>) {
        let n = self.n_sites;
        let k = sites.len();
        let mask: usize = sites.iter().map(|s| 1usize << (s - 1)).sum();
        let rest: Vec<usize> = (0..n).filter(|b| mask & (1 << b) == 0).collect();
        let (cols, rows) = (1usize << k, 1usize << (n - k));
        let mut m = vec![0.0; rows * cols];
        for (idx, a) in self.amps.iter().enumerate() {
            let c = sites.iter().enumerate().fold(0, |acc, (j, s)| acc | (((idx >> (s - 1)) & 1) << j));
            let r = rest.iter().enumerate().fold(0, |acc, (j, b)| acc | (((idx >> b) & 1) << j));
            m[r * cols + c] = *a;
        }
        (rows, cols, m)
    }
}

#[derive(Clone, Debug)]
pub struct EdGroundState {
    pub state: StateVector,
    /// Spin energy without the constant offset.
    pub energy: f64,
    /// Distance to the next level.
    pub gap: f64,
    pub degenerate: bool,
}

fn diagonal(h: &HamiltonianSpec) -> Vec<f64> {
    let n = h.n_sites();
    (0..1usize << n).map(|idx| h.diagonal_energy(|i| (idx >> i) & 1 == 1)).collect()
}

/// `y = H x`, applied term by term without forming the matrix.
pub fn apply_hamiltonian(h: &HamiltonianSpec, x: &[f64], y: &mut [f64]) {
    apply_with_diag(h, &diagonal(h), x, y);
}

fn apply_with_diag(h: &HamiltonianSpec, diag: &[f64], x: &[f64], y: &mut [f64]) {
    for (idx, yi) in y.iter_mut().enumerate() {
        let mut acc = diag[idx] * x[idx];
        for (site, hx) in h.onsite_x.iter().enumerate() {
            if *hx != 0.0 {
                acc += 0.5 * hx * x[idx ^ (1 << site)];
            }
        }
        *yi = acc;
    }
}

fn operator_bound(h: &HamiltonianSpec) -> f64 {
    let s: f64 = h.onsite_z.iter().chain(&h.onsite_x).map(|v| 0.5 * v.abs()).sum();
    s + h.nn_zz.iter().map(|v| 0.25 * v.abs()).sum::<f64>()
}

fn start_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Ground state and energy by Lanczos on the matrix-free Hamiltonian. The
/// next level is found by deflating the ground vector to flag degeneracy.
pub fn ed_ground_state(h: &HamiltonianSpec) -> Result<EdGroundState> {
    h.validate()?;
    let n = h.n_sites();
    if n > ED_MAX_SITES {
        return Err(Error::TooManySites { n_sites: n, limit: ED_MAX_SITES });
    }
    let dim = 1usize << n;
    let diag = diagonal(h);
    let first = lanczos_lowest(|x, y| apply_with_diag(h, &diag, x, y), dim, &start_vector(dim, 1), LANCZOS_TOL, LANCZOS_MAX_MATVECS)?;
    if !first.converged {
        return Err(Error::NoConvergence { iterations: first.matvecs, residual: first.residual });
    }
    let v0 = first.vector;
    let shift = 4.0 * operator_bound(h) + 1.0;
    let deflated = |x: &[f64], y: &mut [f64]| {
        apply_with_diag(h, &diag, x, y);
        let c: f64 = v0.iter().zip(x).map(|(a, b)| a * b).sum();
        y.iter_mut().zip(&v0).for_each(|(yi, vi)| *yi += shift * c * vi);
    };
    let second = if dim > 1 {
        let mut init = start_vector(dim, 2);
        let c: f64 = v0.iter().zip(&init).map(|(a, b)| a * b).sum();
        init.iter_mut().zip(&v0).for_each(|(x, v)| *x -= c * v);
        let out = lanczos_lowest(deflated, dim, &init, LANCZOS_TOL, LANCZOS_MAX_MATVECS)?;
        out.value
    } else {
        f64::INFINITY
    };
    let gap = (second - first.value).max(0.0);
    Ok(EdGroundState {
        state: StateVector::new(n, v0)?,
        energy: first.value,
        gap,
        degenerate: gap < DEGENERACY_TOL,
    })
}

/// `<psi| prod_k O_k |psi>` for operators on distinct sites.
pub fn ed_expect(psi: &StateVector, op_string: &[(usize, LocalOp)]) -> Result<Complex64> {
    let n = psi.n_sites;
    let mut seen = 0usize;
    for (site, _) in op_string {
        if *site == 0 || *site > n {
            return Err(Error::SiteOutOfRange { site: *site, n_sites: n });
        }
        if seen & (1 << (site - 1)) != 0 {
            return Err(Error::InvalidSites(format!("site {site} repeated")));
        }
        seen |= 1 << (site - 1);
    }
    let mut phi: Vec<Complex64> = psi.amps.iter().map(|a| Complex64::new(*a, 0.0)).collect();
    let mut next = vec![Complex64::new(0.0, 0.0); phi.len()];
    for (site, op) in op_string {
        let bit = 1usize << (site - 1);
        for (idx, out) in next.iter_mut().enumerate() {
            let s_out = usize::from(idx & bit != 0);
            let base = idx & !bit;
            *out = op[s_out][0] * phi[base] + op[s_out][1] * phi[base | bit];
        }
        std::mem::swap(&mut phi, &mut next);
    }
    Ok(psi.amps.iter().zip(&phi).map(|(a, p)| p * *a).sum())
}

pub fn ed_subset_entropy(psi: &StateVector, sites: &[usize]) -> Result<f64> {
    psi.subset_entropy(sites)
}

impl SpinState for StateVector {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn expect_one_site(&self, op: &LocalOp, n: usize) -> Result<Complex64> {
        ed_expect(self, &[(n, *op)])
    }

    fn expect_pair_row(&self, op_a: &LocalOp, op_b: &LocalOp, n: usize) -> Result<Vec<Complex64>> {
        if n == 0 || n > self.n_sites {
            return Err(Error::SiteOutOfRange { site: n, n_sites: self.n_sites });
        }
        (1..=self.n_sites)
            .map(|m| if m == n { Ok(Complex64::new(0.0, 0.0)) } else { ed_expect(self, &[(n, *op_a), (m, *op_b)]) })
            .collect()
    }

    fn bipartite_entropy(&self, cut: usize) -> Result<f64> {
        if cut == 0 || cut >= self.n_sites {
            return Err(Error::param("cut", format!("must lie in 1..={}, got {cut}", self.n_sites - 1)));
        }
        let cols = 1usize << cut;
        let m = DenseMatrix::new(self.amps.len() / cols, cols, self.amps.clone())?;
        let svd = svd_truncated(&m, 0.0, usize::MAX)?;
        Ok(entropy_of_probabilities(svd.s.iter().map(|s| s * s)))
    }

    fn subset_rdm(&self, sites: &[usize]) -> Result<DenseMatrix> {
        check_sites(sites, self.n_sites)?;
        if sites.len() > DEFAULT_SUBSET_LIMIT {
            return Err(Error::SubsetTooLarge { size: sites.len(), limit: DEFAULT_SUBSET_LIMIT });
        }
        let (rows, cols, m) = self.split_matrix(sites);
        let m = DenseMatrix::new(rows, cols, m)?;
        let mt = m.transpose();
        let mut rho = vec![0.0; cols * cols];
        gemm(cols, rows, cols, mt.data(), m.data(), &mut rho);
        DenseMatrix::new(cols, cols, rho)
    }
}

/// Dense Hamiltonian assembled from Kronecker products of single-site
/// matrices, `H = sum_terms O_N x ... x O_1`. Independent of the matrix-free
/// path; meant for cross-checks at small N.
pub fn dense_hamiltonian_kron(h: &HamiltonianSpec) -> Vec<f64> {
    let n = h.n_sites();
    let dim = 1usize << n;
    let id = [1.0, 0.0, 0.0, 1.0];
    let sz = [0.5, 0.0, 0.0, -0.5];
    let sx = [0.0, 0.5, 0.5, 0.0];
    let term = |factors: &[(usize, [f64; 4])]| -> Vec<f64> {
        let mut acc = vec![1.0];
        let mut d = 1usize;
        for site in (0..n).rev() {
            let op = factors.iter().find(|(s, _)| *s == site).map(|(_, o)| *o).unwrap_or(id);
            let nd = d * 2;
            let mut next = vec![0.0; nd * nd];
            for a in 0..d {
                for b in 0..d {
                    for i in 0..2 {
                        for j in 0..2 {
                            // kron(acc, op): acc is the more significant block
                            next[(a * 2 + i) * nd + b * 2 + j] = acc[a * d + b] * op[i * 2 + j];
                        }
                    }
                }
            }
            acc = next;
            d = nd;
        }
        acc
    };
    let mut out = vec![0.0; dim * dim];
    let mut add = |c: f64, t: Vec<f64>| {
        if c != 0.0 {
            out.iter_mut().zip(t).for_each(|(o, v)| *o += c * v);
        }
    };
    for s in 0..n {
        add(h.onsite_z[s], term(&[(s, sz)]));
        add(h.onsite_x[s], term(&[(s, sx)]));
    }
    for b in 0..n.saturating_sub(1) {
        add(h.nn_zz[b], term(&[(b, sz), (b + 1, sz)]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{SX, SZ, S_MINUS};
    use proptest::prelude::*;

    fn product(n: usize, local: [f64; 2]) -> StateVector {
        let amps = (0..1usize << n)
            .map(|idx| (0..n).map(|i| local[(idx >> i) & 1]).product())
            .collect();
        StateVector::new(n, amps).unwrap()
    }

    #[test]
    fn two_site_ising() {
        let h = HamiltonianSpec::uniform(2, 0.1, -1.0, 0.0);
        let g = ed_ground_state(&h).unwrap();
        assert!((g.energy + 0.35).abs() < 1e-12);
        assert!((g.state.amplitudes()[3].abs() - 1.0).abs() < 1e-12);
        assert!(!g.degenerate);
    }

    #[test]
    fn decoupled_transverse_spins() {
        let h = HamiltonianSpec::uniform(2, 0.0, 0.0, 1.0);
        let g = ed_ground_state(&h).unwrap();
        assert!((g.energy + 1.0).abs() < 1e-12);
        let sign = g.state.amplitudes()[0].signum();
        for (idx, a) in g.state.amplitudes().iter().enumerate() {
            let want = 0.5 * if idx.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            assert!((a * sign - want).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_case_matches_enumeration() {
        let h = HamiltonianSpec {
            onsite_z: vec![0.3, -0.2, 0.1, 0.4, -0.5],
            nn_zz: vec![1.0, -0.7, 0.2, 0.9],
            onsite_x: vec![0.0; 5],
            constant_offset: 3.0,
        };
        let min = (0..32usize).map(|idx| h.diagonal_energy(|i| (idx >> i) & 1 == 1)).fold(f64::INFINITY, f64::min);
        assert!((ed_ground_state(&h).unwrap().energy - min).abs() < 1e-12);
    }

    #[test]
    fn antiferromagnet_without_field_is_degenerate() {
        let h = HamiltonianSpec::uniform(6, 0.0, 1.0, 0.0);
        let g = ed_ground_state(&h).unwrap();
        assert!(g.degenerate);
        assert!((g.energy + 1.25).abs() < 1e-12);
    }

    #[test]
    fn too_many_sites() {
        let h = HamiltonianSpec::uniform(15, 0.1, -1.0, 0.0);
        assert!(matches!(ed_ground_state(&h), Err(Error::TooManySites { .. })));
    }

    #[test]
    fn expectation_examples() {
        let dd = StateVector::new(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((ed_expect(&dd, &[(1, SZ)]).unwrap().re + 0.5).abs() < 1e-15);
        let r = 0.5f64.sqrt();
        let bell = StateVector::new(2, vec![r, 0.0, 0.0, r]).unwrap();
        let v = ed_expect(&bell, &[(1, S_MINUS), (2, S_MINUS)]).unwrap();
        assert!((v.re - 0.5).abs() < 1e-15 && v.im.abs() < 1e-15);
        // |ud> is index 2 (site 2 down), |du> index 1
        let singlet = StateVector::new(2, vec![0.0, -r, r, 0.0]).unwrap();
        assert!(ed_expect(&singlet, &[(1, S_MINUS), (2, S_MINUS)]).unwrap().norm() < 1e-15);
        assert!(matches!(ed_expect(&bell, &[(1, SZ), (1, SX)]), Err(Error::InvalidSites(_))));
        assert!(matches!(ed_expect(&bell, &[(3, SZ)]), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn entropies() {
        let r = 0.5f64.sqrt();
        let bell = StateVector::new(2, vec![r, 0.0, 0.0, r]).unwrap();
        assert!((bell.bipartite_entropy(1).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ed_subset_entropy(&bell, &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let p = product(5, [0.6, 0.8]);
        assert!(ed_subset_entropy(&p, &[1, 3, 4]).unwrap().abs() < 1e-12);
        let mut ghz = vec![0.0; 16];
        ghz[0] = r;
        ghz[15] = r;
        let ghz = StateVector::new(4, ghz).unwrap();
        assert!((ed_subset_entropy(&ghz, &[2, 4]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(ed_subset_entropy(&ghz, &[1, 2, 3, 4]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn subset_rdm_bit_order() {
        // site 1 up, site 2 down, site 3 tilted
        let mut amps = vec![0.0; 8];
        amps[0b010] = 0.6;
        amps[0b110] = 0.8;
        let psi = StateVector::new(3, amps).unwrap();
        let rho = psi.subset_rdm(&[2, 3]).unwrap();
        // listed bits: site 2 -> bit 0 (=1), site 3 -> bit 1
        let v = [0.0, 0.6, 0.0, 0.8];
        for i in 0..4 {
            for j in 0..4 {
                assert!((rho.get(i, j) - v[i] * v[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn z2_symmetry_of_alpha_sign() {
        let mut h = HamiltonianSpec::uniform(8, 0.1, -1.0, 0.0);
        h.onsite_x = (0..8).map(|i| 0.4 * if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let e_plus = ed_ground_state(&h).unwrap().energy;
        h.onsite_x.iter_mut().for_each(|x| *x = -*x);
        let e_minus = ed_ground_state(&h).unwrap().energy;
        assert!((e_plus - e_minus).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matrix_free_equals_kronecker(
            n in 2usize..=6,
            coeffs in proptest::collection::vec(-1.0f64..1.0, 18),
            xs in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            let h = HamiltonianSpec {
                onsite_z: coeffs[0..n].to_vec(),
                nn_zz: coeffs[6..6 + n - 1].to_vec(),
                onsite_x: coeffs[12..12 + n].to_vec(),
                constant_offset: 0.0,
            };
            let dim = 1 << n;
            let dense = dense_hamiltonian_kron(&h);
            let x = &xs[..dim];
            let mut y = vec![0.0; dim];
            apply_hamiltonian(&h, x, &mut y);
            for i in 0..dim {
                let want: f64 = (0..dim).map(|j| dense[i * dim + j] * x[j]).sum();
                prop_assert!((y[i] - want).abs() < 1e-14);
            }
        }
    }
}
