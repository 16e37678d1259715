use crate::model::HamiltonianSpec;
use crate::ops::{RealOp, R_IDENTITY, R_SX, R_SZ};
use crate::tensor::Tensor;

/// MPO bond dimension: identity flow, open `S^z` string, completed terms.
pub const MPO_BOND: usize = 3;

const DONE: usize = 0;
const OPEN_ZZ: usize = 1;
const START: usize = 2;

/// Exact MPO of the spin part of a [`HamiltonianSpec`]. Site tensors have
/// shape `(w_left, w_right, s_out, s_in)`; the first site keeps only row
/// `START` and the last only column `DONE`. The constant offset is not part of
/// the operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    tensors: Vec<Tensor>,
}

impl Mpo {
    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensor(&self, site: usize) -> &Tensor {
        &self.tensors[site]
    }

    /// Dense `2^N x 2^N` matrix in the bit convention `bit n-1 = site n`.
    /// Intended for checks at small N.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_sites();
        let dim = 1usize << n;
        // acc[(w, out_cfg, in_cfg)] over the sites processed so far
        let mut acc = vec![1.0];
        let mut w_dim = 1usize;
        let mut sub = 1usize;
        for (site, t) in self.tensors.iter().enumerate() {
            let (wl, wr) = (t.dim(0), t.dim(1));
            debug_assert_eq!(wl, w_dim);
            let new_sub = sub * 2;
            let mut next = vec![0.0; wr * new_sub * new_sub];
            for a in 0..wl {
                for o in 0..sub {
                    for i in 0..sub {
                        let v = acc[(a * sub + o) * sub + i];
                        if v == 0.0 {
                            continue;
                        }
                        for b in 0..wr {
                            for so in 0..2 {
                                for si in 0..2 {
                                    let w = t.data()[((a * wr + b) * 2 + so) * 2 + si];
                                    if w == 0.0 {
                                        continue;
                                    }
                                    let no = o | (so << site);
                                    let ni = i | (si << site);
                                    next[(b * new_sub + no) * new_sub + ni] += v * w;
                                }
                            }
                        }
                    }
                }
            }
            acc = next;
            w_dim = wr;
            sub = new_sub;
        }
        debug_assert_eq!(acc.len(), dim * dim);
        acc
    }
}

fn put(t: &mut Tensor, wr_dim: usize, a: usize, b: usize, op: &RealOp, coeff: f64) {
    if coeff == 0.0 {
        return;
    }
    let d = t.data_mut();
    for so in 0..2 {
        for si in 0..2 {
            d[((a * wr_dim + b) * 2 + so) * 2 + si] += coeff * op[so][si];
        }
    }
}

pub fn mpo_from_hamiltonian(h: &HamiltonianSpec) -> Mpo {
    let n = h.n_sites();
    let mut tensors = Vec::with_capacity(n);
    for site in 0..n {
        let mut full = Tensor::zeros(vec![MPO_BOND, MPO_BOND, 2, 2]);
        put(&mut full, MPO_BOND, DONE, DONE, &R_IDENTITY, 1.0);
        put(&mut full, MPO_BOND, START, START, &R_IDENTITY, 1.0);
        put(&mut full, MPO_BOND, OPEN_ZZ, DONE, &R_SZ, 1.0);
        put(&mut full, MPO_BOND, START, DONE, &R_SZ, h.onsite_z[site]);
        put(&mut full, MPO_BOND, START, DONE, &R_SX, h.onsite_x[site]);
        if site + 1 < n {
            put(&mut full, MPO_BOND, START, OPEN_ZZ, &R_SZ, h.nn_zz[site]);
        }
        let rows: Vec<usize> = if site == 0 { vec![START] } else { (0..MPO_BOND).collect() };
        let cols: Vec<usize> = if site + 1 == n { vec![DONE] } else { (0..MPO_BOND).collect() };
        let mut t = Tensor::zeros(vec![rows.len(), cols.len(), 2, 2]);
        for (ai, &a) in rows.iter().enumerate() {
            for (bi, &b) in cols.iter().enumerate() {
                for k in 0..4 {
                    t.data_mut()[(ai * cols.len() + bi) * 4 + k] = full.data()[(a * MPO_BOND + b) * 4 + k];
                }
            }
        }
        tensors.push(t);
    }
    Mpo { tensors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::dense_hamiltonian_kron;

    #[test]
    fn two_site_ising_ground_energy() {
        let h = HamiltonianSpec::uniform(2, 0.1, -1.0, 0.0);
        let dense = mpo_from_hamiltonian(&h).to_dense();
        let diag: Vec<f64> = (0..4).map(|i| dense[i * 4 + i]).collect();
        // |uu>, |du>, |ud>, |dd> in bit order
        assert!((diag[0] + 0.15).abs() < 1e-15);
        assert!((diag[1] - 0.25).abs() < 1e-15);
        assert!((diag[2] - 0.25).abs() < 1e-15);
        assert!((diag[3] + 0.35).abs() < 1e-15);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min + 0.35).abs() < 1e-15);
        assert!(dense.iter().enumerate().all(|(k, v)| k / 4 == k % 4 || *v == 0.0));
    }

    #[test]
    fn zero_coefficients_give_zero_operator() {
        let h = HamiltonianSpec::uniform(4, 0.0, 0.0, 0.0);
        assert!(mpo_from_hamiltonian(&h).to_dense().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn transverse_only_is_sum_of_sx() {
        let h = HamiltonianSpec { onsite_z: vec![0.0; 3], nn_zz: vec![0.0; 2], onsite_x: vec![1.0; 3], constant_offset: 0.0 };
        let dense = mpo_from_hamiltonian(&h).to_dense();
        for i in 0..8usize {
            for j in 0..8usize {
                let flips = (i ^ j).count_ones();
                let want = if flips == 1 { 0.5 } else { 0.0 };
                assert_eq!(dense[i * 8 + j], want);
            }
        }
    }

    #[test]
    fn mpo_matches_kronecker_assembly() {
        for n in 2..=8 {
            let h = HamiltonianSpec {
                onsite_z: (0..n).map(|i| 0.1 + 0.03 * i as f64).collect(),
                nn_zz: (0..n - 1).map(|i| if i % 2 == 0 { -1.0 } else { 0.7 }).collect(),
                onsite_x: (0..n).map(|i| 0.3 - 0.11 * i as f64).collect(),
                constant_offset: 5.0,
            };
            let a = mpo_from_hamiltonian(&h).to_dense();
            let b = dense_hamiltonian_kron(&h);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-14, "n = {n}");
            }
        }
    }
}
