//! Matrix-product states for spin-1/2 chains, the Hamiltonian MPO, two-site
//! DMRG and measurements.
//!
//! Site tensors have shape `(left bond, 2, right bond)` with physical index 0
//! for spin up. Sites are stored 0-based; public measurement routines take
//! 1-based site labels.

mod checkpoint;
mod dmrg;
mod measure;
mod mpo;

pub use dmrg::{dmrg_ground_state, DmrgConfig, DmrgDiagnostics};
pub use measure::DEFAULT_SUBSET_LIMIT;
pub use mpo::{mpo_from_hamiltonian, Mpo};

use crate::error::{Error, Result};
use crate::linalg::{svd_truncated, DenseMatrix};
use crate::tensor::Tensor;

/// Relative weight dropped when moving the center, removing bond directions
/// that carry only round-off.
const ROUNDOFF_WEIGHT: f64 = 1e-28;

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    tensors: Vec<Tensor>,
    center: usize,
    max_bond: usize,
}

impl Mps {
    /// Product state from per-site (up, down) amplitudes; each is normalized.
    pub fn product(states: &[[f64; 2]]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::param("states", "empty chain"));
        }
        let tensors = states
            .iter()
            .map(|&[u, d]| {
                let n = (u * u + d * d).sqrt();
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::param("states", "local state must be nonzero and finite"));
                }
                Ok(Tensor::new(vec![1, 2, 1], vec![u / n, d / n]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tensors, center: 0, max_bond: 1 })
    }

    /// Decomposes a dense state (bit `n-1` of the index is site `n`, 0 = up).
    pub fn from_state_vector(amps: &[f64], n_sites: usize, cutoff: f64, max_bond: usize) -> Result<Self> {
        if n_sites == 0 || amps.len() != 1 << n_sites {
            return Err(Error::Dimension(format!("state of length {} for {n_sites} sites", amps.len())));
        }
        // reorder so site 1 is the slowest index
        let dim = amps.len();
        let mut psi = vec![0.0; dim];
        for (idx, a) in amps.iter().enumerate() {
            let mut row = 0usize;
            for site in 0..n_sites {
                row = (row << 1) | ((idx >> site) & 1);
            }
            psi[row] = *a;
        }
        let mut tensors = Vec::with_capacity(n_sites);
        let mut rest = psi;
        let mut left = 1usize;
        for _ in 0..n_sites - 1 {
            let cols = rest.len() / (left * 2);
            let m = DenseMatrix::new(left * 2, cols, rest)?;
            let svd = svd_truncated(&m, cutoff, max_bond)?;
            let r = svd.rank();
            tensors.push(Tensor::new(vec![left, 2, r], svd.u.into_data()));
            let mut next = svd.vt.into_data();
            for (i, row) in next.chunks_mut(cols).enumerate() {
                row.iter_mut().for_each(|x| *x *= svd.s[i]);
            }
            rest = next;
            left = r;
        }
        tensors.push(Tensor::new(vec![left, 2, 1], rest));
        let mut mps = Self { tensors, center: n_sites - 1, max_bond };
        mps.normalize();
        Ok(mps)
    }

    pub(crate) fn from_parts(tensors: Vec<Tensor>, center: usize, max_bond: usize) -> Self {
        Self { tensors, center, max_bond }
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    /// 0-based index of the orthogonality center.
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn max_bond(&self) -> usize {
        self.max_bond
    }

    pub fn set_max_bond(&mut self, chi: usize) {
        self.max_bond = chi;
    }

    /// `N + 1` bond dimensions including the two trivial boundary bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(self.tensors[0].dim(0)).chain(self.tensors.iter().map(|t| t.dim(2))).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn tensor(&self, site: usize) -> &Tensor {
        &self.tensors[site]
    }

    pub(crate) fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub(crate) fn set_center(&mut self, c: usize) {
        self.center = c;
    }

    /// Norm from the center tensor; valid when the canonical form holds.
    pub fn norm(&self) -> f64 {
        self.tensors[self.center].norm()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.tensors[self.center].scale(1.0 / n);
        }
    }

    /// Moves the orthogonality center one site right, exactly.
    fn shift_right(&mut self) {
        let c = self.center;
        let t = &self.tensors[c];
        let (dl, dr) = (t.dim(0), t.dim(2));
        let m = DenseMatrix::new(dl * 2, dr, t.data().to_vec()).expect("shape");
        let svd = svd_truncated(&m, ROUNDOFF_WEIGHT, usize::MAX).expect("finite tensor");
        let r = svd.rank();
        self.tensors[c] = Tensor::new(vec![dl, 2, r], svd.u.into_data());
        let mut sv = svd.vt.into_data();
        for (i, row) in sv.chunks_mut(dr).enumerate() {
            row.iter_mut().for_each(|x| *x *= svd.s[i]);
        }
        let sv = Tensor::new(vec![r, dr], sv);
        self.tensors[c + 1] = sv.contract(&[1], &self.tensors[c + 1], &[0]);
        self.center = c + 1;
    }

    /// Moves the orthogonality center one site left, exactly.
    fn shift_left(&mut self) {
        let c = self.center;
        let t = &self.tensors[c];
        let (dl, dr) = (t.dim(0), t.dim(2));
        let m = DenseMatrix::new(dl, 2 * dr, t.data().to_vec()).expect("shape");
        let svd = svd_truncated(&m, ROUNDOFF_WEIGHT, usize::MAX).expect("finite tensor");
        let r = svd.rank();
        self.tensors[c] = Tensor::new(vec![r, 2, dr], svd.vt.into_data());
        let mut us = svd.u.into_data();
        for row in us.chunks_mut(r) {
            row.iter_mut().zip(&svd.s).for_each(|(x, s)| *x *= s);
        }
        let us = Tensor::new(vec![dl, r], us);
        self.tensors[c - 1] = self.tensors[c - 1].contract(&[2], &us, &[0]);
        self.center = c - 1;
    }

    /// Brings the state into mixed canonical form centered at `site` (0-based).
    pub fn move_center(&mut self, site: usize) {
        assert!(site < self.n_sites(), "center out of range");
        while self.center < site {
            self.shift_right();
        }
        while self.center > site {
            self.shift_left();
        }
    }

    /// Full canonicalization: sweeps left-canonical up to the last site, then
    /// right-canonical back to `site`. Needed when the tensors were produced
    /// outside the canonical-form bookkeeping.
    pub fn canonicalize(&mut self, site: usize) {
        self.center = 0;
        self.move_center(self.n_sites() - 1);
        self.move_center(site);
        self.normalize();
    }

    /// Dense amplitudes (bit `n-1` = site `n`, 0 = up). Intended for small N.
    pub fn to_state_vector(&self) -> Vec<f64> {
        let n = self.n_sites();
        // acc[(config), bond]
        let mut acc = vec![1.0];
        let mut bond = 1usize;
        for (site, t) in self.tensors.iter().enumerate() {
            let dr = t.dim(2);
            let configs = acc.len() / bond;
            let mut next = vec![0.0; configs * 2 * dr];
            for cfg in 0..configs {
                for a in 0..bond {
                    let w = acc[cfg * bond + a];
                    if w == 0.0 {
                        continue;
                    }
                    for s in 0..2 {
                        let new_cfg = cfg | (s << site);
                        for b in 0..dr {
                            next[new_cfg * dr + b] += w * t.data()[(a * 2 + s) * dr + b];
                        }
                    }
                }
            }
            acc = next;
            bond = dr;
        }
        debug_assert_eq!(acc.len(), 1 << n);
        acc
    }

    /// Maximum deviation from the left/right isometry conditions around the
    /// center.
    pub fn isometry_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (i, t) in self.tensors.iter().enumerate() {
            if i == self.center {
                continue;
            }
            let (dl, dr) = (t.dim(0), t.dim(2));
            let g = if i < self.center {
                t.contract(&[0, 1], t, &[0, 1])
            } else {
                t.contract(&[1, 2], t, &[1, 2])
            };
            let d = if i < self.center { dr } else { dl };
            for a in 0..d {
                for b in 0..d {
                    let id = if a == b { 1.0 } else { 0.0 };
                    err = err.max((g.data()[a * d + b] - id).abs());
                }
            }
        }
        err
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn bell_pair() -> Vec<f64> {
        let r = 0.5f64.sqrt();
        vec![r, 0.0, 0.0, r]
    }

    pub fn ghz(n: usize) -> Vec<f64> {
        let mut v = vec![0.0; 1 << n];
        v[0] = 0.5f64.sqrt();
        v[(1 << n) - 1] = 0.5f64.sqrt();
        v
    }

    #[test]
    fn state_vector_round_trip() {
        let n = 5;
        let v: Vec<f64> = (0..1 << n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let mps = Mps::from_state_vector(&v, n, 0.0, 64).unwrap();
        let back = mps.to_state_vector();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_moves_preserve_state_and_isometries() {
        let v = ghz(4);
        let mut mps = Mps::from_state_vector(&v, 4, 0.0, 16).unwrap();
        for target in [0, 3, 1, 2] {
            mps.move_center(target);
            assert!(mps.isometry_error() < 1e-12);
            assert!((mps.norm() - 1.0).abs() < 1e-12);
            for (a, b) in v.iter().zip(mps.to_state_vector()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(mps.bond_dims(), vec![1, 2, 2, 2, 1]);
    }

    #[test]
    fn product_state_basics() {
        let mps = Mps::product(&[[1.0, 0.0], [3.0, 4.0]]).unwrap();
        let v = mps.to_state_vector();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[2] - 0.8).abs() < 1e-15);
        assert!(Mps::product(&[[0.0, 0.0]]).is_err());
    }
}
