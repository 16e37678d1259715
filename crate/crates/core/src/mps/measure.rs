//! Expectation values, correlator rows and entropies on an MPS.
//!
//! All contractions run on real tensors; complex local operators are split
//! into real and imaginary parts and recombined.

use num_complex::Complex64;
use rayon::prelude::*;

use super::Mps;
use crate::error::{Error, Result};
use crate::linalg::{svd_truncated, DenseMatrix};
use crate::ops::{split, LocalOp, RealOp};
use crate::state::{check_sites, entropy_of_probabilities, PairTable, SpinState};
use crate::tensor::Tensor;

pub const DEFAULT_SUBSET_LIMIT: usize = 10;

/// Upper bound on `4^k * chi^2` entries held while building a subset RDM.
const SUBSET_WORK_LIMIT: usize = 1 << 25;

fn apply_op(t: &Tensor, axis_len_before: usize, after: usize, op: &RealOp) -> Tensor {
    // t has shape (before, 2, after); returns op applied on the middle axis
    let d = t.data();
    let mut out = vec![0.0; d.len()];
    for x in 0..axis_len_before {
        for so in 0..2 {
            for si in 0..2 {
                let c = op[so][si];
                if c == 0.0 {
                    continue;
                }
                let src = &d[(x * 2 + si) * after..(x * 2 + si + 1) * after];
                let dst = &mut out[(x * 2 + so) * after..(x * 2 + so + 1) * after];
                dst.iter_mut().zip(src).for_each(|(o, s)| *o += c * s);
            }
        }
    }
    Tensor::new(t.shape().to_vec(), out)
}

/// `E'[c', c] = sum E[a', a] A[a, s, c] op[s', s] A[a', s', c']`.
fn transfer_left(env: &Tensor, a: &Tensor, op: Option<&RealOp>) -> Tensor {
    let t1 = env.contract(&[1], a, &[0]); // (a', s, c)
    let t2 = match op {
        Some(op) => apply_op(&t1, t1.dim(0), t1.dim(2), op),
        None => t1,
    };
    a.contract(&[0, 1], &t2, &[0, 1])
}

/// `F'[a', a] = sum A[a, s, b] op[s', s] A[a', s', b'] F[b', b]`.
fn transfer_right(env: &Tensor, a: &Tensor, op: Option<&RealOp>) -> Tensor {
    let t1 = a.contract(&[2], env, &[1]); // (a, s, b')
    let t2 = match op {
        Some(op) => apply_op(&t1, t1.dim(0), t1.dim(2), op),
        None => t1,
    };
    a.contract(&[1, 2], &t2, &[1, 2])
}

fn close(left: &Tensor, right: &Tensor) -> f64 {
    left.data().iter().zip(right.data()).map(|(x, y)| x * y).sum()
}

fn unit_env() -> Tensor {
    Tensor::new(vec![1, 1], vec![1.0])
}

impl Mps {
    /// Identity environments: `lefts[i]` covers sites `< i`, `rights[i]` sites
    /// `>= i` (0-based), each of shape `(bra, ket)`.
    fn identity_envs(&self) -> (Vec<Tensor>, Vec<Tensor>) {
        let n = self.n_sites();
        let mut lefts = Vec::with_capacity(n + 1);
        lefts.push(unit_env());
        for i in 0..n {
            let next = transfer_left(&lefts[i], self.tensor(i), None);
            lefts.push(next);
        }
        let mut rights = vec![unit_env(); n + 1];
        for i in (0..n).rev() {
            rights[i] = transfer_right(&rights[i + 1], self.tensor(i), None);
        }
        (lefts, rights)
    }

    fn check_site(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_sites() {
            return Err(Error::SiteOutOfRange { site: n, n_sites: self.n_sites() });
        }
        Ok(())
    }

    fn real_one_site_all(&self, op: &RealOp, lefts: &[Tensor], rights: &[Tensor]) -> Vec<f64> {
        let norm = close(&lefts[self.n_sites()], &unit_env());
        (0..self.n_sites())
            .map(|i| close(&transfer_left(&lefts[i], self.tensor(i), Some(op)), &rights[i + 1]) / norm)
            .collect()
    }

    /// Real correlator row `<A_n B_m>` for all m (0-based origin).
    fn real_pair_row(&self, a: &RealOp, b: &RealOp, origin: usize, lefts: &[Tensor], rights: &[Tensor]) -> Vec<f64> {
        let n = self.n_sites();
        let norm = close(&lefts[n], &unit_env());
        let mut row = vec![0.0; n];
        let mut e = transfer_left(&lefts[origin], self.tensor(origin), Some(a));
        for m in origin + 1..n {
            row[m] = close(&transfer_left(&e, self.tensor(m), Some(b)), &rights[m + 1]) / norm;
            e = transfer_left(&e, self.tensor(m), None);
        }
        let mut f = transfer_right(&rights[origin + 1], self.tensor(origin), Some(a));
        for m in (0..origin).rev() {
            row[m] = close(&lefts[m], &transfer_right(&f, self.tensor(m), Some(b))) / norm;
            f = transfer_right(&f, self.tensor(m), None);
        }
        row
    }

    /// Squared Schmidt coefficients across the bond after site `cut`.
    pub fn schmidt_probabilities(&self, cut: usize) -> Result<Vec<f64>> {
        if cut == 0 || cut >= self.n_sites() {
            return Err(Error::param("cut", format!("must lie in 1..={}, got {cut}", self.n_sites() - 1)));
        }
        let mut psi = self.clone();
        psi.move_center(cut - 1);
        let t = psi.tensor(cut - 1);
        let m = DenseMatrix::new(t.dim(0) * 2, t.dim(2), t.data().to_vec())?;
        let svd = svd_truncated(&m, 0.0, usize::MAX)?;
        let total: f64 = svd.s.iter().map(|s| s * s).sum();
        Ok(svd.s.iter().map(|s| s * s / total).collect())
    }

    pub fn subset_rdm_with_limit(&self, sites: &[usize], limit: usize) -> Result<DenseMatrix> {
        let n = self.n_sites();
        check_sites(sites, n)?;
        let k = sites.len();
        if k > limit {
            return Err(Error::SubsetTooLarge { size: k, limit });
        }
        let chi = self.max_bond_dim();
        let work = (1usize << (2 * k)).saturating_mul(chi * chi);
        if work > SUBSET_WORK_LIMIT {
            return Err(Error::SubsetTooLarge { size: k, limit });
        }
        let (lefts, rights) = self.identity_envs();
        let first = sites[0] - 1;
        let last = sites[k - 1] - 1;
        // env shape (kb, kk, bra, ket)
        let l0 = &lefts[first];
        let mut env = l0.clone().reshape(vec![1, 1, l0.dim(0), l0.dim(1)]);
        let mut kdim = 1usize;
        let mut next_listed = 0usize;
        for site in first..=last {
            let a = self.tensor(site);
            if next_listed < k && sites[next_listed] - 1 == site {
                // (kb, kk, a', a) x (a, s, c) -> (kb, kk, a', s, c)
                let t1 = env.contract(&[3], a, &[0]);
                // x (a', s', c') -> (kb, kk, s, c, s', c')
                let t2 = t1.contract(&[2], a, &[0]);
                // new site becomes the most significant bit: (s', kb, s, kk, c', c)
                let t3 = t2.permute(&[4, 0, 2, 1, 5, 3]);
                let (cb, ck) = (a.dim(2), a.dim(2));
                kdim *= 2;
                env = t3.reshape(vec![kdim, kdim, cb, ck]);
                next_listed += 1;
            } else {
                let t1 = env.contract(&[3], a, &[0]); // (kb, kk, a', s, c)
                let t2 = t1.contract(&[2, 3], a, &[0, 1]); // (kb, kk, c, c')
                env = t2.permute(&[0, 1, 3, 2]);
            }
        }
        let r = &rights[last + 1];
        let dims = (env.dim(2), env.dim(3));
        let rmat = r.clone().reshape(vec![dims.0 * dims.1]);
        let env2 = env.reshape(vec![kdim * kdim, dims.0 * dims.1]);
        let rho_flat = env2.contract(&[1], &rmat, &[0]);
        let trace: f64 = (0..kdim).map(|i| rho_flat.data()[i * kdim + i]).sum();
        let mut rho = DenseMatrix::from_fn(kdim, kdim, |i, j| rho_flat.data()[i * kdim + j] / trace);
        // symmetrize round-off
        for i in 0..kdim {
            for j in i + 1..kdim {
                let v = 0.5 * (rho.get(i, j) + rho.get(j, i));
                rho.set(i, j, v);
                rho.set(j, i, v);
            }
        }
        Ok(rho)
    }
}

impl SpinState for Mps {
    fn n_sites(&self) -> usize {
        self.tensors().len()
    }

    fn expect_one_site(&self, op: &LocalOp, n: usize) -> Result<Complex64> {
        self.check_site(n)?;
        let all = self.expect_all_sites(op)?;
        Ok(all[n - 1])
    }

    fn expect_all_sites(&self, op: &LocalOp) -> Result<Vec<Complex64>> {
        let (lefts, rights) = self.identity_envs();
        let (re, im) = split(op);
        let n = self.n_sites();
        let re_v = re.map(|o| self.real_one_site_all(&o, &lefts, &rights)).unwrap_or_else(|| vec![0.0; n]);
        let im_v = im.map(|o| self.real_one_site_all(&o, &lefts, &rights)).unwrap_or_else(|| vec![0.0; n]);
        Ok(re_v.into_iter().zip(im_v).map(|(r, i)| Complex64::new(r, i)).collect())
    }

    fn expect_pair_row(&self, op_a: &LocalOp, op_b: &LocalOp, n: usize) -> Result<Vec<Complex64>> {
        self.check_site(n)?;
        let (lefts, rights) = self.identity_envs();
        self.pair_row_with_envs(op_a, op_b, n, &lefts, &rights)
    }

    fn bipartite_entropy(&self, cut: usize) -> Result<f64> {
        Ok(entropy_of_probabilities(self.schmidt_probabilities(cut)?.into_iter()))
    }

    fn subset_rdm(&self, sites: &[usize]) -> Result<DenseMatrix> {
        self.subset_rdm_with_limit(sites, DEFAULT_SUBSET_LIMIT)
    }

    /// Operator-dressed environments are built once per site, so each origin
    /// costs one transfer pass per real operator part. When every site is an
    /// origin only partners `m > n` are contracted and the rest is filled from
    /// `<A_n B_m> = <B_m A_n>`.
    fn pair_table(&self, ops: &[LocalOp], origins: &[usize]) -> Result<PairTable> {
        let n = self.n_sites();
        for &o in origins {
            self.check_site(o)?;
        }
        let (lefts, rights) = self.identity_envs();
        let norm = close(&lefts[n], &unit_env());
        // real parts: index 2k = Re(op k), 2k + 1 = Im(op k)
        let parts: Vec<Option<RealOp>> = ops.iter().flat_map(|op| {
            let (re, im) = split(op);
            [re, im]
        }).collect();
        let all_sites = origins.len() == n && origins.iter().enumerate().all(|(i, &o)| o == i + 1);
        let dressed_right: Vec<Vec<Option<Tensor>>> = (0..n)
            .map(|m| parts.iter().map(|p| p.as_ref().map(|r| transfer_right(&rights[m + 1], self.tensor(m), Some(r)))).collect())
            .collect();
        let dressed_left: Vec<Vec<Option<Tensor>>> = if all_sites {
            Vec::new()
        } else {
            (0..n)
                .map(|m| parts.iter().map(|p| p.as_ref().map(|r| transfer_left(&lefts[m], self.tensor(m), Some(r)))).collect())
                .collect()
        };
        let k = ops.len();
        // rows[o][pa][pb][m] over real parts
        let real_rows: Vec<Vec<f64>> = origins
            .par_iter()
            .map(|&origin| {
                let i = origin - 1;
                let np = parts.len();
                let mut out = vec![0.0; np * np * n];
                for (pa, ra) in parts.iter().enumerate() {
                    let Some(ra) = ra else { continue };
                    let mut e = transfer_left(&lefts[i], self.tensor(i), Some(ra));
                    for m in i + 1..n {
                        for (pb, rb) in dressed_right[m].iter().enumerate() {
                            if let Some(rb) = rb {
                                out[(pa * np + pb) * n + m] = close(&e, rb) / norm;
                            }
                        }
                        e = transfer_left(&e, self.tensor(m), None);
                    }
                    if all_sites {
                        continue;
                    }
                    let mut f = transfer_right(&rights[i + 1], self.tensor(i), Some(ra));
                    for m in (0..i).rev() {
                        for (pb, lb) in dressed_left[m].iter().enumerate() {
                            if let Some(lb) = lb {
                                out[(pa * np + pb) * n + m] = close(lb, &f) / norm;
                            }
                        }
                        f = transfer_right(&f, self.tensor(m), None);
                    }
                }
                out
            })
            .collect();
        let np = parts.len();
        let real = |o: usize, pa: usize, pb: usize, m: usize| -> f64 {
            if all_sites && m < origins[o] - 1 {
                // <A_n B_m> = <B_m A_n>, read from origin m
                real_rows[m][(pb * np + pa) * n + (origins[o] - 1)]
            } else {
                real_rows[o][(pa * np + pb) * n + m]
            }
        };
        let mut table = PairTable::new(k, origins.to_vec(), n);
        for o in 0..origins.len() {
            for a in 0..k {
                for b in 0..k {
                    let row = table.row_mut(o, a, b);
                    for (m, slot) in row.iter_mut().enumerate() {
                        if m == origins[o] - 1 {
                            continue;
                        }
                        let rr = real(o, 2 * a, 2 * b, m);
                        let ii = real(o, 2 * a + 1, 2 * b + 1, m);
                        let ri = real(o, 2 * a, 2 * b + 1, m);
                        let ir = real(o, 2 * a + 1, 2 * b, m);
                        *slot = Complex64::new(rr - ii, ri + ir);
                    }
                }
            }
        }
        Ok(table)
    }
}

impl Mps {
    fn pair_row_with_envs(
        &self,
        op_a: &LocalOp,
        op_b: &LocalOp,
        n: usize,
        lefts: &[Tensor],
        rights: &[Tensor],
    ) -> Result<Vec<Complex64>> {
        let origin = n - 1;
        let (ar, ai) = split(op_a);
        let (br, bi) = split(op_b);
        let len = self.n_sites();
        let row = |a: &Option<RealOp>, b: &Option<RealOp>| match (a, b) {
            (Some(a), Some(b)) => self.real_pair_row(a, b, origin, lefts, rights),
            _ => vec![0.0; len],
        };
        let rr = row(&ar, &br);
        let ii = row(&ai, &bi);
        let ri = row(&ar, &bi);
        let ir = row(&ai, &br);
        Ok((0..len)
            .map(|m| Complex64::new(rr[m] - ii[m], ri[m] + ir[m]))
            .collect())
    }
}
