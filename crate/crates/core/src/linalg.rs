//! Dense kernels used by the tensor-network and observable code: truncated
//! SVD, small Hermitian eigensolvers and a restarted Lanczos solver for the
//! lowest eigenpair of a symmetric operator given as a callback.
//!
//! Matrices are stored row-major. The complex variant stores
//! `num_complex::Complex64` values, i.e. interleaved `(re, im)` pairs.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

impl DenseMatrix<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = vec![0.0; self.rows * other.cols];
        gemm(self.rows, self.cols, other.cols, &self.data, &other.data, &mut out);
        Self { rows: self.rows, cols: other.cols, data: out }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// `c = a * b` for row-major `a` (m x k) and `b` (k x n).
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub vt: DenseMatrix,
    pub discarded_weight: f64,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Relative tolerance under which two singular values count as one multiplet.
const DEGENERACY_RTOL: f64 = 1e-12;

/// Number of singular values to keep: the smallest rank whose discarded weight
/// is within `cutoff * sum(s^2)`, capped by `max_rank`. A degenerate multiplet
/// straddling the cut is kept whole when it fits under `max_rank`.
pub(crate) fn truncation_rank(s: &[f64], cutoff: f64, max_rank: usize) -> usize {
    let total: f64 = s.iter().map(|x| x * x).sum();
    let budget = cutoff * total;
    let mut rank = s.len();
    let mut tail = 0.0;
    while rank > 1 {
        let next = tail + s[rank - 1] * s[rank - 1];
        if next > budget {
            break;
        }
        tail = next;
        rank -= 1;
    }
    let capped = rank.min(max_rank).max(1);
    if capped < s.len() && capped == rank {
        let tol = DEGENERACY_RTOL * s[0].max(f64::MIN_POSITIVE);
        let mut end = capped;
        while end < s.len() && (s[end - 1] - s[end]).abs() <= tol && s[end] > 0.0 {
            end += 1;
        }
        if end <= max_rank {
            return end;
        }
    }
    capped.min(s.len())
}

pub fn svd_truncated(m: &DenseMatrix, cutoff: f64, max_rank: usize) -> Result<SvdResult> {
    if !(cutoff >= 0.0) {
        return Err(Error::param("cutoff", format!("must be >= 0, got {cutoff}")));
    }
    if max_rank == 0 {
        return Err(Error::param("max_rank", "must be >= 1"));
    }
    if m.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let svd = nalgebra::SVD::try_new(m.to_nalgebra(), true, true, f64::EPSILON, 0)
        .ok_or(Error::NoConvergence { iterations: 0, residual: f64::NAN })?;
    let u_full = svd.u.expect("u requested");
    let vt_full = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let s_all: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();

    let rank = truncation_rank(&s_all, cutoff, max_rank);
    let discarded_weight = s_all[rank..].iter().map(|x| x * x).sum();
    let u = DenseMatrix::from_fn(m.rows, rank, |i, j| u_full[(i, order[j])]);
    let vt = DenseMatrix::from_fn(rank, m.cols, |i, j| vt_full[(order[i], j)]);
    Ok(SvdResult { u, s: s_all[..rank].to_vec(), vt, discarded_weight })
}

fn symmetry_deviation<T: Copy>(m: &DenseMatrix<T>, diff: impl Fn(T, T) -> f64, mag: impl Fn(T) -> f64) -> f64 {
    let mut dev: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..m.rows {
        for j in 0..m.cols {
            scale = scale.max(mag(m.get(i, j)));
            if j > i {
                dev = dev.max(diff(m.get(i, j), m.get(j, i)));
            }
        }
    }
    dev / scale
}

/// Eigen-decomposition of a real symmetric matrix of any size. Eigenvalues
/// ascending; eigenvector `k` is column `k` of the returned matrix.
pub fn eigh_symmetric(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if m.rows != m.cols {
        return Err(Error::Dimension(format!("eigh needs a square matrix, got {}x{}", m.rows, m.cols)));
    }
    if m.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let dev = symmetry_deviation(m, |a, b| (a - b).abs(), f64::abs);
    if dev > 1e-12 {
        return Err(Error::NotSymmetric(dev));
    }
    let n = m.rows;
    let eig = SymmetricEigen::new(m.to_nalgebra());
    // V^T M V is close to diagonal; Jacobi sweeps bring the residuals to
    // machine precision.
    let mut v: Vec<Complex64> = (0..n * n).map(|k| Complex64::new(eig.eigenvectors[(k / n, k % n)], 0.0)).collect();
    let vm = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)]);
    let a = vm.transpose().matmul(m).matmul(&vm);
    let mut a: Vec<Complex64> = a.data.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    if n <= JACOBI_POLISH_MAX_DIM {
        jacobi_sweeps(&mut a, &mut v, n, 10);
    }
    let values: Vec<f64> = (0..n).map(|i| a[i * n + i].re).collect();
    let vecs = DenseMatrix::from_fn(n, n, |i, j| v[i * n + j].re);
    Ok(sorted_pairs(values, vecs))
}

/// Matrices above this size skip the Jacobi refinement.
const JACOBI_POLISH_MAX_DIM: usize = 256;

fn sorted_pairs<T: Copy>(values: Vec<f64>, vecs: DenseMatrix<T>) -> (Vec<f64>, DenseMatrix<T>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let vecs = DenseMatrix::from_fn(n, n, |i, j| vecs.get(i, order[j]));
    (sorted, vecs)
}

/// Cyclic complex Jacobi on a Hermitian `a` (row-major), accumulating the
/// rotations into the columns of `v`.
fn jacobi_sweeps(a: &mut [Complex64], v: &mut [Complex64], n: usize, max_sweeps: usize) {
    let scale: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 {
        return;
    }
    for _ in 0..max_sweeps {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].norm_sqr()).sum::<f64>().sqrt();
        if off <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let g = a[p * n + q];
                let gabs = g.norm();
                if gabs <= 1e-18 * scale {
                    continue;
                }
                let phase = g / gabs;
                let theta = (a[q * n + q].re - a[p * n + p].re) / (2.0 * gabs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (jpp, jpq, jqp, jqq) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0), -phase.conj() * s, phase.conj() * c);
                for r in 0..n {
                    let (ap, aq) = (a[r * n + p], a[r * n + q]);
                    a[r * n + p] = ap * jpp + aq * jqp;
                    a[r * n + q] = ap * jpq + aq * jqq;
                    let (vp, vq) = (v[r * n + p], v[r * n + q]);
                    v[r * n + p] = vp * jpp + vq * jqp;
                    v[r * n + q] = vp * jpq + vq * jqq;
                }
                for col in 0..n {
                    let (ap, aq) = (a[p * n + col], a[q * n + col]);
                    a[p * n + col] = jpp.conj() * ap + jqp.conj() * aq;
                    a[q * n + col] = jpq.conj() * ap + jqq.conj() * aq;
                }
                a[p * n + q] = Complex64::new(0.0, 0.0);
                a[q * n + p] = Complex64::new(0.0, 0.0);
                a[p * n + p].im = 0.0;
                a[q * n + q].im = 0.0;
            }
        }
    }
}

/// Largest dimension accepted by [`eigh_small`] / [`eigh_small_hermitian`].
pub const EIGH_SMALL_MAX_DIM: usize = 16;

pub fn eigh_small(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if m.rows > EIGH_SMALL_MAX_DIM {
        return Err(Error::Dimension(format!("eigh_small limited to {EIGH_SMALL_MAX_DIM}, got {}", m.rows)));
    }
    eigh_symmetric(m)
}

pub fn eigh_small_hermitian(m: &DenseMatrix<Complex64>) -> Result<(Vec<f64>, DenseMatrix<Complex64>)> {
    if m.rows != m.cols || m.rows > EIGH_SMALL_MAX_DIM {
        return Err(Error::Dimension(format!("eigh_small_hermitian: bad shape {}x{}", m.rows, m.cols)));
    }
    if m.data.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let dev = symmetry_deviation(m, |a, b| (a - b.conj()).norm(), |a| a.norm());
    let diag_im = (0..m.rows).map(|i| m.get(i, i).im.abs()).fold(0.0, f64::max);
    if dev.max(diag_im) > 1e-12 {
        return Err(Error::NotSymmetric(dev.max(diag_im)));
    }
    let n = m.rows;
    let mut a = m.data.clone();
    let mut v: Vec<Complex64> = (0..n * n).map(|k| Complex64::new(if k / n == k % n { 1.0 } else { 0.0 }, 0.0)).collect();
    jacobi_sweeps(&mut a, &mut v, n, 60);
    let values: Vec<f64> = (0..n).map(|i| a[i * n + i].re).collect();
    Ok(sorted_pairs(values, DenseMatrix { rows: n, cols: n, data: v }))
}

/// Outcome of a Lanczos run, converged or not.
#[derive(Clone, Debug)]
pub(crate) struct LanczosOutcome {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    pub matvecs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const KRYLOV_DIM: usize = 40;

/// Restarted Lanczos with full reorthogonalization. Always returns the best
/// Ritz pair found; `converged` reports whether the residual criterion
/// `|A v - lambda v| <= tol * |A|_est` was met.
pub(crate) fn lanczos_lowest(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    dim: usize,
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LanczosOutcome> {
    if init.len() != dim || dim == 0 {
        return Err(Error::Dimension(format!("init has length {}, operator dim {dim}", init.len())));
    }
    let n0 = norm(init);
    if !(n0 > 0.0) || !n0.is_finite() {
        return Err(Error::param("init", "initial vector must be nonzero and finite"));
    }
    let mut x: Vec<f64> = init.iter().map(|v| v / n0).collect();
    let mut w = vec![0.0; dim];
    let mut matvecs = 0usize;
    let mut a_norm_est: f64 = 0.0;
    let krylov = KRYLOV_DIM.min(dim);
    let mut best = LanczosOutcome { value: f64::NAN, vector: x.clone(), residual: f64::INFINITY, converged: false, matvecs: 0 };

    loop {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(krylov);
        let mut alphas: Vec<f64> = Vec::with_capacity(krylov);
        let mut betas: Vec<f64> = Vec::with_capacity(krylov);
        basis.push(x.clone());
        let mut last_beta = 0.0;
        for k in 0..krylov {
            apply(&basis[k], &mut w);
            matvecs += 1;
            let a = dot(&basis[k], &w);
            alphas.push(a);
            // full reorthogonalization, twice for stability
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let b = norm(&w);
            a_norm_est = a_norm_est.max(a.abs()).max(b);
            last_beta = b;
            if k + 1 == krylov || b <= 1e-14 * a_norm_est.max(1e-300) || matvecs >= max_iter {
                break;
            }
            betas.push(b);
            basis.push(w.iter().map(|v| v / b).collect());
        }
        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty tridiagonal");
        for ev in eig.eigenvalues.iter() {
            a_norm_est = a_norm_est.max(ev.abs());
        }
        let y = eig.eigenvectors.column(imin);
        let mut ritz = vec![0.0; dim];
        for (c, v) in y.iter().zip(&basis) {
            ritz.iter_mut().zip(v).for_each(|(r, vi)| *r += c * vi);
        }
        let rn = norm(&ritz);
        ritz.iter_mut().for_each(|r| *r /= rn);
        let residual = (last_beta * y[m - 1]).abs();
        let threshold = tol * a_norm_est.max(1e-300);
        if residual < best.residual || best.value.is_nan() {
            best = LanczosOutcome { value: theta, vector: ritz.clone(), residual, converged: false, matvecs };
        }
        if residual <= threshold {
            // confirm with an explicit residual
            apply(&ritz, &mut w);
            matvecs += 1;
            let lam = dot(&ritz, &w);
            let r: f64 = w.iter().zip(&ritz).map(|(a, v)| (a - lam * v).powi(2)).sum::<f64>().sqrt();
            if r <= threshold.max(1e3 * f64::EPSILON * a_norm_est) {
                return Ok(LanczosOutcome { value: lam, vector: ritz, residual: r, converged: true, matvecs });
            }
        }
        best.matvecs = matvecs;
        if matvecs >= max_iter {
            return Ok(best);
        }
        x = ritz;
    }
}

/// Algebraically smallest eigenpair of the symmetric operator `apply`.
pub fn extremal_eigenpair(
    apply: impl FnMut(&[f64], &mut [f64]),
    dim: usize,
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>)> {
    let out = lanczos_lowest(apply, dim, init, tol, max_iter)?;
    if out.converged {
        Ok((out.value, out.vector))
    } else {
        Err(Error::NoConvergence { iterations: out.matvecs, residual: out.residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let a = random_matrix(n, n, rng);
        DenseMatrix::from_fn(n, n, |i, j| a.get(i, j) + a.get(j, i))
    }

    /// One-sided Jacobi SVD; returns singular values only, descending.
    fn jacobi_singular_values(m: &DenseMatrix) -> Vec<f64> {
        let (rows, cols) = (m.rows(), m.cols());
        let mut cols_v: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m.get(i, j)).collect()).collect();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..cols {
                for q in p + 1..cols {
                    let alpha: f64 = cols_v[p].iter().map(|x| x * x).sum();
                    let beta: f64 = cols_v[q].iter().map(|x| x * x).sum();
                    let gamma: f64 = cols_v[p].iter().zip(&cols_v[q]).map(|(a, b)| a * b).sum();
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..rows {
                        let a = cols_v[p][i];
                        let b = cols_v[q][i];
                        cols_v[p][i] = c * a - s * b;
                        cols_v[q][i] = s * a + c * b;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        let mut s: Vec<f64> = cols_v.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s.truncate(rows.min(cols));
        s
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let r = svd_truncated(&DenseMatrix::identity(4), 0.0, 10).unwrap();
        assert_eq!(r.s.len(), 4);
        assert!(r.s.iter().all(|s| (s - 1.0).abs() < 1e-14));
        assert_eq!(r.discarded_weight, 0.0);

        let x = [0.6, 0.8, 0.0];
        let y = [0.0, 1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
        let m = DenseMatrix::from_fn(3, 4, |i, j| x[i] * y[j]);
        for max_rank in [1, 2, 5] {
            let r = svd_truncated(&m, 1e-10, max_rank).unwrap();
            assert_eq!(r.s.len(), 1);
            assert!((r.s[0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(8, 6, &mut rng);
        let r = svd_truncated(&m, 0.0, 100).unwrap();
        let oracle = jacobi_singular_values(&m);
        assert_eq!(r.s.len(), oracle.len());
        for (a, b) in r.s.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn svd_truncation_respects_cutoff_and_rank() {
        let s = [3.0, 2.0, 1.0, 1e-6];
        let m = DenseMatrix::from_fn(4, 4, |i, j| if i == j { s[i] } else { 0.0 });
        let r = svd_truncated(&m, 1e-10, 10).unwrap();
        assert_eq!(r.rank(), 3);
        assert!((r.discarded_weight - 1e-12).abs() < 1e-20);
        let r = svd_truncated(&m, 0.0, 2).unwrap();
        assert_eq!(r.rank(), 2);
        assert!((r.discarded_weight - (1.0 + 1e-12)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_multiplet_kept_whole_when_it_fits() {
        assert_eq!(truncation_rank(&[2.0, 1.0, 1.0, 0.1], 0.3, 10), 3);
        // cutoff would stop inside the multiplet; it fits under max_rank
        assert_eq!(truncation_rank(&[1.0, 1.0, 1.0, 1.0], 0.26, 10), 4);
        // multiplet does not fit: cut by index
        assert_eq!(truncation_rank(&[1.0, 1.0, 1.0, 1.0], 0.0, 2), 2);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let m = DenseMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]).unwrap();
        assert!(matches!(svd_truncated(&m, 0.0, 2), Err(Error::NonFinite)));
    }

    #[test]
    fn eigh_examples() {
        let d = DenseMatrix::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 });
        let (vals, _) = eigh_small(&d).unwrap();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);

        let q = -0.37;
        let m = DenseMatrix::new(3, 3, vec![0.0, 0.0, q, 0.0, 0.0, 0.0, q, 0.0, 0.0]).unwrap();
        let (vals, _) = eigh_small(&m).unwrap();
        assert!((vals[0] + q.abs()).abs() < 1e-14 && vals[1].abs() < 1e-14 && (vals[2] - q.abs()).abs() < 1e-14);

        let px = DenseMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (vals, _) = eigh_small(&px).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);

        let asym = DenseMatrix::new(2, 2, vec![0.0, 1.0, 0.5, 0.0]).unwrap();
        assert!(matches!(eigh_small(&asym), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn hermitian_pauli_y() {
        let i = Complex64::new(0.0, 1.0);
        let z = Complex64::new(0.0, 0.0);
        let y = DenseMatrix::new(2, 2, vec![z, -i, i, z]).unwrap();
        let (vals, vecs) = eigh_small_hermitian(&y).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        // Y v = lambda v
        for k in 0..2 {
            for r in 0..2 {
                let yv: Complex64 = (0..2).map(|c| y.get(r, c) * vecs.get(c, k)).sum();
                assert!((yv - vecs.get(r, k) * vals[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn lanczos_examples() {
        let diag = [-2.0, 0.0, 1.0, 5.0];
        let init = [0.3, 0.5, -0.2, 0.7];
        let (lam, v) = extremal_eigenpair(
            |x, y| y.iter_mut().zip(x).zip(diag).for_each(|((yi, xi), d)| *yi = d * xi),
            4,
            &init,
            1e-12,
            200,
        )
        .unwrap();
        assert!((lam + 2.0).abs() < 1e-12);
        assert!((v[0].abs() - 1.0).abs() < 1e-10);

        let init = [1.0, 2.0, 3.0];
        let (lam, v) = extremal_eigenpair(|x, y| y.copy_from_slice(x), 3, &init, 1e-12, 50).unwrap();
        assert!((lam - 1.0).abs() < 1e-15);
        let n = 14f64.sqrt();
        for (a, b) in v.iter().zip(init) {
            assert!((a - b / n).abs() < 1e-14);
        }
    }

    #[test]
    fn lanczos_two_site_ising() {
        // basis |uu>, |ud>, |du>, |dd>; H = 0.1 (Sz1 + Sz2) - Sz1 Sz2
        let diag = [0.1 - 0.25, 0.25, 0.25, -0.1 - 0.25];
        let (lam, _) = extremal_eigenpair(
            |x, y| y.iter_mut().zip(x).zip(diag).for_each(|((yi, xi), d)| *yi = d * xi),
            4,
            &[0.5; 4],
            1e-12,
            100,
        )
        .unwrap();
        assert!((lam + 0.35).abs() < 1e-12);
    }

    #[test]
    fn lanczos_rejects_zero_init() {
        assert!(extremal_eigenpair(|x, y| y.copy_from_slice(x), 2, &[0.0, 0.0], 1e-10, 10).is_err());
    }

    #[test]
    fn lanczos_agrees_with_eigh_up_to_dim_16() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=16 {
            let m = random_symmetric(n, &mut rng);
            let (vals, _) = eigh_small(&m).unwrap();
            let init: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (lam, v) = extremal_eigenpair(
                |x, y| {
                    for i in 0..n {
                        y[i] = (0..n).map(|j| m.get(i, j) * x[j]).sum();
                    }
                },
                n,
                &init,
                1e-12,
                2000,
            )
            .unwrap();
            assert!((lam - vals[0]).abs() < 1e-9, "n={n}: {lam} vs {}", vals[0]);
            let res: f64 = (0..n)
                .map(|i| ((0..n).map(|j| m.get(i, j) * v[j]).sum::<f64>() - lam * v[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn svd_isometry_and_reconstruction(rows in 1usize..64, cols in 1usize..64, seed in any::<u64>(), cutoff in prop_oneof![Just(0.0), 1e-6..1e-1f64], max_rank in 1usize..70) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_matrix(rows, cols, &mut rng);
                let r = svd_truncated(&m, cutoff, max_rank).unwrap();
                let k = r.rank();
                prop_assert!(k <= max_rank);
                prop_assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
                let utu = r.u.transpose().matmul(&r.u);
                let vvt = r.vt.matmul(&r.vt.transpose());
                for i in 0..k {
                    for j in 0..k {
                        let id = if i == j { 1.0 } else { 0.0 };
                        prop_assert!((utu.get(i, j) - id).abs() < 1e-12);
                        prop_assert!((vvt.get(i, j) - id).abs() < 1e-12);
                    }
                }
                let us = DenseMatrix::from_fn(rows, k, |i, j| r.u.get(i, j) * r.s[j]);
                let rec = us.matmul(&r.vt);
                let err: f64 = m.data().iter().zip(rec.data()).map(|(a, b)| (a - b).powi(2)).sum();
                let total = m.frobenius_sq();
                prop_assert!((err - r.discarded_weight).abs() <= 1e-10 * total.max(1e-300) + 1e-14);
                if k < max_rank {
                    prop_assert!(r.discarded_weight <= cutoff * total * (1.0 + 1e-12) + 1e-15);
                }
            }

            #[test]
            fn eigh_residual_and_orthonormality(n in 1usize..=16, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_symmetric(n, &mut rng);
                let (vals, vecs) = eigh_small(&m).unwrap();
                prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
                for k in 0..n {
                    for i in 0..n {
                        let mv: f64 = (0..n).map(|j| m.get(i, j) * vecs.get(j, k)).sum();
                        prop_assert!((mv - vals[k] * vecs.get(i, k)).abs() < 1e-10);
                    }
                    for l in 0..n {
                        let d: f64 = (0..n).map(|i| vecs.get(i, k) * vecs.get(i, l)).sum();
                        let id = if k == l { 1.0 } else { 0.0 };
                        prop_assert!((d - id).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
