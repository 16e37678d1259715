//! Minimal dense real tensor with permutation and pairwise contraction routed
//! through a single GEMM.

use crate::linalg::gemm;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape/data mismatch");
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "reshape size mismatch");
        self.shape = shape;
        self
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    /// Returns a tensor whose axis `k` is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.shape.len());
        if perm.iter().enumerate().all(|(i, p)| i == *p) {
            return self.clone();
        }
        let old_strides = strides(&self.shape);
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let rank = new_shape.len();
        if self.data.is_empty() {
            return Tensor { shape: new_shape, data: out };
        }
        let mut idx = vec![0usize; rank];
        let mut offset = 0usize;
        // innermost axis handled as a strided run
        let inner = rank - 1;
        let inner_len = new_shape[inner];
        let inner_stride = src_strides[inner];
        loop {
            for k in 0..inner_len {
                out.push(self.data[offset + k * inner_stride]);
            }
            let mut ax = inner;
            loop {
                if ax == 0 {
                    return Tensor { shape: new_shape, data: out };
                }
                ax -= 1;
                idx[ax] += 1;
                offset += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                offset -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
    }

    /// Contracts `a_axes` of `self` with `b_axes` of `other` (paired in order).
    /// Result axes: free axes of `self` in order, then free axes of `other`.
    pub fn contract(&self, a_axes: &[usize], other: &Tensor, b_axes: &[usize]) -> Tensor {
        assert_eq!(a_axes.len(), b_axes.len());
        for (&i, &j) in a_axes.iter().zip(b_axes) {
            assert_eq!(self.shape[i], other.shape[j], "contracted dimension mismatch");
        }
        let a_free: Vec<usize> = (0..self.shape.len()).filter(|i| !a_axes.contains(i)).collect();
        let b_free: Vec<usize> = (0..other.shape.len()).filter(|i| !b_axes.contains(i)).collect();
        let a_perm: Vec<usize> = a_free.iter().chain(a_axes).copied().collect();
        let b_perm: Vec<usize> = b_axes.iter().chain(&b_free).copied().collect();
        let a_p = self.permute(&a_perm);
        let b_p = other.permute(&b_perm);
        let m: usize = a_free.iter().map(|&i| self.shape[i]).product();
        let k: usize = a_axes.iter().map(|&i| self.shape[i]).product();
        let n: usize = b_free.iter().map(|&i| other.shape[i]).product();
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &a_p.data, &b_p.data, &mut out);
        let shape = a_free
            .iter()
            .map(|&i| self.shape[i])
            .chain(b_free.iter().map(|&i| other.shape[i]))
            .collect();
        Tensor { shape, data: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|x| x as f64 * 0.5 - 3.0).collect())
    }

    #[test]
    fn permute_matches_index_formula() {
        let t = seq(vec![2, 3, 4]);
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p.shape(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(p.data()[k * 6 + i * 3 + j], t.data()[i * 12 + j * 4 + k]);
                }
            }
        }
    }

    #[test]
    fn contract_matches_naive_sum() {
        let a = seq(vec![3, 2, 4]);
        let b = seq(vec![4, 5, 2]);
        // c[i, l] = sum_{j,k} a[i,j,k] b[k,l,j]
        let c = a.contract(&[1, 2], &b, &[2, 0]);
        assert_eq!(c.shape(), &[3, 5]);
        for i in 0..3 {
            for l in 0..5 {
                let mut s = 0.0;
                for j in 0..2 {
                    for k in 0..4 {
                        s += a.data()[i * 8 + j * 4 + k] * b.data()[k * 10 + l * 2 + j];
                    }
                }
                assert!((c.data()[i * 5 + l] - s).abs() < 1e-12);
            }
        }
    }
}
