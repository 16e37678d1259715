//! Common measurement surface over ground-state representations (MPS or dense
//! state vector). Site labels are 1-based.

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{eigh_symmetric, DenseMatrix};
use crate::ops::LocalOp;

pub trait SpinState {
    fn n_sites(&self) -> usize;

    /// `<psi| O_n |psi>`.
    fn expect_one_site(&self, op: &LocalOp, n: usize) -> Result<Complex64>;

    /// `<O_n>` for every site, in site order.
    fn expect_all_sites(&self, op: &LocalOp) -> Result<Vec<Complex64>> {
        (1..=self.n_sites()).map(|n| self.expect_one_site(op, n)).collect()
    }

    /// `<A_n B_m>` for all `m`; entry `m - 1`. The origin entry `m = n` is not
    /// computed and left at zero.
    fn expect_pair_row(&self, op_a: &LocalOp, op_b: &LocalOp, n: usize) -> Result<Vec<Complex64>>;

    /// `<A_n B_m>` for every origin `n` in `origins`, every ordered pair of
    /// operators from `ops` and every `m`.
    fn pair_table(&self, ops: &[LocalOp], origins: &[usize]) -> Result<PairTable> {
        let mut t = PairTable::new(ops.len(), origins.to_vec(), self.n_sites());
        for (o, &n) in origins.iter().enumerate() {
            for (a, op_a) in ops.iter().enumerate() {
                for (b, op_b) in ops.iter().enumerate() {
                    let row = self.expect_pair_row(op_a, op_b, n)?;
                    t.row_mut(o, a, b).copy_from_slice(&row);
                }
            }
        }
        Ok(t)
    }

    /// Von Neumann entropy (nats) between sites `1..=cut` and the rest.
    fn bipartite_entropy(&self, cut: usize) -> Result<f64>;

    /// Reduced density matrix of an ascending site list. Index bit `j`
    /// belongs to the `j`-th listed site, 0 = up.
    fn subset_rdm(&self, sites: &[usize]) -> Result<DenseMatrix>;

    fn subset_entropy(&self, sites: &[usize]) -> Result<f64> {
        von_neumann_entropy(&self.subset_rdm(sites)?)
    }
}

/// Two-site correlators `<A_n B_m>` indexed by origin position, operator
/// pair and partner site `m` (1-based). Origin entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    n_ops: usize,
    origins: Vec<usize>,
    n_sites: usize,
    data: Vec<Complex64>,
}

impl PairTable {
    pub fn new(n_ops: usize, origins: Vec<usize>, n_sites: usize) -> Self {
        let len = origins.len() * n_ops * n_ops * n_sites;
        Self { n_ops, origins, n_sites, data: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn offset(&self, o: usize, a: usize, b: usize) -> usize {
        ((o * self.n_ops + a) * self.n_ops + b) * self.n_sites
    }

    pub fn row(&self, o: usize, a: usize, b: usize) -> &[Complex64] {
        let k = self.offset(o, a, b);
        &self.data[k..k + self.n_sites]
    }

    pub fn row_mut(&mut self, o: usize, a: usize, b: usize) -> &mut [Complex64] {
        let k = self.offset(o, a, b);
        &mut self.data[k..k + self.n_sites]
    }

    /// `<A_n B_m>` for the `o`-th origin `n`.
    pub fn get(&self, o: usize, a: usize, b: usize, m: usize) -> Complex64 {
        self.row(o, a, b)[m - 1]
    }
}

/// `-sum p ln p` over the eigenvalues of a density matrix.
pub fn von_neumann_entropy(rho: &DenseMatrix) -> Result<f64> {
    let (vals, _) = eigh_symmetric(rho)?;
    Ok(entropy_of_probabilities(vals.into_iter()))
}

pub fn entropy_of_probabilities(p: impl Iterator<Item = f64>) -> f64 {
    p.filter(|x| *x > 1e-300).map(|x| -x * x.ln()).sum::<f64>().max(0.0)
}

pub(crate) fn check_sites(sites: &[usize], n_sites: usize) -> Result<()> {
    use crate::error::Error;
    if sites.is_empty() {
        return Err(Error::InvalidSites("empty site list".into()));
    }
    for w in sites.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidSites(format!("sites must be strictly ascending: {sites:?}")));
        }
    }
    if let Some(&bad) = sites.iter().find(|&&s| s == 0 || s > n_sites) {
        return Err(Error::SiteOutOfRange { site: bad, n_sites });
    }
    Ok(())
}
