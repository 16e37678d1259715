//! Two-site DMRG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mpo, Mps};
use crate::error::{Error, Result};
use crate::linalg::{lanczos_lowest, svd_truncated, DenseMatrix};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmrgConfig {
    pub max_bond: usize,
    pub svd_cutoff: f64,
    pub max_sweeps: usize,
    pub energy_tol: f64,
    pub local_eig_tol: f64,
    /// Matrix-vector products allowed per local eigenproblem.
    pub local_max_iter: usize,
    /// Amplitude of the random perturbation added to each two-site tensor
    /// before splitting. It shrinks tenfold per sweep and is dropped once
    /// below `1e-14`; convergence is only declared after that. Zero disables
    /// it.
    pub noise: f64,
    pub seed: u64,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        Self {
            max_bond: 64,
            svd_cutoff: 1e-10,
            max_sweeps: 30,
            energy_tol: 1e-10,
            local_eig_tol: 1e-12,
            local_max_iter: 400,
            noise: 0.0,
            seed: 0x5eed,
        }
    }
}

impl DmrgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_bond == 0 || self.max_sweeps == 0 || self.local_max_iter == 0 {
            return Err(Error::param("dmrg", "max_bond, max_sweeps and local_max_iter must be positive"));
        }
        for (name, v) in [
            ("dmrg.svd_cutoff", self.svd_cutoff),
            ("dmrg.energy_tol", self.energy_tol),
            ("dmrg.local_eig_tol", self.local_eig_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param("dmrg", format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise >= 0.0) {
            return Err(Error::param("dmrg", "noise must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DmrgDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    pub max_bond: usize,
    /// Sum of discarded weights over the truncations of the final sweep.
    pub discarded_weight: f64,
    pub sweep_energies: Vec<f64>,
    pub local_unconverged: usize,
}

/// Left environment: shape `(bra, w, ket)`.
fn extend_left(env: &Tensor, a: &Tensor, w: &Tensor) -> Tensor {
    // (a', w, a) x (a, s, c) -> (a', w, s, c)
    let t1 = env.contract(&[2], a, &[0]);
    // (a', w, s, c) x (w, w', s', s) -> (a', c, w', s')
    let t2 = t1.contract(&[1, 2], w, &[0, 3]);
    // (a', s', c') x (a', c, w', s') -> (c', c, w')
    let t3 = a.contract(&[0, 1], &t2, &[0, 3]);
    t3.permute(&[0, 2, 1])
}

/// Right environment: shape `(bra, w, ket)`.
fn extend_right(env: &Tensor, b: &Tensor, w: &Tensor) -> Tensor {
    // (a, s, b) x (b', w', b) -> (a, s, b', w')
    let t1 = b.contract(&[2], env, &[2]);
    // (a, s, b', w') x (w, w', s', s) -> (a, b', w, s')
    let t2 = t1.contract(&[1, 3], w, &[3, 1]);
    // (a', s', b') x (a, b', w, s') -> (a', a, w)
    let t3 = b.contract(&[1, 2], &t2, &[3, 1]);
    t3.permute(&[0, 2, 1])
}

fn trivial_env() -> Tensor {
    Tensor::new(vec![1, 1, 1], vec![1.0])
}

/// Effective two-site Hamiltonian applied to `theta` of shape `(a, s1, s2, b)`.
fn apply_two_site(left: &Tensor, w1: &Tensor, w2: &Tensor, right: &Tensor, theta: &Tensor) -> Tensor {
    // (a', w1, a) x (a, s1, s2, b) -> (a', w1, s1, s2, b)
    let t1 = left.contract(&[2], theta, &[0]);
    // x (w1, w2, s1', s1) -> (a', s2, b, w2, s1')
    let t2 = t1.contract(&[1, 2], w1, &[0, 3]);
    // x (w2, w3, s2', s2) -> (a', b, s1', w3, s2')
    let t3 = t2.contract(&[3, 1], w2, &[0, 3]);
    // x (b', w3, b) -> (a', s1', s2', b')
    t3.contract(&[3, 1], right, &[1, 2])
}

/// Ground state of `mpo` starting from `init`. The returned energy is the
/// eigenvalue of the spin operator alone.
pub fn dmrg_ground_state(mpo: &Mpo, init: &Mps, cfg: &DmrgConfig) -> Result<(Mps, f64, DmrgDiagnostics)> {
    cfg.validate()?;
    let n = mpo.n_sites();
    if init.n_sites() != n {
        return Err(Error::Dimension(format!("MPS has {} sites, MPO has {n}", init.n_sites())));
    }
    if n < 2 {
        return Err(Error::Dimension("two-site DMRG needs at least 2 sites".into()));
    }
    let mut psi = init.clone();
    psi.set_max_bond(cfg.max_bond);
    psi.move_center(0);
    psi.normalize();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lefts: Vec<Tensor> = vec![trivial_env(); n + 1];
    let mut rights: Vec<Tensor> = vec![trivial_env(); n + 1];
    // rights[i] covers sites i..n
    for i in (1..n).rev() {
        rights[i] = extend_right(&rights[i + 1], psi.tensor(i), mpo.tensor(i));
    }

    let mut diag = DmrgDiagnostics::default();
    let mut energy = f64::INFINITY;
    let mut prev = f64::INFINITY;

    let mut noise = cfg.noise;
    for sweep in 0..cfg.max_sweeps {
        let mut discarded = 0.0;
        // left-to-right
        for i in 0..n - 1 {
            let (e, dw) = update_bond(&mut psi, mpo, &lefts[i], &rights[i + 2], i, true, cfg, noise, &mut rng, &mut diag)?;
            energy = e;
            discarded += dw;
            lefts[i + 1] = extend_left(&lefts[i], psi.tensor(i), mpo.tensor(i));
        }
        // right-to-left
        for i in (0..n - 1).rev() {
            let (e, dw) = update_bond(&mut psi, mpo, &lefts[i], &rights[i + 2], i, false, cfg, noise, &mut rng, &mut diag)?;
            energy = e;
            discarded += dw;
            rights[i + 1] = extend_right(&rights[i + 2], psi.tensor(i + 1), mpo.tensor(i + 1));
        }
        diag.sweeps = sweep + 1;
        diag.sweep_energies.push(energy);
        diag.discarded_weight = discarded;
        diag.max_bond = diag.max_bond.max(psi.max_bond_dim());
        debug_assert!(psi.isometry_error() < 1e-8, "isometry lost: {}", psi.isometry_error());
        if noise == 0.0 && (prev - energy).abs() < cfg.energy_tol {
            diag.converged = true;
            break;
        }
        prev = energy;
        noise *= 0.1;
        if noise < 1e-14 {
            noise = 0.0;
        }
    }
    psi.normalize();
    Ok((psi, energy, diag))
}

#[allow(clippy::too_many_arguments)]
fn update_bond(
    psi: &mut Mps,
    mpo: &Mpo,
    left: &Tensor,
    right: &Tensor,
    i: usize,
    moving_right: bool,
    cfg: &DmrgConfig,
    noise: f64,
    rng: &mut ChaCha8Rng,
    diag: &mut DmrgDiagnostics,
) -> Result<(f64, f64)> {
    let a = psi.tensor(i);
    let b = psi.tensor(i + 1);
    let (dl, dr) = (a.dim(0), b.dim(2));
    let theta = a.contract(&[2], b, &[0]);
    let shape = theta.shape().to_vec();
    let dim = theta.len();
    let (w1, w2) = (mpo.tensor(i), mpo.tensor(i + 1));

    let outcome = lanczos_lowest(
        |x, y| {
            let t = Tensor::new(shape.clone(), x.to_vec());
            let r = apply_two_site(left, w1, w2, right, &t);
            y.copy_from_slice(r.data());
        },
        dim,
        theta.data(),
        cfg.local_eig_tol,
        cfg.local_max_iter,
    )?;
    if !outcome.converged {
        diag.local_unconverged += 1;
    }
    let mut vec = outcome.vector;
    if noise > 0.0 {
        vec.iter_mut().for_each(|x| *x += noise * rng.gen_range(-1.0..1.0));
        let nrm = vec.iter().map(|x| x * x).sum::<f64>().sqrt();
        vec.iter_mut().for_each(|x| *x /= nrm);
    }

    let m = DenseMatrix::new(dl * 2, 2 * dr, vec)?;
    let svd = svd_truncated(&m, cfg.svd_cutoff, cfg.max_bond)?;
    let r = svd.rank();
    let kept: f64 = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
    let s: Vec<f64> = svd.s.iter().map(|x| x / kept).collect();
    let tensors = psi.tensors_mut();
    if moving_right {
        tensors[i] = Tensor::new(vec![dl, 2, r], svd.u.into_data());
        let mut sv = svd.vt.into_data();
        for (k, row) in sv.chunks_mut(2 * dr).enumerate() {
            row.iter_mut().for_each(|x| *x *= s[k]);
        }
        tensors[i + 1] = Tensor::new(vec![r, 2, dr], sv);
        psi.set_center(i + 1);
    } else {
        let mut us = svd.u.into_data();
        for row in us.chunks_mut(r) {
            row.iter_mut().zip(&s).for_each(|(x, sk)| *x *= sk);
        }
        tensors[i] = Tensor::new(vec![dl, 2, r], us);
        tensors[i + 1] = Tensor::new(vec![r, 2, dr], svd.vt.into_data());
        psi.set_center(i);
    }
    Ok((outcome.value, svd.discarded_weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::ed_ground_state;
    use crate::model::HamiltonianSpec;
    use crate::mps::mpo_from_hamiltonian;

    fn all_up(n: usize) -> Mps {
        Mps::product(&vec![[1.0, 0.0]; n]).unwrap()
    }

    fn tilted(n: usize) -> Mps {
        Mps::product(&vec![[0.6, -0.8]; n]).unwrap()
    }

    #[test]
    fn classical_chain_all_down() {
        let h = HamiltonianSpec::uniform(10, 0.1, -1.0, 0.0);
        let (_, e, d) = dmrg_ground_state(&mpo_from_hamiltonian(&h), &tilted(10), &DmrgConfig::default()).unwrap();
        assert!((e + 2.75).abs() < 1e-10, "{e}");
        assert!(d.converged);
    }

    #[test]
    fn two_site_case() {
        let h = HamiltonianSpec::uniform(2, 0.1, -1.0, 0.0);
        let (_, e, _) = dmrg_ground_state(&mpo_from_hamiltonian(&h), &tilted(2), &DmrgConfig::default()).unwrap();
        assert!((e + 0.35).abs() < 1e-10);
    }

    #[test]
    fn matches_exact_diagonalization() {
        let h = HamiltonianSpec::uniform(10, 0.1, -1.0, 0.3);
        let (psi, e, d) = dmrg_ground_state(&mpo_from_hamiltonian(&h), &all_up(10), &DmrgConfig::default()).unwrap();
        let ed = ed_ground_state(&h).unwrap();
        assert!(((e - ed.energy) / ed.energy).abs() < 1e-9, "{e} vs {}", ed.energy);
        assert!(psi.isometry_error() < 1e-10);
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        // monotone up to solver slack
        assert!(d.sweep_energies.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn bond_dimension_capped() {
        let h = HamiltonianSpec::uniform(12, 0.0, 1.0, 0.7);
        let cfg = DmrgConfig { max_bond: 4, ..Default::default() };
        let (psi, _, d) = dmrg_ground_state(&mpo_from_hamiltonian(&h), &all_up(12), &cfg).unwrap();
        assert!(psi.max_bond_dim() <= 4);
        assert!(d.max_bond <= 4);
        assert!(d.discarded_weight > 0.0);
    }
}
