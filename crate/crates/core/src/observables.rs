//! Order parameters of a converged ground state and the phase labels of the
//! cavity-coupled chain.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh_small, DenseMatrix};
use crate::ops::{SX, SY, SZ};
use crate::state::SpinState;

/// Largest tolerated imaginary residue of quantities that are real by
/// construction.
pub const IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wavevector {
    /// theta = 0
    Uniform,
    /// theta = pi
    Staggered,
}

/// `M_theta = sum_n cos(theta n) <S_n> / N` with sites labelled from 1.
pub fn magnetization(sv: &[f64], q: Wavevector) -> f64 {
    let n = sv.len() as f64;
    match q {
        Wavevector::Uniform => sv.iter().sum::<f64>() / n,
        Wavevector::Staggered => {
            sv.iter().enumerate().map(|(i, s)| if i % 2 == 0 { -s } else { *s }).sum::<f64>() / n
        }
    }
}

/// `c[nu][eta] = <S^nu_n S^eta_m>` for `nu, eta` in `x, y, z`.
pub type Correlators = [[Complex64; 3]; 3];

fn distinct(n: usize, m: usize) -> Result<()> {
    if n == m {
        return Err(Error::InvalidSites(format!("pair quantities need n != m, got {n} twice")));
    }
    Ok(())
}

/// Traceless bond nematic tensor
/// `Q^{nu eta}_{nm} = <S^nu_n S^eta_m + S^eta_n S^nu_m> / 2` for `nu != eta`.
pub fn nematic_tensor(n: usize, m: usize, c: &Correlators) -> Result<[[f64; 3]; 3]> {
    distinct(n, m)?;
    let mut q = [[0.0; 3]; 3];
    for nu in 0..3 {
        for eta in 0..3 {
            if nu == eta {
                continue;
            }
            let v = 0.5 * (c[nu][eta] + c[eta][nu]);
            if v.im.abs() > IMAG_TOL {
                return Err(Error::ImaginaryPart(v.im));
            }
            q[nu][eta] = v.re;
        }
    }
    Ok(q)
}

/// Largest eigenvalue of the bond nematic tensor.
pub fn bond_nematic(q: &[[f64; 3]; 3]) -> Result<f64> {
    let m = DenseMatrix::from_fn(3, 3, |i, j| q[i][j]);
    let (vals, _) = eigh_small(&m)?;
    Ok(vals[2])
}

/// `P_{nm} = <S^-_n S^-_m> = <S^x S^x - S^y S^y - i S^x S^y - i S^y S^x>`.
pub fn magnon_pair(n: usize, m: usize, c: &Correlators) -> Result<Complex64> {
    distinct(n, m)?;
    let i = Complex64::new(0.0, 1.0);
    Ok(c[0][0] - c[1][1] - i * c[0][1] - i * c[1][0])
}

/// Rows `Q^B_{n,m}` and `P_{n,m}` for one origin `n`; entry `m - 1`, with the
/// origin entry zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFields {
    pub origin: usize,
    pub qb: Vec<f64>,
    pub p: Vec<Complex64>,
}

/// Pair rows for the given origins. Ground states here are real, so `P` is
/// checked to be real.
pub fn pair_fields(psi: &impl SpinState, origins: &[usize]) -> Result<Vec<PairFields>> {
    let n_sites = psi.n_sites();
    let table = psi.pair_table(&[SX, SY, SZ], origins)?;
    let mut out = Vec::with_capacity(origins.len());
    for (o, &n) in origins.iter().enumerate() {
        let mut qb = vec![0.0; n_sites];
        let mut p = vec![Complex64::new(0.0, 0.0); n_sites];
        for m in 1..=n_sites {
            if m == n {
                continue;
            }
            let mut c = [[Complex64::new(0.0, 0.0); 3]; 3];
            for (a, row) in c.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = table.get(o, a, b, m);
                }
            }
            qb[m - 1] = bond_nematic(&nematic_tensor(n, m, &c)?)?;
            let pm = magnon_pair(n, m, &c)?;
            if pm.im.abs() > IMAG_TOL {
                return Err(Error::ImaginaryPart(pm.im));
            }
            p[m - 1] = pm;
        }
        out.push(PairFields { origin: n, qb, p });
    }
    Ok(out)
}

/// Origins `1, 1 + stride, ...`.
pub fn stride_origins(n_sites: usize, stride: usize) -> Vec<usize> {
    (1..=n_sites).step_by(stride.max(1)).collect()
}

/// `(Q~^B, P~)`: the double sums `sum_{n != m} Q^B_{nm} / N^2` and
/// `sum_{n != m} |P_{nm}| / N^2`. With `stride > 1` only every `stride`-th
/// origin is measured and the sum rescaled by `N / origins`.
pub fn pair_means(psi: &impl SpinState, stride: usize) -> Result<(f64, f64)> {
    let n = psi.n_sites();
    let origins = stride_origins(n, stride);
    let fields = pair_fields(psi, &origins)?;
    let scale = n as f64 / origins.len() as f64 / (n * n) as f64;
    let qb: f64 = fields.iter().flat_map(|f| f.qb.iter()).sum();
    let p: f64 = fields.iter().flat_map(|f| f.p.iter()).map(|v| v.norm()).sum();
    Ok((qb * scale, p * scale))
}

pub fn mean_bond_nematic(psi: &impl SpinState, stride: usize) -> Result<f64> {
    Ok(pair_means(psi, stride)?.0)
}

pub fn mean_magnon_pair(psi: &impl SpinState, stride: usize) -> Result<f64> {
    Ok(pair_means(psi, stride)?.1)
}

/// Pair rows around `origin`, by default the middle of the chain.
pub fn local_rows(psi: &impl SpinState, origin: Option<usize>) -> Result<PairFields> {
    let n = origin.unwrap_or(psi.n_sites().div_ceil(2));
    Ok(pair_fields(psi, &[n])?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    Unclassified,
}

impl Phase {
    pub const ALL: [Phase; 7] = [Phase::I, Phase::II, Phase::III, Phase::IV, Phase::V, Phase::VI, Phase::VII];

    pub fn is_superradiant(self) -> bool {
        !matches!(self, Phase::I | Phase::II | Phase::Unclassified)
    }

    pub fn description(self) -> &'static str {
        match self {
            Phase::I => "N-FM_z",
            Phase::II => "N-AFM_z",
            Phase::III => "SR-FM_x",
            Phase::IV => "SR-AFM_x",
            Phase::V => "SR-FM_x-Q^B",
            Phase::VI => "SR-AFM_x-Q^B",
            Phase::VII => "SR-FM_phi-Q^B",
            Phase::Unclassified => "unclassified",
        }
    }

    /// Expected signature over (|alpha|, M^z_0, M^x_0, M^z_pi, M^x_pi, Q~^B,
    /// P~); `None` marks entries that are only approximately zero and are
    /// not compared.
    fn signature(self) -> [Option<bool>; 7] {
        const T: Option<bool> = Some(true);
        const F: Option<bool> = Some(false);
        const W: Option<bool> = None;
        match self {
            Phase::I => [F, T, F, F, F, F, F],
            Phase::II => [F, F, F, T, F, F, F],
            Phase::III => [T, F, T, F, F, W, T],
            Phase::IV => [T, T, F, F, T, W, T],
            Phase::V => [T, F, T, F, F, T, T],
            Phase::VI => [T, F, F, F, T, T, T],
            Phase::VII => [T, T, T, W, W, T, T],
            Phase::Unclassified => [W; 7],
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::I => "I",
            Phase::II => "II",
            Phase::III => "III",
            Phase::IV => "IV",
            Phase::V => "V",
            Phase::VI => "VI",
            Phase::VII => "VII",
            Phase::Unclassified => "UNCLASSIFIED",
        };
        f.write_str(s)
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "I" => Phase::I,
            "II" => Phase::II,
            "III" => Phase::III,
            "IV" => Phase::IV,
            "V" => Phase::V,
            "VI" => Phase::VI,
            "VII" => Phase::VII,
            "UNCLASSIFIED" => Phase::Unclassified,
            other => return Err(Error::Config(format!("unknown phase label `{other}`"))),
        })
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-column zero thresholds for classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub alpha_abs: f64,
    pub m0z: f64,
    pub m0x: f64,
    pub mpiz: f64,
    pub mpix: f64,
    pub qb_mean: f64,
    pub p_mean: f64,
}

impl Thresholds {
    pub fn uniform(eps: f64) -> Self {
        Self { alpha_abs: eps, m0z: eps, m0x: eps, mpiz: eps, mpix: eps, qb_mean: eps, p_mean: eps }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha_abs, self.m0z, self.m0x, self.mpiz, self.mpix, self.qb_mean, self.p_mean];
        if all.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::param("thresholds", "every threshold must be positive and finite"));
        }
        Ok(())
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::uniform(1e-3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderParameterSet {
    pub alpha_abs: f64,
    pub m0x: f64,
    pub m0z: f64,
    pub mpix: f64,
    pub mpiz: f64,
    pub qb_mean: f64,
    pub p_mean: f64,
    pub s_half: f64,
    pub phase: Phase,
}

impl OrderParameterSet {
    fn signature(&self, t: &Thresholds) -> [bool; 7] {
        [
            self.alpha_abs.abs() >= t.alpha_abs,
            self.m0z.abs() >= t.m0z,
            self.m0x.abs() >= t.m0x,
            self.mpiz.abs() >= t.mpiz,
            self.mpix.abs() >= t.mpix,
            self.qb_mean.abs() >= t.qb_mean,
            self.p_mean.abs() >= t.p_mean,
        ]
    }
}

/// Measures every order parameter of `psi` at cavity amplitude `alpha`. The
/// phase is left [`Phase::Unclassified`]; see [`classify_phase`].
pub fn measure_order_parameters(psi: &impl SpinState, alpha: Complex64, stride: usize) -> Result<OrderParameterSet> {
    let sx: Vec<f64> = psi.expect_all_sites(&SX)?.iter().map(|c| c.re).collect();
    let sz: Vec<f64> = psi.expect_all_sites(&SZ)?.iter().map(|c| c.re).collect();
    let (qb_mean, p_mean) = pair_means(psi, stride)?;
    let n = psi.n_sites();
    Ok(OrderParameterSet {
        alpha_abs: alpha.norm(),
        m0x: magnetization(&sx, Wavevector::Uniform),
        m0z: magnetization(&sz, Wavevector::Uniform),
        mpix: magnetization(&sx, Wavevector::Staggered),
        mpiz: magnetization(&sz, Wavevector::Staggered),
        qb_mean,
        p_mean,
        s_half: psi.bipartite_entropy(n / 2)?,
        phase: Phase::Unclassified,
    })
}

/// Order in which equally distant rows are preferred: the normal phase
/// selected by the sign of J, and the superradiant rows of the mode family
/// of `phi` (uniform at 0, staggered at pi/2, mixed otherwise).
fn preference(alpha_on: bool, phi: f64, j_sign: f64) -> Vec<Phase> {
    use Phase::*;
    let normal = if j_sign > 0.0 { [II, I] } else { [I, II] };
    let sr = if phi.abs() < 1e-9 {
        [III, V, VII, IV, VI]
    } else if (phi - std::f64::consts::FRAC_PI_2).abs() < 1e-9 {
        [IV, VI, VII, III, V]
    } else {
        [VII, V, VI, III, IV]
    };
    if alpha_on {
        sr.iter().chain(&normal).copied().collect()
    } else {
        normal.iter().chain(&sr).copied().collect()
    }
}

/// Label of the table row nearest in Hamming distance to the thresholded
/// signature; distances above 2 give [`Phase::Unclassified`].
pub fn classify_phase(ops: &OrderParameterSet, thresholds: &Thresholds, phi: f64, j_sign: f64) -> Phase {
    let sig = ops.signature(thresholds);
    let distance = |p: Phase| {
        p.signature().iter().zip(&sig).filter(|(want, got)| want.is_some_and(|w| w != **got)).count()
    };
    let best = preference(sig[0], phi, j_sign)
        .into_iter()
        .min_by_key(|p| distance(*p))
        .expect("nonempty table");
    if distance(best) > 2 {
        Phase::Unclassified
    } else {
        best
    }
}

/// Site subsets of the five-site golden-mode unit cell, one entry per
/// complete block `k = 5 (b - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldenSubsets {
    /// Sites `{1 + k, 4 + k}`.
    pub r: Vec<Vec<usize>>,
    /// Sites `{2 + k, 3 + k}`.
    pub b: Vec<Vec<usize>>,
    /// Site `{5 + k}`.
    pub g: Vec<Vec<usize>>,
    /// Singlet pairs `{1 + k, 2 + k}`.
    pub pair_a: Vec<Vec<usize>>,
    /// Singlet pairs `{3 + k, 4 + k}`.
    pub pair_b: Vec<Vec<usize>>,
}

pub fn golden_subsets(n_sites: usize) -> GoldenSubsets {
    let blocks: Vec<usize> = (0..n_sites / 5).map(|b| 5 * b).collect();
    let mk = |offs: &[usize]| blocks.iter().map(|k| offs.iter().map(|o| o + k).collect()).collect();
    GoldenSubsets { r: mk(&[1, 4]), b: mk(&[2, 3]), g: mk(&[5]), pair_a: mk(&[1, 2]), pair_b: mk(&[3, 4]) }
}

/// Block-averaged subset entropies (nats) of the golden-mode subsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetEntropies {
    pub r: f64,
    pub b: f64,
    pub g: f64,
    pub pair_a: f64,
    pub pair_b: f64,
}

pub fn golden_subset_entropies(psi: &impl SpinState) -> Result<SubsetEntropies> {
    let s = golden_subsets(psi.n_sites());
    if s.g.is_empty() {
        return Err(Error::param("n_sites", "need at least one five-site block"));
    }
    let mean = |sets: &[Vec<usize>]| -> Result<f64> {
        let vals = sets.iter().map(|x| psi.subset_entropy(x)).collect::<Result<Vec<_>>>()?;
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(SubsetEntropies { r: mean(&s.r)?, b: mean(&s.b)?, g: mean(&s.g)?, pair_a: mean(&s.pair_a)?, pair_b: mean(&s.pair_b)? })
}
