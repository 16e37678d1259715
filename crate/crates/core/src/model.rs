//! Physical model: cavity-coupled Ising chain parameters, pump-cavity coupling
//! profiles and the effective spin Hamiltonian obtained by replacing the cavity
//! operator with its mean amplitude.
//!
//! Units are ħ = 1 with every energy measured in units of |J|. Sites are
//! labelled `n = 1..=N` in all formulas; the storage vectors are 0-based, so
//! `amplitudes[i]` belongs to site `n = i + 1`. Shifting the label origin by one
//! would only exchange the two sublattices of the staggered pattern.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_sites: usize,
    pub omega0: f64,
    pub j_ising: f64,
    pub v_pump: f64,
    pub delta_c: f64,
    pub kappa: f64,
    pub phi: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_sites: 50,
            omega0: 0.1,
            j_ising: -1.0,
            v_pump: 0.0,
            delta_c: -10.0,
            kappa: 10.0,
            phi: 0.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::param("n_sites", format!("need at least 2 sites, got {}", self.n_sites)));
        }
        let finite = [
            ("omega0", self.omega0),
            ("j_ising", self.j_ising),
            ("v_pump", self.v_pump),
            ("delta_c", self.delta_c),
            ("kappa", self.kappa),
            ("phi", self.phi),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        if self.kappa <= 0.0 {
            return Err(Error::param("kappa", format!("must be > 0, got {}", self.kappa)));
        }
        if self.omega0 < 0.0 {
            return Err(Error::param("omega0", format!("must be >= 0, got {}", self.omega0)));
        }
        check_phi(self.phi)?;
        Ok(())
    }

    pub fn profile(&self) -> Result<CouplingProfile> {
        coupling_profile(self.phi, self.n_sites)
    }
}

/// Per-site pump-cavity overlap amplitudes `J^pc_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    pub amplitudes: Vec<f64>,
}

impl CouplingProfile {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Amplitude at the 1-based site label `n`.
    pub fn at(&self, n: usize) -> f64 {
        self.amplitudes[n - 1]
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if !phi.is_finite() {
        return Err(Error::param("phi", format!("must be finite, got {phi}")));
    }
    if !(-1e-12..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&phi) {
        return Err(Error::param("phi", format!("must lie in [0, pi/2], got {phi}")));
    }
    Ok(())
}

/// How `cos(pi * n * cos(phi))` is evaluated for integer `n`.
enum SecondFactor {
    /// `cos(phi) = 1/q` with `q` a positive integer: reduce `n` modulo `2q`
    /// exactly before touching floating point.
    Rational(u64),
    /// `cos(phi) = 0`.
    Zero,
    /// Generic angle: reduce `n cos(phi)` modulo 2 in floating point.
    Generic(f64),
}

impl SecondFactor {
    fn classify(phi: f64) -> Self {
        if phi == 0.0 {
            return SecondFactor::Rational(1);
        }
        if (phi - std::f64::consts::FRAC_PI_2).abs() < 1e-14 {
            return SecondFactor::Zero;
        }
        let c = phi.cos();
        let q = (1.0 / c).round();
        // Only accept the rational path when phi reproduces arccos(1/q) to
        // round-off; this covers every mode_count_angle output.
        if q >= 1.0 && q < 1e6 && ((1.0 / q).acos() - phi).abs() < 1e-12 {
            SecondFactor::Rational(q as u64)
        } else {
            SecondFactor::Generic(c)
        }
    }

    fn eval(&self, n: u64) -> f64 {
        match *self {
            SecondFactor::Zero => 1.0,
            SecondFactor::Rational(q) => {
                let k = n % (2 * q);
                if k == 0 {
                    1.0
                } else if k == q {
                    -1.0
                } else {
                    (std::f64::consts::PI * k as f64 / q as f64).cos()
                }
            }
            SecondFactor::Generic(c) => {
                let x = n as f64 * c;
                let r = x - 2.0 * (x / 2.0).floor();
                (std::f64::consts::PI * r).cos()
            }
        }
    }
}

/// `J^pc_n = cos(pi n) cos(pi n cos(phi))` for `n = 1..=n_sites`, with the first
/// factor taken as `(-1)^n` exactly.
pub fn coupling_profile(phi: f64, n_sites: usize) -> Result<CouplingProfile> {
    check_phi(phi)?;
    if n_sites == 0 {
        return Err(Error::param("n_sites", "must be at least 1"));
    }
    let second = SecondFactor::classify(phi.max(0.0));
    let amplitudes = (1..=n_sites as u64)
        .map(|n| {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sign * second.eval(n)
        })
        .collect();
    Ok(CouplingProfile { amplitudes })
}

/// Pump angle `arccos(1/(2M - 1))` that produces `M` distinct coupling
/// magnitudes along the chain.
pub fn mode_count_angle(m_modes: usize) -> Result<f64> {
    if m_modes < 1 {
        return Err(Error::param("m_modes", "must be at least 1"));
    }
    if m_modes == 1 {
        return Ok(0.0);
    }
    Ok((1.0 / (2 * m_modes - 1) as f64).acos())
}

/// The three-mode golden-ratio pattern, `arccos(1/5)`.
pub fn golden_angle() -> f64 {
    (0.2f64).acos()
}

/// Spin-chain Hamiltonian
/// `sum_n onsite_z[n] Sz_n + sum_b nn_zz[b] Sz_b Sz_{b+1} + sum_n onsite_x[n] Sx_n`
/// together with the c-number photon energy `constant_offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub onsite_z: Vec<f64>,
    pub nn_zz: Vec<f64>,
    pub onsite_x: Vec<f64>,
    pub constant_offset: f64,
}

impl HamiltonianSpec {
    pub fn n_sites(&self) -> usize {
        self.onsite_z.len()
    }

    /// Uniform chain with the given on-site longitudinal and transverse fields.
    pub fn uniform(n_sites: usize, omega0: f64, j: f64, hx: f64) -> Self {
        Self {
            onsite_z: vec![omega0; n_sites],
            nn_zz: vec![j; n_sites.saturating_sub(1)],
            onsite_x: vec![hx; n_sites],
            constant_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.onsite_z.len();
        if n < 2 {
            return Err(Error::Dimension(format!("need at least 2 sites, got {n}")));
        }
        if self.onsite_x.len() != n || self.nn_zz.len() != n - 1 {
            return Err(Error::Dimension(format!(
                "onsite_z {n}, onsite_x {}, nn_zz {} (expected {n}, {n}, {})",
                self.onsite_x.len(),
                self.nn_zz.len(),
                n - 1
            )));
        }
        Ok(())
    }

    /// Adds `eps * Sz` on site 1 to select one of two degenerate Néel states.
    pub fn with_pinning(mut self, eps: f64) -> Self {
        if let Some(z) = self.onsite_z.first_mut() {
            *z += eps;
        }
        self
    }

    /// Classical energy of a z-basis configuration; `down[i]` is true when
    /// site `i + 1` points down.
    pub fn diagonal_energy(&self, down: impl Fn(usize) -> bool) -> f64 {
        let sz = |i: usize| if down(i) { -0.5 } else { 0.5 };
        let onsite: f64 = self.onsite_z.iter().enumerate().map(|(i, w)| w * sz(i)).sum();
        let bonds: f64 = self.nn_zz.iter().enumerate().map(|(i, j)| j * sz(i) * sz(i + 1)).sum();
        onsite + bonds
    }
}

pub fn effective_spin_hamiltonian(
    params: &ModelParams,
    alpha: Complex64,
    profile: &CouplingProfile,
) -> Result<HamiltonianSpec> {
    let n = params.n_sites;
    if profile.len() != n {
        return Err(Error::Dimension(format!("profile has {} sites, model has {n}", profile.len())));
    }
    let scale = params.v_pump / (n as f64).sqrt() * 2.0 * alpha.re;
    Ok(HamiltonianSpec {
        onsite_z: vec![params.omega0; n],
        nn_zz: vec![params.j_ising; n - 1],
        onsite_x: profile.amplitudes.iter().map(|a| scale * a).collect(),
        constant_offset: -params.delta_c * alpha.norm_sqr(),
    })
}

/// Mean-field energy: spin ground energy (without the photon term) plus
/// `-delta_c |alpha|^2`.
pub fn total_energy(spin_ground_energy: f64, alpha: Complex64, delta_c: f64) -> f64 {
    spin_ground_energy - delta_c * alpha.norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn uniform_and_staggered_profiles() {
        assert_eq!(coupling_profile(0.0, 4).unwrap().amplitudes, vec![1.0; 4]);
        assert_eq!(coupling_profile(FRAC_PI_2, 4).unwrap().amplitudes, vec![-1.0, 1.0, -1.0, 1.0]);
        // large n stays exact
        let p = coupling_profile(FRAC_PI_2, 400).unwrap();
        assert!(p.amplitudes.iter().enumerate().all(|(i, a)| *a == if i % 2 == 0 { -1.0 } else { 1.0 }));
        let p = coupling_profile(0.0, 400).unwrap();
        assert!(p.amplitudes.iter().all(|a| *a == 1.0));
    }

    #[test]
    fn golden_profile_matches_golden_ratio_pattern() {
        let p = coupling_profile(golden_angle(), 5).unwrap();
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let want = [-g / 2.0, (g - 1.0) / 2.0, (g - 1.0) / 2.0, -g / 2.0, 1.0];
        for (a, w) in p.amplitudes.iter().zip(want) {
            assert!((a - w).abs() < 1e-12, "{a} vs {w}");
        }
        let rounded: Vec<f64> = p.amplitudes.iter().map(|a| (a * 1e6).round() / 1e6).collect();
        assert_eq!(rounded, vec![-0.809017, 0.309017, 0.309017, -0.809017, 1.0]);
    }

    #[test]
    fn profile_errors() {
        assert!(coupling_profile(f64::NAN, 4).is_err());
        assert!(coupling_profile(0.3, 0).is_err());
        assert!(coupling_profile(2.0, 4).is_err());
    }

    #[test]
    fn mode_angles() {
        assert_eq!(mode_count_angle(1).unwrap(), 0.0);
        assert!((mode_count_angle(3).unwrap() - 1.369438).abs() < 1e-6);
        assert!((mode_count_angle(3).unwrap() / std::f64::consts::PI - 0.4359).abs() < 1e-4);
        assert!((mode_count_angle(2).unwrap() - 1.230959).abs() < 1e-6);
        assert!(mode_count_angle(0).is_err());
    }

    /// Distinct non-zero |J^pc| values over one period, by enumeration.
    fn distinct_magnitudes(m: usize) -> usize {
        let q = 2 * m - 1;
        let p = coupling_profile(mode_count_angle(m).unwrap(), 2 * q).unwrap();
        let mut mags: Vec<f64> = p.amplitudes.iter().map(|a| a.abs()).filter(|a| *a > 1e-12).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mags.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        mags.len()
    }

    #[test]
    fn mode_count_matches_distinct_amplitudes() {
        for m in 1..=4 {
            assert_eq!(distinct_magnitudes(m), m, "M = {m}");
        }
    }

    #[test]
    fn profile_periodicity() {
        for m in 1..=4 {
            let q = 2 * m - 1;
            let p = coupling_profile(mode_count_angle(m).unwrap(), 8 * q).unwrap();
            for i in 0..p.len() - 2 * q {
                assert!((p.amplitudes[i] - p.amplitudes[i + 2 * q]).abs() < 1e-12);
            }
        }
        // golden pattern repeats every 5 sites
        let p = coupling_profile(golden_angle(), 50).unwrap();
        for i in 0..45 {
            assert!((p.amplitudes[i] - p.amplitudes[i + 5]).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_hamiltonian_examples() {
        let params = ModelParams { n_sites: 4, v_pump: 1.0, delta_c: -10.0, phi: FRAC_PI_2, ..Default::default() };
        let prof = params.profile().unwrap();
        let h = effective_spin_hamiltonian(&params, Complex64::new(-0.1, 0.05), &prof).unwrap();
        let want = [0.1, -0.1, 0.1, -0.1];
        for (a, w) in h.onsite_x.iter().zip(want) {
            assert!((a - w).abs() < 1e-15);
        }
        assert!((h.constant_offset - 0.125).abs() < 1e-15);
        assert_eq!(h.nn_zz, vec![-1.0; 3]);
        assert_eq!(h.onsite_z, vec![0.1; 4]);

        let h0 = effective_spin_hamiltonian(&params, Complex64::new(0.0, 0.0), &prof).unwrap();
        assert!(h0.onsite_x.iter().all(|x| *x == 0.0));
        assert_eq!(h0.constant_offset, 0.0);

        let hi = effective_spin_hamiltonian(&params, Complex64::new(0.0, 0.3), &prof).unwrap();
        assert!(hi.onsite_x.iter().all(|x| *x == 0.0));
        assert!((hi.constant_offset - 0.9).abs() < 1e-14);
    }

    #[test]
    fn imaginary_part_only_enters_offset() {
        let params = ModelParams { n_sites: 6, v_pump: 2.0, phi: golden_angle(), ..Default::default() };
        let prof = params.profile().unwrap();
        let a = effective_spin_hamiltonian(&params, Complex64::new(0.2, 0.0), &prof).unwrap();
        let b = effective_spin_hamiltonian(&params, Complex64::new(0.2, -0.7), &prof).unwrap();
        assert_eq!(a.onsite_x, b.onsite_x);
        assert_eq!(a.onsite_z, b.onsite_z);
        assert_ne!(a.constant_offset, b.constant_offset);
    }

    #[test]
    fn total_energy_examples() {
        assert_eq!(total_energy(-1.3, Complex64::new(0.0, 0.0), -10.0), -1.3);
        let e = total_energy(-1.0, Complex64::new(0.1, 0.0), -10.0);
        assert!((e + 0.9).abs() < 1e-15);
        let a = Complex64::new(0.3, -0.2);
        assert_eq!(total_energy(-2.0, a, -5.0), total_energy(-2.0, -a, -5.0));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::default().validate().is_ok());
        assert!(ModelParams { kappa: 0.0, ..Default::default() }.validate().is_err());
        assert!(ModelParams { n_sites: 1, ..Default::default() }.validate().is_err());
        assert!(ModelParams { omega0: -0.1, ..Default::default() }.validate().is_err());
    }
}
