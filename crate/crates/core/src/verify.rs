//! Self-checks behind the `verify` subcommand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ed::ed_ground_state;
use crate::error::Result;
use crate::model::{effective_spin_hamiltonian, golden_angle, ModelParams};
use crate::mps::{dmrg_ground_state, mpo_from_hamiltonian, DmrgConfig, Mps};
use crate::ops::{SX, SZ};
use crate::scf::{analytic_threshold, cavity_field_update, mean_field_product, superradiant_onset, Backend, ScfConfig};
use crate::state::SpinState;
use crate::sweep::{SweepConfig, SweepRow};

/// ED levels closer than this count as degenerate for the observable check.
pub const OBSERVABLE_GAP_TOL: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// DMRG against exact diagonalization on random effective Hamiltonians with
/// `J = +-1`, `omega0 = 0.1` and a fixed random amplitude. Energies must agree
/// to `1e-9` relative; `<S^x_n>` and `<S^z_n>` to `1e-7` unless the ED gap is
/// below [`OBSERVABLE_GAP_TOL`].
pub fn ed_vs_dmrg(n_sets: usize, n_sites: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phis = [0.0, std::f64::consts::FRAC_PI_2, golden_angle()];
    // A symmetry-broken start without noise can settle on the upper member of
    // a quasi-degenerate doublet.
    let dmrg = DmrgConfig { max_bond: 1 << n_sites.div_ceil(2), noise: 1e-5, energy_tol: 1e-12, ..Default::default() };
    let mut out = Vec::with_capacity(n_sets);
    for k in 0..n_sets {
        let params = ModelParams {
            n_sites,
            omega0: 0.1,
            j_ising: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            v_pump: rng.gen_range(0.5..8.0),
            delta_c: rng.gen_range(-20.0..-1.0),
            kappa: 10.0,
            phi: phis[rng.gen_range(0..phis.len())],
        };
        let alpha = Complex64::from_polar(rng.gen_range(0.05..1.5), rng.gen_range(0.0..std::f64::consts::TAU));
        let h = effective_spin_hamiltonian(&params, alpha, &params.profile()?)?;
        let ed = ed_ground_state(&h)?;
        let init = random_start(n_sites, dmrg.max_bond, &mut rng)?;
        let (psi, e, _) = dmrg_ground_state(&mpo_from_hamiltonian(&h), &init, &dmrg)?;
        let rel = (e - ed.energy).abs() / ed.energy.abs();
        let mut passed = rel < 1e-9;
        let mut detail = format!("J={:+} |dE|/|E|={rel:.1e} gap={:.1e}", params.j_ising, ed.gap);
        if ed.gap >= OBSERVABLE_GAP_TOL {
            let mut worst: f64 = 0.0;
            for op in [SX, SZ] {
                let a = ed.state.expect_all_sites(&op)?;
                let b = psi.expect_all_sites(&op)?;
                worst = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(worst, f64::max);
            }
            passed &= worst < 1e-7;
            detail.push_str(&format!(" max|d<S>|={worst:.1e}"));
        } else {
            detail.push_str(" (degenerate: energy only)");
        }
        out.push(Check { name: format!("ed-vs-dmrg #{}", k + 1), passed, detail });
    }
    Ok(out)
}

/// Normalized MPS from a random dense vector.
pub fn random_start(n_sites: usize, max_bond: usize, rng: &mut impl Rng) -> Result<Mps> {
    let mut v: Vec<f64> = (0..1usize << n_sites).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Mps::from_state_vector(&v, n_sites, 0.0, max_bond)
}

/// Bisects the `J = 0` onset and compares it with the analytic threshold to
/// 1%.
pub fn threshold_line(n_sites: usize, backend: Backend) -> Result<Check> {
    let params = ModelParams { n_sites, j_ising: 0.0, ..Default::default() };
    let want = analytic_threshold(&params)?;
    let cfg = ScfConfig { backend, ..Default::default() };
    let dmrg = DmrgConfig { max_bond: 16, ..Default::default() };
    let got = superradiant_onset(&params, &cfg, &dmrg, (0.5 * want, 2.0 * want), 1e-4, 1e-3)?;
    let rel = (got / want - 1.0).abs();
    Ok(Check {
        name: "analytic threshold".into(),
        passed: rel < 1e-2,
        detail: format!("onset {got:.5} vs {want:.5} (rel {rel:.1e}, N={n_sites})"),
    })
}

/// Re-solves the spins at the stored amplitude of up to `sample` converged
/// rows, evenly spread, and checks `|F(alpha) - alpha| < tol`.
pub fn residual_spot_check(cfg: &SweepConfig, rows: &[SweepRow], sample: usize, tol: f64) -> Result<Vec<Check>> {
    let converged: Vec<&SweepRow> = rows.iter().filter(|r| r.converged).collect();
    let step = converged.len().div_ceil(sample.max(1)).max(1);
    let mut out = Vec::new();
    for r in converged.iter().step_by(step) {
        let params = cfg.params(r.phi, r.j_ising, r.delta_c, r.v_pump);
        let alpha = r.alpha();
        let f = fixed_point_map(&params, alpha, cfg)?;
        let res = (f - alpha).norm();
        out.push(Check {
            name: format!("residual phi={:.4} J={} dc={} vp={}", r.phi, r.j_ising, r.delta_c, r.v_pump),
            passed: res < tol,
            detail: format!("|F(a)-a|={res:.1e}"),
        });
    }
    Ok(out)
}

/// One application of the self-consistency map from a cold start.
pub fn fixed_point_map(params: &ModelParams, alpha: Complex64, cfg: &SweepConfig) -> Result<Complex64> {
    let profile = params.profile()?;
    let h = effective_spin_hamiltonian(params, alpha, &profile)?.with_pinning(cfg.scf.pinning);
    let sx: Vec<f64> = match cfg.scf.backend {
        Backend::Ed => ed_ground_state(&h)?.state.expect_all_sites(&SX)?,
        Backend::Dmrg => {
            let init = Mps::product(&mean_field_product(&h))?;
            dmrg_ground_state(&mpo_from_hamiltonian(&h), &init, &cfg.dmrg)?.0.expect_all_sites(&SX)?
        }
    }
    .into_iter()
    .map(|c| c.re)
    .collect();
    cavity_field_update(&profile, &sx, params.v_pump, params.delta_c, params.kappa, params.n_sites)
}
