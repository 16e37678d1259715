//! Light-matter self-consistency: alternate the cavity-field update with the
//! spin ground-state solve until the mean photon amplitude stops moving.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ed::{ed_ground_state, StateVector};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{effective_spin_hamiltonian, total_energy, CouplingProfile, HamiltonianSpec, ModelParams};
use crate::mps::{dmrg_ground_state, mpo_from_hamiltonian, DmrgConfig, DmrgDiagnostics, Mps};
use crate::ops::{LocalOp, SX};
use crate::state::{PairTable, SpinState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dmrg,
    Ed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScfConfig {
    pub alpha_tol: f64,
    pub max_iterations: usize,
    /// Weight of the new field in the damped update, in (0, 1].
    pub damping: f64,
    /// Number of previous steps used by Anderson mixing; 0 gives the plain
    /// damped iteration.
    pub anderson_depth: usize,
    /// Initial amplitudes; `None` selects [`default_seeds`].
    pub seeds: Option<Vec<Complex64>>,
    pub backend: Backend,
    /// Longitudinal field added on site 1 to select one of two degenerate
    /// Néel states. The pinned Hamiltonian is the one measured.
    pub pinning: f64,
    /// A branch stops once this many iterations pass without halving its
    /// residual; 0 disables the check.
    pub stall_iterations: usize,
}

impl Default for ScfConfig {
    fn default() -> Self {
        Self {
            alpha_tol: 1e-7,
            max_iterations: 200,
            damping: 0.5,
            anderson_depth: 3,
            seeds: None,
            backend: Backend::Dmrg,
            pinning: 1e-6,
            stall_iterations: 20,
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_tol > 0.0) || !self.alpha_tol.is_finite() {
            return Err(Error::param("scf.alpha_tol", format!("must be positive, got {}", self.alpha_tol)));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("scf.max_iterations", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::param("scf.damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        if !self.pinning.is_finite() {
            return Err(Error::param("scf.pinning", "must be finite"));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(Error::param("scf.seeds", "at least one seed required"));
            }
            if seeds.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
                return Err(Error::param("scf.seeds", "seeds must be finite"));
            }
        }
        Ok(())
    }
}

/// Ground state of the effective spin Hamiltonian in either representation.
#[derive(Clone, Debug)]
pub enum GroundState {
    Mps(Mps),
    Dense(StateVector),
}

impl GroundState {
    pub fn as_mps(&self) -> Option<&Mps> {
        match self {
            GroundState::Mps(m) => Some(m),
            GroundState::Dense(_) => None,
        }
    }
}

impl SpinState for GroundState {
    fn n_sites(&self) -> usize {
        match self {
            GroundState::Mps(m) => SpinState::n_sites(m),
            GroundState::Dense(v) => v.n_sites(),
        }
    }

    fn expect_one_site(&self, op: &LocalOp, n: usize) -> Result<Complex64> {
        match self {
            GroundState::Mps(m) => m.expect_one_site(op, n),
            GroundState::Dense(v) => v.expect_one_site(op, n),
        }
    }

    fn expect_all_sites(&self, op: &LocalOp) -> Result<Vec<Complex64>> {
        match self {
            GroundState::Mps(m) => m.expect_all_sites(op),
            GroundState::Dense(v) => v.expect_all_sites(op),
        }
    }

    fn expect_pair_row(&self, op_a: &LocalOp, op_b: &LocalOp, n: usize) -> Result<Vec<Complex64>> {
        match self {
            GroundState::Mps(m) => m.expect_pair_row(op_a, op_b, n),
            GroundState::Dense(v) => v.expect_pair_row(op_a, op_b, n),
        }
    }

    fn pair_table(&self, ops: &[LocalOp], origins: &[usize]) -> Result<PairTable> {
        match self {
            GroundState::Mps(m) => m.pair_table(ops, origins),
            GroundState::Dense(v) => v.pair_table(ops, origins),
        }
    }

    fn bipartite_entropy(&self, cut: usize) -> Result<f64> {
        match self {
            GroundState::Mps(m) => m.bipartite_entropy(cut),
            GroundState::Dense(v) => v.bipartite_entropy(cut),
        }
    }

    fn subset_rdm(&self, sites: &[usize]) -> Result<DenseMatrix> {
        match self {
            GroundState::Mps(m) => m.subset_rdm(sites),
            GroundState::Dense(v) => v.subset_rdm(sites),
        }
    }
}

/// Outcome of one seed's iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub seed: Complex64,
    pub alpha: Complex64,
    #[serde(with = "crate::nullable")]
    pub total_energy: f64,
    #[serde(with = "crate::nullable")]
    pub spin_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|F(alpha_k) - alpha_k|` for every solved iterate.
    pub residual_history: Vec<f64>,
    pub error: Option<String>,
}

impl Branch {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug)]
pub struct SolutionRecord {
    pub alpha: Complex64,
    pub total_energy: f64,
    pub spin_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed_used: Complex64,
    /// Position of the winning seed in [`SolutionRecord::branches`].
    pub seed_index: usize,
    pub ground_state: GroundState,
    pub residual_history: Vec<f64>,
    pub dmrg: Option<DmrgDiagnostics>,
    pub pinning: f64,
    pub branches: Vec<Branch>,
}

/// `alpha = V_p / ((delta_c + i kappa) sqrt(N)) * sum_n J_n <S^x_n>`.
pub fn cavity_field_update(
    profile: &CouplingProfile,
    sx: &[f64],
    v_pump: f64,
    delta_c: f64,
    kappa: f64,
    n_sites: usize,
) -> Result<Complex64> {
    if sx.len() != n_sites || profile.len() != n_sites {
        return Err(Error::Dimension(format!(
            "{} expectations and {} amplitudes for {n_sites} sites",
            sx.len(),
            profile.len()
        )));
    }
    let sum: f64 = profile.amplitudes.iter().zip(sx).map(|(j, s)| j * s).sum();
    Ok(Complex64::new(v_pump * sum / (n_sites as f64).sqrt(), 0.0) / Complex64::new(delta_c, kappa))
}

/// Zero plus the two amplitudes a fully polarized chain would produce, phase
/// locked to the closed form. At `V_p = 0` only the zero seed remains.
pub fn default_seeds(params: &ModelParams) -> Vec<Complex64> {
    let denom = Complex64::new(params.delta_c, params.kappa);
    let r = params.v_pump.abs() * (params.n_sites as f64).sqrt() / (2.0 * denom.norm());
    let phase = denom.conj() / denom.norm();
    if r == 0.0 {
        vec![Complex64::new(0.0, 0.0)]
    } else {
        vec![Complex64::new(0.0, 0.0), phase * r, -phase * r]
    }
}

/// Product state minimizing the classical energy of `h`, each spin pointing
/// against its local mean field in the x-z plane. Several starting patterns
/// are relaxed and the lowest kept.
pub fn mean_field_product(h: &HamiltonianSpec) -> Vec<[f64; 2]> {
    let n = h.n_sites();
    let energy = |theta: &[f64]| {
        let sz = |i: usize| 0.5 * theta[i].cos();
        let sx = |i: usize| 0.5 * theta[i].sin();
        let onsite: f64 = (0..n).map(|i| h.onsite_z[i] * sz(i) + h.onsite_x[i] * sx(i)).sum();
        onsite + (0..n - 1).map(|b| h.nn_zz[b] * sz(b) * sz(b + 1)).sum::<f64>()
    };
    let starts: [fn(usize) -> f64; 4] = [
        |_| std::f64::consts::PI,
        |_| 0.0,
        |i| if i % 2 == 0 { std::f64::consts::PI } else { 0.0 },
        |i| if i % 2 == 0 { 0.0 } else { std::f64::consts::PI },
    ];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let mut theta: Vec<f64> = (0..n).map(start).collect();
        for _ in 0..200 {
            let mut moved: f64 = 0.0;
            for i in 0..n {
                let mut bz = h.onsite_z[i];
                if i > 0 {
                    bz += h.nn_zz[i - 1] * 0.5 * theta[i - 1].cos();
                }
                if i + 1 < n {
                    bz += h.nn_zz[i] * 0.5 * theta[i + 1].cos();
                }
                let bx = h.onsite_x[i];
                if bx == 0.0 && bz == 0.0 {
                    continue;
                }
                let t = (-bx).atan2(-bz);
                moved = moved.max((t - theta[i]).abs());
                theta[i] = t;
            }
            if moved < 1e-12 {
                break;
            }
        }
        let e = energy(&theta);
        if best.as_ref().map_or(true, |(b, _)| e < *b - 1e-14) {
            best = Some((e, theta));
        }
    }
    let theta = best.expect("at least one start").1;
    theta.iter().map(|t| [(0.5 * t).cos(), (0.5 * t).sin()]).collect()
}

/// Anderson mixing on the real 2-vector `(Re alpha, Im alpha)`.
struct Mixer {
    depth: usize,
    beta: f64,
    xs: Vec<[f64; 2]>,
    gs: Vec<[f64; 2]>,
}

impl Mixer {
    fn new(depth: usize, beta: f64) -> Self {
        Self { depth, beta, xs: Vec::new(), gs: Vec::new() }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    fn next(&mut self, x: Complex64, fx: Complex64) -> Complex64 {
        let xv = [x.re, x.im];
        let g = [fx.re - x.re, fx.im - x.im];
        let plain = Complex64::new(xv[0] + self.beta * g[0], xv[1] + self.beta * g[1]);
        if self.depth == 0 {
            return plain;
        }
        self.xs.push(xv);
        self.gs.push(g);
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return plain;
        }
        let dg = DMatrix::from_fn(2, m, |r, c| self.gs[c + 1][r] - self.gs[c][r]);
        let dx = DMatrix::from_fn(2, m, |r, c| self.xs[c + 1][r] - self.xs[c][r]);
        let svd = dg.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return plain;
        }
        let Ok(gamma) = svd.solve(&DVector::from_row_slice(&g), 1e-10 * smax) else {
            return plain;
        };
        let step = (&dx + &dg * self.beta) * gamma;
        let out = Complex64::new(plain.re - step[0], plain.im - step[1]);
        if out.re.is_finite() && out.im.is_finite() {
            out
        } else {
            self.reset();
            plain
        }
    }
}

struct SpinSolve {
    state: GroundState,
    energy: f64,
    dmrg: Option<DmrgDiagnostics>,
}

fn solve_spins(h: &HamiltonianSpec, backend: Backend, dmrg: &DmrgConfig, warm: Option<&Mps>) -> Result<SpinSolve> {
    match backend {
        Backend::Ed => {
            let g = ed_ground_state(h)?;
            Ok(SpinSolve { state: GroundState::Dense(g.state), energy: g.energy, dmrg: None })
        }
        Backend::Dmrg => {
            let init = match warm {
                Some(m) => m.clone(),
                None => Mps::product(&mean_field_product(h))?,
            };
            let (psi, e, diag) = dmrg_ground_state(&mpo_from_hamiltonian(h), &init, dmrg)?;
            Ok(SpinSolve { state: GroundState::Mps(psi), energy: e, dmrg: Some(diag) })
        }
    }
}

fn sx_profile(state: &GroundState) -> Result<Vec<f64>> {
    Ok(state.expect_all_sites(&SX)?.into_iter().map(|c| c.re).collect())
}

struct BranchRun {
    branch: Branch,
    state: Option<GroundState>,
    dmrg: Option<DmrgDiagnostics>,
}

fn run_branch(
    params: &ModelParams,
    profile: &CouplingProfile,
    cfg: &ScfConfig,
    dmrg: &DmrgConfig,
    seed: Complex64,
    warm: Option<&Mps>,
) -> BranchRun {
    let mut branch = Branch {
        seed,
        alpha: seed,
        total_energy: f64::INFINITY,
        spin_energy: f64::INFINITY,
        iterations: 0,
        converged: false,
        residual_history: Vec::new(),
        error: None,
    };
    let mut mixer = Mixer::new(cfg.anderson_depth, cfg.damping);
    let mut alpha = seed;
    let mut prev: Option<Mps> = warm.cloned();
    let mut best: Option<(f64, Complex64, SpinSolve)> = None;
    let mut progress = (0, f64::INFINITY);
    for it in 0..cfg.max_iterations {
        let step = (|| -> Result<(SpinSolve, Complex64)> {
            let h = effective_spin_hamiltonian(params, alpha, profile)?.with_pinning(cfg.pinning);
            let solved = solve_spins(&h, cfg.backend, dmrg, prev.as_ref())?;
            let sx = sx_profile(&solved.state)?;
            let f = cavity_field_update(profile, &sx, params.v_pump, params.delta_c, params.kappa, params.n_sites)?;
            Ok((solved, f))
        })();
        let (solved, f) = match step {
            Ok(v) => v,
            Err(e) => {
                branch.error = Some(e.to_string());
                break;
            }
        };
        branch.iterations = it + 1;
        let residual = (f - alpha).norm();
        branch.residual_history.push(residual);
        if let GroundState::Mps(m) = &solved.state {
            prev = Some(m.clone());
        }
        let grew = branch.residual_history.len() > 1 && residual > branch.residual_history[branch.residual_history.len() - 2];
        let improves = best.as_ref().map_or(true, |(r, _, _)| residual < *r);
        let done = residual < cfg.alpha_tol;
        if improves || done {
            best = Some((residual, alpha, solved));
        }
        if residual < 0.5 * progress.1 {
            progress = (it, residual);
        }
        if done {
            branch.converged = true;
            break;
        }
        if cfg.stall_iterations > 0 && it - progress.0 >= cfg.stall_iterations {
            break;
        }
        // Anderson extrapolation can lock into a cycle near a threshold.
        if grew {
            mixer.reset();
        }
        alpha = mixer.next(alpha, f);
    }
    let Some((_, a, solved)) = best else {
        return BranchRun { branch, state: None, dmrg: None };
    };
    branch.alpha = a;
    branch.spin_energy = solved.energy;
    branch.total_energy = total_energy(solved.energy, a, params.delta_c);
    BranchRun { branch, state: Some(solved.state), dmrg: solved.dmrg }
}

/// Energies closer than this count as equal when choosing among branches.
pub const ENERGY_TIE_TOL: f64 = 1e-10;

/// Orders branches: converged first, then by total energy with ties broken
/// toward smaller `|alpha|` and then toward `Re alpha <= 0`.
fn better(a: &Branch, b: &Branch, alpha_tol: f64) -> bool {
    if a.converged != b.converged {
        return a.converged;
    }
    if !a.converged {
        return a.final_residual() < b.final_residual();
    }
    if (a.total_energy - b.total_energy).abs() >= ENERGY_TIE_TOL {
        return a.total_energy < b.total_energy;
    }
    let (ma, mb) = (a.alpha.norm(), b.alpha.norm());
    if (ma - mb).abs() > 10.0 * alpha_tol {
        return ma < mb;
    }
    a.alpha.re <= 0.0 && b.alpha.re > 0.0
}

/// Pump strength at which the normal phase becomes unstable for decoupled
/// spins (`J = 0`): linearizing `<S^x_n> = -h_n / (2 omega0)` in the field
/// update gives `V_pc^2 = omega0 (delta_c^2 + kappa^2) / (-delta_c mean(J_n^2))`.
pub fn analytic_threshold(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    if params.delta_c >= 0.0 {
        return Err(Error::param("delta_c", "a superradiant threshold needs delta_c < 0"));
    }
    let profile = params.profile()?;
    let weight = profile.amplitudes.iter().map(|j| j * j).sum::<f64>() / profile.len() as f64;
    if weight == 0.0 {
        return Err(Error::param("phi", "coupling profile vanishes on every site"));
    }
    let dc = params.delta_c;
    Ok((params.omega0 * (dc * dc + params.kappa * params.kappa) / (-dc * weight)).sqrt())
}

/// Bisects `v_pump` in `[lo, hi]` for the onset of `|alpha| > alpha_eps`,
/// stopping once the bracket is narrower than `rel_tol * hi`. The template's
/// own `v_pump` is ignored.
pub fn superradiant_onset(
    template: &ModelParams,
    cfg: &ScfConfig,
    dmrg: &DmrgConfig,
    (mut lo, mut hi): (f64, f64),
    alpha_eps: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(lo >= 0.0 && hi > lo && rel_tol > 0.0) {
        return Err(Error::param("bracket", format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    let ordered = |v: f64| -> Result<bool> {
        let p = ModelParams { v_pump: v, ..template.clone() };
        Ok(scf_solve(&p, cfg, dmrg)?.alpha.norm() > alpha_eps)
    };
    if ordered(lo)? || !ordered(hi)? {
        return Err(Error::param("bracket", format!("[{lo}, {hi}] does not bracket the onset")));
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if ordered(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Runs the fixed-point iteration from every seed and keeps the converged
/// solution of lowest total energy. When no seed converges the record with
/// the smallest final residual is returned with `converged = false`.
pub fn scf_solve(params: &ModelParams, cfg: &ScfConfig, dmrg: &DmrgConfig) -> Result<SolutionRecord> {
    scf_solve_from(params, cfg, dmrg, &[], None)
}

/// [`scf_solve`] with extra seeds appended after the configured ones. The
/// optional MPS warm-starts the extra seeds.
pub fn scf_solve_from(
    params: &ModelParams,
    cfg: &ScfConfig,
    dmrg: &DmrgConfig,
    extra_seeds: &[Complex64],
    warm: Option<&Mps>,
) -> Result<SolutionRecord> {
    params.validate()?;
    cfg.validate()?;
    if cfg.backend == Backend::Dmrg {
        dmrg.validate()?;
    }
    let profile = params.profile()?;
    let mut seeds = cfg.seeds.clone().unwrap_or_else(|| default_seeds(params));
    let n_base = seeds.len();
    for s in extra_seeds {
        if !seeds.iter().any(|t| (t - s).norm() < cfg.alpha_tol) {
            seeds.push(*s);
        }
    }
    let runs: Vec<BranchRun> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| run_branch(params, &profile, cfg, dmrg, s, if i >= n_base { warm } else { None }))
        .collect();
    let mut win: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if r.state.is_none() {
            continue;
        }
        if win.map_or(true, |w| better(&r.branch, &runs[w].branch, cfg.alpha_tol)) {
            win = Some(i);
        }
    }
    let Some(w) = win else {
        let msg = runs.iter().filter_map(|r| r.branch.error.clone()).next().unwrap_or_default();
        return Err(Error::SeedsFailed(msg));
    };
    let branches: Vec<Branch> = runs.iter().map(|r| r.branch.clone()).collect();
    let mut runs = runs;
    let winner = runs.swap_remove(w);
    let b = winner.branch;
    Ok(SolutionRecord {
        alpha: b.alpha,
        total_energy: b.total_energy,
        spin_energy: b.spin_energy,
        iterations: b.iterations,
        converged: b.converged,
        seed_used: b.seed,
        seed_index: w,
        ground_state: winner.state.expect("winner has a state"),
        residual_history: b.residual_history,
        dmrg: winner.dmrg,
        pinning: cfg.pinning,
        branches,
    })
}
