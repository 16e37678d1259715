use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dicke_ising::model::{coupling_profile, mode_count_angle, ModelParams};
use dicke_ising::observables::{
    classify_phase, golden_subset_entropies, local_rows, measure_order_parameters, Thresholds,
};
use dicke_ising::scf::{scf_solve, Backend};
use dicke_ising::sweep::{self, parse_phi_token, SweepConfig};
use dicke_ising::verify;
use dicke_ising::Error;

/// Self-consistent cavity-field DMRG for Ising chains in a pumped cavity.
#[derive(Parser)]
#[command(name = "dicke-ising", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DICKE_ISING_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one (delta_c, v_pump) point and print order parameters as JSON.
    Solve(SolveArgs),
    /// Run a grid sweep described by a config file.
    Sweep(SweepArgs),
    /// Print the pump-cavity coupling J_n for each site.
    Profile(ProfileArgs),
    /// Check DMRG against exact diagonalization and the analytic threshold.
    Verify(VerifyArgs),
    /// Re-label an existing rows.csv with new zero thresholds.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct AngleArgs {
    /// Pump angle: radians, `golden`, `pi`, or `pi/<k>`.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<String>,
    /// Pump angle producing M coupling modes, arccos(1/(2M-1)).
    #[arg(long, conflicts_with = "phi")]
    m_modes: Option<usize>,
}

impl AngleArgs {
    fn radians(&self) -> Result<Option<f64>, Error> {
        match (&self.phi, self.m_modes) {
            (Some(p), _) => parse_phi_token(p).map(Some),
            (None, Some(m)) => mode_count_angle(m).map(Some),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Sweep config supplying defaults; the first grid value of each axis is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of spins N (default 50).
    #[arg(long)]
    sites: Option<usize>,
    /// Ising coupling J (default -1).
    #[arg(long, allow_hyphen_values = true)]
    j_ising: Option<f64>,
    /// Cavity detuning (default -10).
    #[arg(long, allow_hyphen_values = true)]
    delta_c: Option<f64>,
    /// Pump strength (default 0).
    #[arg(long)]
    v_pump: Option<f64>,
    /// Longitudinal field (default 0.1).
    #[arg(long)]
    omega0: Option<f64>,
    /// Cavity loss rate (default 10).
    #[arg(long)]
    kappa: Option<f64>,
    #[command(flatten)]
    angle: AngleArgs,
    /// Spin solver.
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// DMRG bond dimension limit.
    #[arg(long)]
    max_bond: Option<usize>,
    /// Origin stride of the pair double sums.
    #[arg(long)]
    stride: Option<usize>,
    /// DMRG random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Uniform zero threshold for classification.
    #[arg(long)]
    eps: Option<f64>,
    /// Also print the Q^B and P rows around this origin site.
    #[arg(long)]
    local_rows: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep description.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out_dir` in the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// DMRG random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    angle: AngleArgs,
    /// Number of sites to print.
    #[arg(long, default_value_t = 10)]
    sites: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Chain length of the ED comparison (at most 12).
    #[arg(long, default_value_t = 10)]
    sites: usize,
    /// Random parameter sets for the ED comparison.
    #[arg(long, default_value_t = 20)]
    sets: usize,
    /// Seed of the random parameter sets.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Sweep config for the residual spot check.
    #[arg(long, requires = "rows")]
    config: Option<PathBuf>,
    /// rows.csv of a finished sweep to spot-check.
    #[arg(long, requires = "config")]
    rows: Option<PathBuf>,
    /// Converged rows to re-solve.
    #[arg(long, default_value_t = 5)]
    sample: usize,
    /// Residual tolerance of the spot check.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct ClassifyArgs {
    /// rows.csv written by `sweep`.
    #[arg(long)]
    rows: PathBuf,
    /// Uniform zero threshold for every column.
    #[arg(long)]
    eps: Option<f64>,
    /// TOML file with per-column thresholds.
    #[arg(long, conflicts_with = "eps")]
    thresholds: Option<PathBuf>,
    /// Output path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end(), 2),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail("usage", "--threads must be at least 1", 2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("runtime", &e.to_string(), 1);
        }
    }
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => run_sweep(a, cli.threads),
        Command::Profile(a) => profile(a),
        Command::Verify(a) => run_verify(a),
        Command::Classify(a) => classify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => fail("verification", "one or more checks failed", 1),
        Err(e) => {
            let kind = match e {
                Error::Config(_) | Error::InvalidParameter { .. } => "config",
                Error::Io { .. } | Error::Csv(_) | Error::Json(_) => "io",
                _ => "solver",
            };
            fail(kind, &e.to_string(), 1)
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out).map_err(|e| Error::io("stdout", e))
}

fn solve(a: SolveArgs) -> Result<bool, Error> {
    let base = match &a.config {
        Some(p) => Some(sweep::parse_config(p)?),
        None => None,
    };
    let d = ModelParams::default();
    let mut params = match &base {
        Some(c) => c.params(c.phi[0], c.j_ising[0], c.delta_c[0], c.v_pump[0]),
        None => d.clone(),
    };
    let mut scf = base.as_ref().map(|c| c.scf.clone()).unwrap_or_default();
    let mut dmrg = base.as_ref().map(|c| c.dmrg.clone()).unwrap_or_default();
    let mut thresholds = base.as_ref().map(|c| c.thresholds.clone()).unwrap_or_default();
    let mut stride = base.as_ref().map_or(1, |c| c.stride);
    params.n_sites = a.sites.unwrap_or(params.n_sites);
    params.j_ising = a.j_ising.unwrap_or(params.j_ising);
    params.delta_c = a.delta_c.unwrap_or(params.delta_c);
    params.v_pump = a.v_pump.unwrap_or(params.v_pump);
    params.omega0 = a.omega0.unwrap_or(params.omega0);
    params.kappa = a.kappa.unwrap_or(params.kappa);
    params.phi = a.angle.radians()?.unwrap_or(params.phi);
    scf.backend = a.backend.unwrap_or(scf.backend);
    dmrg.max_bond = a.max_bond.unwrap_or(dmrg.max_bond);
    dmrg.seed = a.seed.unwrap_or(dmrg.seed);
    stride = a.stride.unwrap_or(stride).max(1);
    if let Some(eps) = a.eps {
        thresholds = Thresholds::uniform(eps);
    }
    thresholds.validate()?;
    let rec = scf_solve(&params, &scf, &dmrg)?;
    let mut ops = measure_order_parameters(&rec.ground_state, rec.alpha, stride)?;
    ops.phase = classify_phase(&ops, &thresholds, params.phi, params.j_ising);
    let golden = (params.phi - dicke_ising::model::golden_angle()).abs() < 1e-12 && params.n_sites >= 5;
    let entropies = if golden { Some(golden_subset_entropies(&rec.ground_state)?) } else { None };
    let rows = match a.local_rows {
        Some(o) => Some(local_rows(&rec.ground_state, Some(o))?),
        None => None,
    };
    print_json(&json!({
        "params": params,
        "alpha": [rec.alpha.re, rec.alpha.im],
        "order_parameters": ops,
        "phase_description": ops.phase.description(),
        "total_energy": rec.total_energy,
        "converged": rec.converged,
        "iterations": rec.iterations,
        "seed_used": [rec.seed_used.re, rec.seed_used.im],
        "residual_history": rec.residual_history,
        "branches": rec.branches,
        "dmrg": rec.dmrg,
        "pinning": rec.pinning,
        "stride": stride,
        "subset_entropies": entropies,
        "local_rows": rows,
    }))?;
    Ok(true)
}

fn run_sweep(a: SweepArgs, threads: Option<usize>) -> Result<bool, Error> {
    let mut cfg: SweepConfig = sweep::parse_config(&a.config)?;
    if let Some(dir) = a.out_dir {
        cfg.out_dir = dir;
    }
    if let Some(seed) = a.seed {
        cfg.dmrg.seed = seed;
    }
    if let Some(n) = threads {
        cfg.workers = n;
    }
    let out = sweep::run_sweep(&cfg)?;
    let unconverged = out.rows().filter(|r| !r.converged).count();
    print_json(&json!({
        "out_dir": cfg.out_dir,
        "points": out.points.len(),
        "unconverged": unconverged,
    }))?;
    Ok(true)
}

fn profile(a: ProfileArgs) -> Result<bool, Error> {
    let phi = a.angle.radians()?.unwrap_or(0.0);
    let prof = coupling_profile(phi, a.sites)?;
    let mut out = std::io::stdout().lock();
    for (i, j) in prof.amplitudes.iter().enumerate() {
        writeln!(out, "{} {}", i + 1, j).map_err(|e| Error::io("stdout", e))?;
    }
    Ok(true)
}

fn run_verify(a: VerifyArgs) -> Result<bool, Error> {
    if a.sites > 12 {
        return Err(Error::param("sites", "the ED comparison runs at N <= 12"));
    }
    let mut checks = verify::ed_vs_dmrg(a.sets, a.sites, a.seed)?;
    checks.push(verify::threshold_line(a.sites, Backend::Ed)?);
    if let (Some(cfg), Some(rows)) = (&a.config, &a.rows) {
        let cfg = sweep::parse_config(cfg)?;
        let rows = sweep::read_rows_csv(rows)?;
        checks.extend(verify::residual_spot_check(&cfg, &rows, a.sample, a.tol)?);
    }
    let mut out = std::io::stdout().lock();
    for c in &checks {
        writeln!(out, "{c}").map_err(|e| Error::io("stdout", e))?;
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn classify(a: ClassifyArgs) -> Result<bool, Error> {
    let thresholds = match (&a.thresholds, a.eps) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<Thresholds>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        (None, Some(eps)) => Thresholds::uniform(eps),
        (None, None) => Thresholds::default(),
    };
    let mut rows = sweep::read_rows_csv(&a.rows)?;
    sweep::reclassify(&mut rows, &thresholds)?;
    match &a.output {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            sweep::write_rows_csv(&rows, std::io::BufWriter::new(f))?;
        }
        None => sweep::write_rows_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(true)
}
