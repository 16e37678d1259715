//! Grid sweeps over `(phi, J, delta_c, v_pump)`.
//!
//! Each `(phi, J, delta_c)` triple is one job that walks its `v_pump` column in
//! ascending order, seeding every point with the previous winner's amplitude
//! and MPS. Jobs run on a worker pool; finished points go to a single writer
//! thread that appends them to `points.partial.jsonl` and `rows.partial.csv`.
//! A rerun in the same directory resumes from those files, and
//! [`finalize`] writes the sorted outputs.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{golden_angle, mode_count_angle, ModelParams};
use crate::mps::{DmrgConfig, DmrgDiagnostics, Mps};
use crate::observables::{
    classify_phase, golden_subset_entropies, local_rows, measure_order_parameters, PairFields, Phase, SubsetEntropies,
    Thresholds,
};
use crate::scf::{scf_solve_from, Backend, Branch, ScfConfig};

pub const PARTIAL_JSONL: &str = "points.partial.jsonl";
pub const PARTIAL_CSV: &str = "rows.partial.csv";
pub const ROWS_CSV: &str = "rows.csv";
pub const POINTS_JSON: &str = "points.json";
pub const LOCAL_ROWS_CSV: &str = "local_rows.csv";
pub const HEATMAP_DIR: &str = "heatmaps";
const CHECKPOINT_DIR: &str = "checkpoints";

/// Keys that must appear in every config file.
pub const REQUIRED_KEYS: [&str; 4] = ["n_sites", "j_ising", "delta_c", "v_pump"];

/// Observables written as heatmaps.
pub const HEATMAP_COLUMNS: [&str; 9] =
    ["alpha_abs", "m0x", "m0z", "mpix", "mpiz", "qb_mean", "p_mean", "s_half", "phase_label"];

/// A grid axis: a single value, an explicit list, or `count` evenly spaced
/// points from `min` to `max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Value(f64),
    List(Vec<f64>),
    Range { min: f64, max: f64, count: usize },
}

impl Grid {
    /// Sorted, deduplicated grid points.
    pub fn points(&self, key: &str) -> Result<Vec<f64>> {
        let mut v = match self {
            Grid::Value(x) => vec![*x],
            Grid::List(xs) => xs.clone(),
            Grid::Range { min, max, count } => {
                if *count == 0 {
                    return Err(Error::Config(format!("`{key}`: count must be at least 1")));
                }
                if *count == 1 {
                    vec![*min]
                } else {
                    if max < min {
                        return Err(Error::Config(format!("`{key}`: max {max} is below min {min}")));
                    }
                    let step = (max - min) / (*count - 1) as f64;
                    (0..*count).map(|i| if i + 1 == *count { *max } else { min + step * i as f64 }).collect()
                }
            }
        };
        if v.is_empty() {
            return Err(Error::Config(format!("`{key}`: grid is empty")));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("`{key}`: non-finite grid value {x}")));
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiSpec {
    Angle(f64),
    Token(String),
}

impl PhiSpec {
    /// Radians. Tokens: `golden`, `pi`, `pi/<k>`, `m-modes=<M>`.
    pub fn radians(&self) -> Result<f64> {
        match self {
            PhiSpec::Angle(x) => Ok(*x),
            PhiSpec::Token(t) => parse_phi_token(t),
        }
    }
}

pub fn parse_phi_token(t: &str) -> Result<f64> {
    let t = t.trim();
    let bad = || Error::Config(format!("`phi`: cannot read angle `{t}`"));
    if t == "golden" {
        return Ok(golden_angle());
    }
    if t == "pi" {
        return Ok(std::f64::consts::PI);
    }
    if let Some(k) = t.strip_prefix("pi/") {
        let k: f64 = k.trim().parse().map_err(|_| bad())?;
        return Ok(std::f64::consts::PI / k);
    }
    if let Some(m) = t.strip_prefix("m-modes=") {
        let m: usize = m.trim().parse().map_err(|_| bad())?;
        return mode_count_angle(m);
    }
    t.parse().map_err(|_| bad())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitConfig {
    pub csv: bool,
    pub json: bool,
    pub heatmap: bool,
    /// Write `Q^B` and `P` rows around one origin for every point.
    pub local_rows: bool,
    /// Origin of the local rows; the middle of the chain when absent.
    pub local_rows_origin: Option<usize>,
    /// Store measured wall times. Off by default so reruns are byte-identical.
    pub record_timing: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self { csv: true, json: true, heatmap: true, local_rows: false, local_rows_origin: None, record_timing: false }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_sites: Option<usize>,
    j_ising: Option<OneOrMany<f64>>,
    delta_c: Option<Grid>,
    v_pump: Option<Grid>,
    phi: Option<OneOrMany<PhiSpec>>,
    omega0: Option<f64>,
    kappa: Option<f64>,
    stride: Option<usize>,
    workers: Option<usize>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    thresholds: Option<Thresholds>,
    emit: Option<EmitConfig>,
    scf: Option<ScfConfig>,
    dmrg: Option<DmrgConfig>,
}

/// A validated sweep description with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_sites: usize,
    pub omega0: f64,
    pub kappa: f64,
    pub phi: Vec<f64>,
    pub j_ising: Vec<f64>,
    pub delta_c: Vec<f64>,
    pub v_pump: Vec<f64>,
    /// Origin stride of the pair double sums.
    pub stride: usize,
    /// Worker threads; 0 uses the pool default.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub thresholds: Thresholds,
    pub emit: EmitConfig,
    pub scf: ScfConfig,
    pub dmrg: DmrgConfig,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<SweepConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn parse_config_str(text: &str) -> Result<SweepConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let mut missing = Vec::new();
    if raw.n_sites.is_none() {
        missing.push("n_sites");
    }
    if raw.j_ising.is_none() {
        missing.push("j_ising");
    }
    if raw.delta_c.is_none() {
        missing.push("delta_c");
    }
    if raw.v_pump.is_none() {
        missing.push("v_pump");
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
    }
    let defaults = ModelParams::default();
    let mut dmrg = raw.dmrg.unwrap_or_default();
    if let Some(seed) = raw.seed {
        dmrg.seed = seed;
    }
    let mut j_ising = raw.j_ising.unwrap().into_vec();
    j_ising.sort_by(f64::total_cmp);
    j_ising.dedup();
    let mut phi = raw
        .phi
        .map(OneOrMany::into_vec)
        .unwrap_or_else(|| vec![PhiSpec::Angle(0.0)])
        .iter()
        .map(PhiSpec::radians)
        .collect::<Result<Vec<_>>>()?;
    phi.sort_by(f64::total_cmp);
    phi.dedup();
    let cfg = SweepConfig {
        n_sites: raw.n_sites.unwrap(),
        omega0: raw.omega0.unwrap_or(defaults.omega0),
        kappa: raw.kappa.unwrap_or(defaults.kappa),
        phi,
        j_ising,
        delta_c: raw.delta_c.unwrap().points("delta_c")?,
        v_pump: raw.v_pump.unwrap().points("v_pump")?,
        stride: raw.stride.unwrap_or(1),
        workers: raw.workers.unwrap_or(0),
        out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("sweep-out")),
        thresholds: raw.thresholds.unwrap_or_default(),
        emit: raw.emit.unwrap_or_default(),
        scf: raw.scf.unwrap_or_default(),
        dmrg,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.phi.is_empty() || self.j_ising.is_empty() || self.delta_c.is_empty() || self.v_pump.is_empty() {
            return cfg_err("every grid needs at least one value".into());
        }
        if self.stride == 0 {
            return cfg_err("`stride` must be at least 1".into());
        }
        if self.v_pump.iter().any(|v| *v < 0.0) {
            return cfg_err("`v_pump` values must be >= 0".into());
        }
        if let Some(o) = self.emit.local_rows_origin {
            if o == 0 || o > self.n_sites {
                return cfg_err(format!("`emit.local_rows_origin` {o} outside 1..={}", self.n_sites));
            }
        }
        for &phi in &self.phi {
            for &j in &self.j_ising {
                for &dc in &self.delta_c {
                    self.params(phi, j, dc, self.v_pump[0]).validate()?;
                }
            }
        }
        self.thresholds.validate()?;
        self.scf.validate()?;
        self.dmrg.validate()
    }

    pub fn params(&self, phi: f64, j_ising: f64, delta_c: f64, v_pump: f64) -> ModelParams {
        ModelParams { n_sites: self.n_sites, omega0: self.omega0, j_ising, v_pump, delta_c, kappa: self.kappa, phi }
    }

    pub fn point_count(&self) -> usize {
        self.phi.len() * self.j_ising.len() * self.delta_c.len() * self.v_pump.len()
    }

    fn lines(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for p in 0..self.phi.len() {
            for j in 0..self.j_ising.len() {
                for d in 0..self.delta_c.len() {
                    out.push([p, j, d]);
                }
            }
        }
        out
    }
}

/// One CSV row. Field order is the CSV header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub phi: f64,
    pub j_ising: f64,
    pub delta_c: f64,
    pub v_pump: f64,
    #[serde(with = "crate::nullable")]
    pub alpha_re: f64,
    #[serde(with = "crate::nullable")]
    pub alpha_im: f64,
    #[serde(with = "crate::nullable")]
    pub alpha_abs: f64,
    #[serde(with = "crate::nullable")]
    pub m0x: f64,
    #[serde(with = "crate::nullable")]
    pub m0z: f64,
    #[serde(with = "crate::nullable")]
    pub mpix: f64,
    #[serde(with = "crate::nullable")]
    pub mpiz: f64,
    #[serde(with = "crate::nullable")]
    pub qb_mean: f64,
    #[serde(with = "crate::nullable")]
    pub p_mean: f64,
    #[serde(with = "crate::nullable")]
    pub s_half: f64,
    pub phase_label: Phase,
    pub scf_iterations: usize,
    pub converged: bool,
    pub dmrg_max_bond: usize,
    #[serde(with = "crate::nullable")]
    pub discarded_weight: f64,
    pub wall_time_ms: u64,
    pub seed_winner: String,
}

pub const CSV_HEADER: &str = "phi,j_ising,delta_c,v_pump,alpha_re,alpha_im,alpha_abs,m0x,m0z,mpix,mpiz,qb_mean,p_mean,\
s_half,phase_label,scf_iterations,converged,dmrg_max_bond,discarded_weight,wall_time_ms,seed_winner";

impl SweepRow {
    fn failed(phi: f64, j_ising: f64, delta_c: f64, v_pump: f64) -> Self {
        let nan = f64::NAN;
        Self {
            phi,
            j_ising,
            delta_c,
            v_pump,
            alpha_re: nan,
            alpha_im: nan,
            alpha_abs: nan,
            m0x: nan,
            m0z: nan,
            mpix: nan,
            mpiz: nan,
            qb_mean: nan,
            p_mean: nan,
            s_half: nan,
            phase_label: Phase::Unclassified,
            scf_iterations: 0,
            converged: false,
            dmrg_max_bond: 0,
            discarded_weight: nan,
            wall_time_ms: 0,
            seed_winner: String::new(),
        }
    }

    fn key(&self) -> [u64; 4] {
        [self.phi, self.j_ising, self.delta_c, self.v_pump].map(f64::to_bits)
    }

    /// Amplitude as stored; NaN parts for failed points.
    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha_re, self.alpha_im)
    }

    fn value(&self, column: &str) -> String {
        let v = match column {
            "alpha_abs" => self.alpha_abs,
            "m0x" => self.m0x,
            "m0z" => self.m0z,
            "mpix" => self.mpix,
            "mpiz" => self.mpiz,
            "qb_mean" => self.qb_mean,
            "p_mean" => self.p_mean,
            "s_half" => self.s_half,
            "phase_label" => return self.phase_label.to_string(),
            _ => unreachable!("unknown heatmap column {column}"),
        };
        v.to_string()
    }
}

/// Full per-point diagnostics, one JSON object per grid point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointRecord {
    pub row: SweepRow,
    /// Indices of `(phi, j_ising, delta_c, v_pump)` in the config grids.
    pub index: [usize; 4],
    #[serde(with = "crate::nullable")]
    pub total_energy: f64,
    #[serde(with = "crate::nullable")]
    pub spin_energy: f64,
    pub residual_history: Vec<f64>,
    pub branches: Vec<Branch>,
    pub dmrg: Option<DmrgDiagnostics>,
    pub pinning: f64,
    pub stride: usize,
    /// `v_pump` of the point whose amplitude and state seeded this one.
    pub continued_from: Option<f64>,
    pub subset_entropies: Option<SubsetEntropies>,
    pub local_rows: Option<PairFields>,
    pub error: Option<String>,
}

/// Sorted records of a finished sweep, as written to `points.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepOutput {
    pub config: SweepConfig,
    pub points: Vec<PointRecord>,
}

impl SweepOutput {
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.points.iter().map(|p| &p.row)
    }
}

/// Reads and validates a `points.json` file.
pub fn read_points_json(path: impl AsRef<Path>) -> Result<SweepOutput> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let out: SweepOutput = serde_json::from_str(&text)?;
    out.config.validate()?;
    if out.points.len() != out.config.point_count() {
        return Err(Error::Config(format!(
            "{}: {} points for a {}-point grid",
            path.display(),
            out.points.len(),
            out.config.point_count()
        )));
    }
    Ok(out)
}

pub fn read_rows_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Config(format!("{}: unexpected header `{}`", path.display(), header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_rows_csv(rows: &[SweepRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("csv output", e))
}

/// Re-labels rows with new thresholds, leaving every measured value alone.
pub fn reclassify(rows: &mut [SweepRow], thresholds: &Thresholds) -> Result<()> {
    thresholds.validate()?;
    for r in rows {
        if !r.alpha_abs.is_finite() {
            continue;
        }
        let ops = crate::observables::OrderParameterSet {
            alpha_abs: r.alpha_abs,
            m0x: r.m0x,
            m0z: r.m0z,
            mpix: r.mpix,
            mpiz: r.mpiz,
            qb_mean: r.qb_mean,
            p_mean: r.p_mean,
            s_half: r.s_half,
            phase: Phase::Unclassified,
        };
        r.phase_label = classify_phase(&ops, thresholds, r.phi, r.j_ising);
    }
    Ok(())
}

fn seed_label(s: Complex64) -> String {
    format!("{}{:+}i", s.re, s.im)
}

struct Warm {
    from: f64,
    alpha: Complex64,
    mps: Option<Mps>,
}

fn solve_point(cfg: &SweepConfig, index: [usize; 4], warm: Option<&Warm>) -> (PointRecord, Option<Warm>) {
    let [pi, ji, di, vi] = index;
    let (phi, j, dc, vp) = (cfg.phi[pi], cfg.j_ising[ji], cfg.delta_c[di], cfg.v_pump[vi]);
    let params = cfg.params(phi, j, dc, vp);
    let start = Instant::now();
    let extra: Vec<Complex64> = warm.map(|w| vec![w.alpha]).unwrap_or_default();
    let mut record = PointRecord {
        row: SweepRow::failed(phi, j, dc, vp),
        index,
        total_energy: f64::NAN,
        spin_energy: f64::NAN,
        residual_history: Vec::new(),
        branches: Vec::new(),
        dmrg: None,
        pinning: cfg.scf.pinning,
        stride: cfg.stride,
        continued_from: warm.map(|w| w.from),
        subset_entropies: None,
        local_rows: None,
        error: None,
    };
    let solved = (|| -> Result<_> {
        let rec = scf_solve_from(&params, &cfg.scf, &cfg.dmrg, &extra, warm.and_then(|w| w.mps.as_ref()))?;
        let mut ops = measure_order_parameters(&rec.ground_state, rec.alpha, cfg.stride)?;
        ops.phase = classify_phase(&ops, &cfg.thresholds, phi, j);
        let golden = (phi - crate::model::golden_angle()).abs() < 1e-12 && cfg.n_sites >= 5;
        let entropies = if golden { Some(golden_subset_entropies(&rec.ground_state)?) } else { None };
        let rows = if cfg.emit.local_rows { Some(local_rows(&rec.ground_state, cfg.emit.local_rows_origin)?) } else { None };
        Ok((rec, ops, entropies, rows))
    })();
    let next = match solved {
        Ok((rec, ops, entropies, rows)) => {
            let r = &mut record.row;
            r.alpha_re = rec.alpha.re;
            r.alpha_im = rec.alpha.im;
            r.alpha_abs = ops.alpha_abs;
            r.m0x = ops.m0x;
            r.m0z = ops.m0z;
            r.mpix = ops.mpix;
            r.mpiz = ops.mpiz;
            r.qb_mean = ops.qb_mean;
            r.p_mean = ops.p_mean;
            r.s_half = ops.s_half;
            r.phase_label = ops.phase;
            r.scf_iterations = rec.iterations;
            r.converged = rec.converged;
            r.dmrg_max_bond = rec.dmrg.as_ref().map_or(0, |d| d.max_bond);
            r.discarded_weight = rec.dmrg.as_ref().map_or(0.0, |d| d.discarded_weight);
            r.seed_winner = seed_label(rec.seed_used);
            record.total_energy = rec.total_energy;
            record.spin_energy = rec.spin_energy;
            record.residual_history = rec.residual_history;
            record.branches = rec.branches;
            record.dmrg = rec.dmrg;
            record.subset_entropies = entropies;
            record.local_rows = rows;
            let mps = rec.ground_state.as_mps().cloned();
            Some(Warm { from: vp, alpha: rec.alpha, mps })
        }
        Err(e) => {
            record.error = Some(e.to_string());
            None
        }
    };
    if cfg.emit.record_timing {
        record.row.wall_time_ms = start.elapsed().as_millis() as u64;
    }
    (record, next)
}

fn checkpoint_path(dir: &Path, index: [usize; 4]) -> PathBuf {
    let [p, j, d, v] = index;
    dir.join(CHECKPOINT_DIR).join(format!("line-{p}-{j}-{d}-v{v}.mps"))
}

/// Reads the partial JSONL log, dropping a torn final line. Later records
/// replace earlier ones at the same grid point.
fn load_partial(dir: &Path, cfg: &SweepConfig) -> Result<BTreeMap<[usize; 4], PointRecord>> {
    let path = dir.join(PARTIAL_JSONL);
    let mut out = BTreeMap::new();
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut good_bytes = 0;
    for (i, line) in lines.iter().enumerate() {
        let complete = line.ends_with('\n');
        match serde_json::from_str::<PointRecord>(line.trim_end()) {
            Ok(rec) if complete => {
                let [p, j, d, v] = rec.index;
                let fits = p < cfg.phi.len()
                    && j < cfg.j_ising.len()
                    && d < cfg.delta_c.len()
                    && v < cfg.v_pump.len()
                    && rec.row.key() == [cfg.phi[p], cfg.j_ising[j], cfg.delta_c[d], cfg.v_pump[v]].map(f64::to_bits);
                if !fits {
                    return Err(Error::Config(format!(
                        "{}: line {} does not belong to this configuration; use a fresh out_dir",
                        path.display(),
                        i + 1
                    )));
                }
                out.insert(rec.index, rec);
                good_bytes += line.len();
            }
            _ if i + 1 == lines.len() => break,
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(e) => return Err(Error::Config(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    if good_bytes < text.len() {
        let f = OpenOptions::new().write(true).open(&path).map_err(|e| Error::io(&path, e))?;
        f.set_len(good_bytes as u64).map_err(|e| Error::io(&path, e))?;
    }
    Ok(out)
}

fn open_append(path: &Path) -> Result<(BufWriter<File>, bool)> {
    let fresh = !path.exists();
    let f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    Ok((BufWriter::new(f), fresh))
}

/// Single consumer of finished points; flushes after every record.
fn writer_loop(dir: &Path, rx: mpsc::Receiver<PointRecord>) -> Result<()> {
    let jpath = dir.join(PARTIAL_JSONL);
    let cpath = dir.join(PARTIAL_CSV);
    let (mut jw, _) = open_append(&jpath)?;
    let (cw, fresh) = open_append(&cpath)?;
    let mut cw = csv::WriterBuilder::new().has_headers(fresh).from_writer(cw);
    for rec in rx {
        serde_json::to_writer(&mut jw, &rec)?;
        jw.write_all(b"\n").map_err(|e| Error::io(&jpath, e))?;
        jw.flush().map_err(|e| Error::io(&jpath, e))?;
        cw.serialize(&rec.row)?;
        cw.flush().map_err(|e| Error::io(&cpath, e))?;
    }
    Ok(())
}

fn run_line(cfg: &SweepConfig, line: [usize; 3], done: &BTreeMap<[usize; 4], PointRecord>, tx: &mpsc::Sender<PointRecord>) -> Result<()> {
    let [p, j, d] = line;
    let dir = &cfg.out_dir;
    let nv = cfg.v_pump.len();
    let finished = (0..nv).take_while(|&v| done.contains_key(&[p, j, d, v])).count();
    if finished == nv {
        return Ok(());
    }
    // Resume after the last logged point when its state was checkpointed.
    let mut start = 0;
    let mut warm = None;
    if finished > 0 {
        let last = &done[&[p, j, d, finished - 1]];
        let ck = checkpoint_path(dir, [p, j, d, finished - 1]);
        let usable = last.error.is_none() && (cfg.scf.backend == Backend::Ed || ck.exists());
        if usable {
            let mps = if cfg.scf.backend == Backend::Dmrg { Some(Mps::read_checkpoint(&ck)?) } else { None };
            warm = Some(Warm { from: last.row.v_pump, alpha: last.row.alpha(), mps });
            start = finished;
        }
    }
    for v in start..nv {
        let index = [p, j, d, v];
        let (record, next) = solve_point(cfg, index, warm.as_ref());
        if cfg.scf.backend == Backend::Dmrg {
            if let Some(mps) = next.as_ref().and_then(|w| w.mps.as_ref()) {
                mps.write_checkpoint(checkpoint_path(dir, index))?;
            }
            if v > 0 {
                let old = checkpoint_path(dir, [p, j, d, v - 1]);
                if old.exists() {
                    fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
                }
            }
        }
        if tx.send(record).is_err() {
            return Err(Error::Config("output writer stopped".into()));
        }
        warm = next;
    }
    Ok(())
}

/// Solves every grid point not already logged in `cfg.out_dir`, then
/// finalizes the outputs. Solver failures are recorded per point; only I/O
/// and configuration errors abort.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(dir.join(CHECKPOINT_DIR)).map_err(|e| Error::io(&dir, e))?;
    let done = load_partial(&dir, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<PointRecord>();
    let writer_dir = dir.clone();
    let writer = std::thread::spawn(move || writer_loop(&writer_dir, rx));
    let lines = cfg.lines();
    let solved = pool.install(|| {
        lines.par_iter().try_for_each_with(tx, |tx, &line| run_line(cfg, line, &done, tx))
    });
    let written = writer.join().map_err(|_| Error::Config("output writer panicked".into()))?;
    solved?;
    written?;
    finalize(cfg)
}

/// Writes the sorted outputs from the partial log and removes the partial
/// files once every grid point is present.
pub fn finalize(cfg: &SweepConfig) -> Result<SweepOutput> {
    let dir = &cfg.out_dir;
    let done = load_partial(dir, cfg)?;
    if done.len() != cfg.point_count() {
        return Err(Error::Config(format!("{} of {} grid points solved", done.len(), cfg.point_count())));
    }
    let points: Vec<PointRecord> = done.into_values().collect();
    let out = SweepOutput { config: cfg.clone(), points };
    let create = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        Ok(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
    };
    if cfg.emit.csv {
        let rows: Vec<SweepRow> = out.rows().cloned().collect();
        write_rows_csv(&rows, create(ROWS_CSV)?)?;
    }
    if cfg.emit.json {
        let mut w = create(POINTS_JSON)?;
        serde_json::to_writer_pretty(&mut w, &out)?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(dir.join(POINTS_JSON), e))?;
    }
    if cfg.emit.heatmap {
        write_heatmaps(&out, &dir.join(HEATMAP_DIR))?;
    }
    if cfg.emit.local_rows {
        write_local_rows(&out, create(LOCAL_ROWS_CSV)?)?;
    }
    for name in [PARTIAL_JSONL, PARTIAL_CSV] {
        let p = dir.join(name);
        match fs::remove_file(&p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(Error::io(&p, e)),
            _ => {}
        }
    }
    let ck = dir.join(CHECKPOINT_DIR);
    if ck.exists() {
        fs::remove_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
    }
    Ok(out)
}

/// File name of one heatmap.
pub fn heatmap_name(column: &str, phi: f64, j_ising: f64) -> String {
    format!("{column}_phi{phi:.6}_J{j_ising}.csv")
}

/// One matrix per observable, `phi` and `J`: first row is the `v_pump`
/// grid, first column the `delta_c` grid.
fn write_heatmaps(out: &SweepOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &out.config;
    let mut grid: BTreeMap<[usize; 4], &SweepRow> = BTreeMap::new();
    for p in &out.points {
        grid.insert(p.index, &p.row);
    }
    for (pi, &phi) in cfg.phi.iter().enumerate() {
        for (ji, &j) in cfg.j_ising.iter().enumerate() {
            for column in HEATMAP_COLUMNS {
                let path = dir.join(heatmap_name(column, phi, j));
                let mut w = csv::Writer::from_path(&path)?;
                let mut head = vec!["delta_c\\v_pump".to_string()];
                head.extend(cfg.v_pump.iter().map(|v| v.to_string()));
                w.write_record(&head)?;
                for (di, &dc) in cfg.delta_c.iter().enumerate() {
                    let mut rec = vec![dc.to_string()];
                    rec.extend((0..cfg.v_pump.len()).map(|vi| grid[&[pi, ji, di, vi]].value(column)));
                    w.write_record(&rec)?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    Ok(())
}

fn write_local_rows(out: &SweepOutput, w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["phi", "j_ising", "delta_c", "v_pump", "origin", "m", "qb", "p"])?;
    for p in &out.points {
        let Some(lr) = &p.local_rows else { continue };
        let r = &p.row;
        for (m, (qb, pm)) in lr.qb.iter().zip(&lr.p).enumerate() {
            w.write_record([
                r.phi.to_string(),
                r.j_ising.to_string(),
                r.delta_c.to_string(),
                r.v_pump.to_string(),
                lr.origin.to_string(),
                (m + 1).to_string(),
                qb.to_string(),
                pm.re.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("local rows", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n_sites = 6\nj_ising = -1\ndelta_c = -10\nv_pump = 0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.omega0, 0.1);
        assert_eq!(cfg.kappa, 10.0);
        assert_eq!(cfg.phi, vec![0.0]);
        assert_eq!(cfg.point_count(), 1);
        assert_eq!(cfg.scf, ScfConfig::default());
    }

    #[test]
    fn empty_config_lists_required_keys() {
        let e = parse_config_str("").unwrap_err().to_string();
        for k in REQUIRED_KEYS {
            assert!(e.contains(k), "{e}");
        }
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_key() {
        let e = parse_config_str(&format!("{MINIMAL}bogus = 1\n")).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let e = parse_config_str("n_sites = \"six\"\nj_ising = 1\ndelta_c = -1\nv_pump = 0\n").unwrap_err().to_string();
        assert!(e.contains("n_sites"), "{e}");
        let e = parse_config_str(&format!("{MINIMAL}[scf]\nalpha_tl = 1e-6\n")).unwrap_err().to_string();
        assert!(e.contains("alpha_tl"), "{e}");
    }

    #[test]
    fn grids_and_phi_tokens() {
        let g = Grid::Range { min: 0.0, max: 1.0, count: 5 };
        assert_eq!(g.points("g").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Grid::Range { min: 2.0, max: 9.0, count: 1 }.points("g").unwrap(), vec![2.0]);
        assert!(Grid::Range { min: 0.0, max: 1.0, count: 0 }.points("g").is_err());
        assert_eq!(Grid::List(vec![3.0, 1.0, 3.0]).points("g").unwrap(), vec![1.0, 3.0]);
        assert_eq!(parse_phi_token("golden").unwrap(), golden_angle());
        assert_eq!(parse_phi_token("pi/2").unwrap(), std::f64::consts::FRAC_PI_2);
        assert_eq!(parse_phi_token("m-modes=3").unwrap(), golden_angle());
        assert!(parse_phi_token("sideways").is_err());
        let cfg = parse_config_str(&format!("{MINIMAL}phi = [\"golden\", 0, \"pi/2\"]\n")).unwrap();
        assert_eq!(cfg.phi, vec![0.0, golden_angle(), std::f64::consts::FRAC_PI_2]);
    }

    #[test]
    fn seed_key_sets_dmrg_seed() {
        let cfg = parse_config_str(&format!("{MINIMAL}seed = 7\n")).unwrap();
        assert_eq!(cfg.dmrg.seed, 7);
    }

    #[test]
    fn csv_header_matches_row_fields() {
        let mut buf = Vec::new();
        write_rows_csv(&[SweepRow::failed(0.0, 1.0, -1.0, 0.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        let mut empty = Vec::new();
        write_rows_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), CSV_HEADER);
    }

    #[test]
    fn single_point_sweep_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = parse_config_str(MINIMAL).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.points[0].row.phase_label, Phase::I);
        assert!(!dir.path().join(PARTIAL_JSONL).exists());
        let back = read_points_json(dir.path().join(POINTS_JSON)).unwrap();
        assert_eq!(back.points[0].row, out.points[0].row);
        let heat = fs::read_to_string(dir.path().join(HEATMAP_DIR).join(heatmap_name("alpha_abs", 0.0, -1.0))).unwrap();
        assert_eq!(heat.lines().count(), 2);
        assert_eq!(heat.lines().nth(1).unwrap(), "-10,0");
    }

    #[test]
    fn torn_partial_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = parse_config_str("n_sites = 4\nj_ising = 1\ndelta_c = -10\nv_pump = [0, 1]\n").unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        cfg.scf.backend = Backend::Ed;
        let full = run_sweep(&cfg).unwrap();
        // replay the first point, then a torn second record
        let first = serde_json::to_string(&full.points[0]).unwrap();
        fs::write(dir.path().join(PARTIAL_JSONL), format!("{first}\n{{\"row\":")).unwrap();
        let resumed = run_sweep(&cfg).unwrap();
        assert_eq!(resumed.points.len(), 2);
        assert_eq!(resumed.points[1].row, full.points[1].row);
    }
}
