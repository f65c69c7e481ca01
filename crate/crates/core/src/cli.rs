//! Command-line front end: config parsing, dispatch, output files and the
//! run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::channel::{Channel, DispersionLossMatrix, FiberParams};
use crate::experiments::{
    amplitude_mi_sweep, awgn_phase_entropy_sweep, dimension_sweep, direction_rate_saturation, escape_sweep,
    identity_check, log_domain_noise_boundedness, noncentral_chi2_check, phase_uniformity_sweep,
    PowerSweep, SweepChannel,
};
use crate::fading::dependency_report;
use crate::infotheory::{Conditioning, DEFAULT_K};
use crate::numerics::{ComplexVector, RngStream};
use crate::trials::with_workers;
use crate::zd::{inequality_suite, PhaseRule, ZdLaw, ZdParams, ZdSimulator};

pub const WORKERS_ENV: &str = "MSSFM_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    ZdPdf,
    CheckInequalities,
    FadingReport,
    Escape,
    Sweep,
    IdentityCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ZdPdf => "zd-pdf",
            Command::CheckInequalities => "check-inequalities",
            Command::FadingReport => "fading-report",
            Command::Escape => "escape",
            Command::Sweep => "sweep",
            Command::IdentityCheck => "identity-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mssfm", version, about = "Nonlinear fiber channel laboratory")]
pub struct Args {
    pub command: Command,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// The file schema. Every key is optional at this level; commands demand
/// what they need.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub command: Option<Command>,
    pub params: Option<Value>,
    pub sweep: Option<PowerSweep>,
    pub master_seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub options: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerSource {
    Flag,
    Env,
    File,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelParams {
    Fiber(FiberParams),
    Zd(ZdParams),
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: Option<ModelParams>,
    pub sweep: Option<PowerSweep>,
    pub master_seed: u64,
    pub workers: usize,
    pub workers_source: WorkerSource,
    pub output_dir: PathBuf,
    pub options: Value,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn parse_as<T: DeserializeOwned>(v: &Value, key: &str) -> Result<T, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("{key}: {e}")))
}

/// Builds a [`RunConfig`]: flag > environment (workers only) > file > default.
pub fn parse_config(
    command: Command,
    path: Option<&Path>,
    flags: &Overrides,
    env_workers: Option<&str>,
) -> Result<RunConfig, CliError> {
    let file: ConfigFile = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    if let Some(c) = file.command {
        if c != command {
            return Err(CliError::Config(format!(
                "command: file says {}, invoked as {}",
                c.name(),
                command.name()
            )));
        }
    }
    let env = match env_workers {
        Some(s) => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("{WORKERS_ENV}: not a count: {s:?}")))?,
        ),
        None => None,
    };
    let (workers, workers_source) = if let Some(w) = flags.workers {
        (w, WorkerSource::Flag)
    } else if let Some(w) = env {
        (w, WorkerSource::Env)
    } else if let Some(w) = file.workers {
        (w, WorkerSource::File)
    } else {
        (std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1), WorkerSource::Default)
    };
    if workers == 0 {
        return Err(CliError::Config("workers: must be >= 1".into()));
    }
    let params = match (&file.params, command) {
        (None, _) => None,
        (Some(v), Command::Simulate | Command::FadingReport | Command::Escape) => {
            Some(ModelParams::Fiber(parse_as(v, "params")?))
        }
        (Some(v), Command::ZdPdf | Command::CheckInequalities) => Some(ModelParams::Zd(parse_as(v, "params")?)),
        (Some(v), Command::Sweep) => {
            let zd = file.sweep.as_ref().is_some_and(|s| s.channel == SweepChannel::Zd);
            Some(if zd { ModelParams::Zd(parse_as(v, "params")?) } else { ModelParams::Fiber(parse_as(v, "params")?) })
        }
        (Some(_), Command::IdentityCheck) => {
            return Err(CliError::Config("params: identity-check takes no channel parameters".into()))
        }
    };
    match &params {
        Some(ModelParams::Fiber(p)) => p.validate()?,
        Some(ModelParams::Zd(p)) => p.validate()?,
        None => {}
    }
    if let Some(s) = &file.sweep {
        s.validate()?;
    }
    let options = file.options.unwrap_or_else(|| json!({}));
    if !options.is_object() {
        return Err(CliError::Config("options: must be an object".into()));
    }
    Ok(RunConfig {
        command,
        params,
        sweep: file.sweep,
        master_seed: flags.seed.or(file.master_seed).unwrap_or(0),
        workers,
        workers_source,
        output_dir: flags.out.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        options,
    })
}

/// One pass/fail line of the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, value, threshold, detail: detail.into() }
    }
}

/// Comma-separated table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// 17 significant digits, `.` decimal point, `\n` line ends.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(v) => v.to_string(),
                    Cell::Float(v) => format!("{v:.16e}"),
                    Cell::Bool(v) => v.to_string(),
                    Cell::Text(v) => v.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { tables: Vec::new(), summary: BTreeMap::new(), checks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn put(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(key.into(), serde_json::to_value(v).expect("serializable"));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub created_unix: u64,
    pub config: RunConfig,
    pub outputs: Vec<OutputDigest>,
    pub passed: bool,
}

fn fiber(cfg: &RunConfig) -> Result<&FiberParams, CliError> {
    match &cfg.params {
        Some(ModelParams::Fiber(p)) => Ok(p),
        _ => Err(CliError::Config(format!("params: {} needs fiber parameters", cfg.command.name()))),
    }
}

fn zd(cfg: &RunConfig) -> Result<&ZdParams, CliError> {
    match &cfg.params {
        Some(ModelParams::Zd(p)) => Ok(p),
        _ => Err(CliError::Config(format!("params: {} needs zero-dispersion parameters", cfg.command.name()))),
    }
}

fn sweep_of(cfg: &RunConfig) -> Result<&PowerSweep, CliError> {
    cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep: missing required key".into()))
}

fn options<T: DeserializeOwned>(cfg: &RunConfig) -> Result<T, CliError> {
    parse_as(&cfg.options, "options")
}

fn vector(entries: &[[f64; 2]], n: usize, key: &str) -> Result<ComplexVector, CliError> {
    if entries.len() != n {
        return Err(CliError::Config(format!("{key}: expected {n} entries, got {}", entries.len())));
    }
    Ok(ComplexVector::new(entries.iter().map(|&[re, im]| Complex64::new(re, im)).collect())?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateOptions {
    input: Vec<[f64; 2]>,
    #[serde(default = "default_sim_trials")]
    trials: usize,
}

fn default_sim_trials() -> usize {
    1000
}

fn simulate(cfg: &RunConfig, root: &RngStream) -> Result<Outcome, CliError> {
    let params = fiber(cfg)?;
    let opts: SimulateOptions = options(cfg)?;
    let x = vector(&opts.input, params.n, "options.input")?;
    let channel = Channel::new(params.clone())?;
    let ys = crate::trials::try_run_trials(&root.substream(0), opts.trials, |_, s| channel.propagate(&x, s))?;
    let mut out = Outcome::new();
    let mut t = Table::new("simulate", &["trial", "coordinate", "re", "im"]);
    for (i, y) in ys.iter().enumerate() {
        for (k, z) in y.iter().enumerate() {
            t.push(vec![i.into(), k.into(), z.re.into(), z.im.into()]);
        }
    }
    out.tables.push(t);
    let sq: Vec<f64> = ys.iter().map(|y| y.norm_sqr()).collect();
    out.put("mean_norm_sq", crate::numerics::mean(&sq));
    out.put("variance_norm_sq", crate::numerics::variance(&sq));
    if params.loss.is_constant() && params.noise_density > 0.0 && opts.trials >= 100 {
        let c = noncentral_chi2_check(&channel, &x, opts.trials, &root.substream(1))?;
        out.checks.push(Check::new("noncentral_chi2_ks", c.ks_p_value > 0.01, c.ks_p_value, 0.01, "KS p-value"));
        out.checks.push(Check::new("norm_sq_mean", c.mean_z.abs() <= 3.0, c.mean_z, 3.0, "z-score"));
        out.checks.push(Check::new("norm_sq_variance", c.variance_z.abs() <= 3.0, c.variance_z, 3.0, "z-score"));
        out.put("chi_square", c);
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZdPdfOptions {
    r_x: f64,
    #[serde(default)]
    phi_x: f64,
    r_max: Option<f64>,
    #[serde(default = "default_grid")]
    r_points: usize,
    #[serde(default = "default_grid")]
    phi_points: usize,
    #[serde(default = "default_grid")]
    panels: usize,
}

fn default_grid() -> usize {
    64
}

fn zd_pdf(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = *zd(cfg)?;
    let o: ZdPdfOptions = options(cfg)?;
    if !(o.r_x >= 0.0) || o.r_points < 2 || o.phi_points < 2 || o.panels == 0 {
        return Err(CliError::Config("options: need r_x >= 0, r_points >= 2, phi_points >= 2, panels >= 1".into()));
    }
    let law = ZdLaw::new(params)?;
    let r_max = o.r_max.unwrap_or(o.r_x + 12.0 * params.variance().sqrt());
    let mut out = Outcome::new();
    let mut t = Table::new("zd_pdf", &["r_y", "phi_y", "pdf"]);
    for i in 0..o.r_points {
        let r = r_max * i as f64 / (o.r_points - 1) as f64;
        for j in 0..o.phi_points {
            let phi = std::f64::consts::TAU * j as f64 / o.phi_points as f64;
            t.push(vec![r.into(), phi.into(), law.pdf(r, phi, o.r_x, o.phi_x)?.into()]);
        }
    }
    out.tables.push(t);
    let total: f64 = law
        .ring_probabilities((0.0, r_max), &[0.0, std::f64::consts::TAU], o.r_x, o.phi_x, o.panels)?
        .iter()
        .sum();
    out.put("normalization", total);
    out.checks.push(Check::new("normalization", (total - 1.0).abs() <= 1e-3, total, 1e-3, "|integral - 1|"));
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InequalityOptions {
    #[serde(default = "default_points")]
    points: usize,
}

fn default_points() -> usize {
    10_000
}

fn check_inequalities(cfg: &RunConfig, root: &RngStream) -> Result<Outcome, CliError> {
    let params = *zd(cfg)?;
    let o: InequalityOptions = options(cfg)?;
    let rep = inequality_suite(&params, o.points, &mut root.substream(0))?;
    let mut out = Outcome::new();
    let mut t = Table::new("inequalities", &["suite", "points", "max_violation"]);
    for (name, v) in [
        ("b_ratio", rep.b_ratio),
        ("bessel", rep.bessel),
        ("f_positive", rep.f_positive),
        ("dm_bound", rep.dm_bound),
    ] {
        t.push(vec![name.into(), rep.points.into(), v.into()]);
        out.checks.push(Check::new(name, v <= 1e-12, v, 1e-12, "max violation"));
    }
    out.tables.push(t);
    out.put("inequalities", rep);
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FadingOptions {
    #[serde(default = "default_draws")]
    draws: usize,
}

fn default_draws() -> usize {
    1000
}

fn fading_report(cfg: &RunConfig, root: &RngStream) -> Result<Outcome, CliError> {
    let params = fiber(cfg)?;
    let o: FadingOptions = options(cfg)?;
    let r = DispersionLossMatrix::new(params)?;
    let unitary = r.matrix().unitarity_defect() < 1e-9;
    let mut out = Outcome::new();
    let mut t = Table::new(
        "fading",
        &["stages", "draws", "amplitude_max", "phase_max", "cross_min", "cross_max", "generic_fraction"],
    );
    for stages in 1..=3usize {
        let rep = dependency_report(stages, &r, o.draws, &mut root.substream(stages as u64))?;
        t.push(vec![
            stages.into(),
            rep.draws.into(),
            rep.amplitude_max.into(),
            rep.phase_max.into(),
            rep.cross_min.into(),
            rep.cross_max.into(),
            rep.generic_fraction.into(),
        ]);
        match stages {
            1 => {
                let v = rep.amplitude_max.max(rep.phase_max);
                out.checks.push(Check::new("one_stage_dependencies", v <= 1e-12, v, 1e-12, "max deviation"));
            }
            2 => out.checks.push(Check::new(
                "two_stage_identity",
                rep.cross_max <= 1e-12,
                rep.cross_max,
                1e-12,
                "max | |r21 M12| - |r12 M21| |",
            )),
            _ if unitary => out.put("three_stage_note", "R is unitary; the identity then holds for every stage count"),
            _ => out.checks.push(Check::new(
                "three_stage_violation",
                rep.generic_fraction >= 0.99,
                rep.generic_fraction,
                0.99,
                "fraction of draws with | |r21 M12| - |r12 M21| | > 1e-6",
            )),
        }
    }
    out.tables.push(t);
    out.put("unitary", unitary);
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EscapeOptions {
    kappa_grid: Vec<f64>,
    #[serde(default = "default_c")]
    c: f64,
    #[serde(default = "default_escape_trials")]
    trials: usize,
}

fn default_c() -> f64 {
    1.0
}

fn default_escape_trials() -> usize {
    100_000
}

/// `values[i + 1] <= values[i] + 2 sqrt(se_i^2 + se_{i+1}^2)` along the grid.
fn non_increasing(values: &[f64], stderr: &[f64]) -> (bool, f64) {
    let mut worst = f64::NEG_INFINITY;
    for i in 1..values.len() {
        let slack = 2.0 * (stderr[i].powi(2) + stderr[i - 1].powi(2)).sqrt();
        worst = worst.max(values[i] - values[i - 1] - slack);
    }
    (worst <= 0.0, worst.max(0.0))
}

fn escape(cfg: &RunConfig, root: &RngStream) -> Result<Outcome, CliError> {
    let params = fiber(cfg)?;
    let o: EscapeOptions = options(cfg)?;
    if o.kappa_grid.len() < 2 {
        return Err(CliError::Config("options.kappa_grid: needs >= 2 points".into()));
    }
    let channel = Channel::new(params.clone())?;
    let pts = escape_sweep(&channel, &o.kappa_grid, o.c, o.trials, root)?;
    let mut out = Outcome::new();
    let mut t = Table::new("escape", &["kappa", "probability", "stderr"]);
    for p in &pts {
        t.push(vec![p.kappa.into(), p.probability.into(), p.stderr.into()]);
    }
    out.tables.push(t);
    let probs: Vec<f64> = pts.iter().map(|p| p.probability).collect();
    let se: Vec<f64> = pts.iter().map(|p| p.stderr).collect();
    let (mono, excess) = non_increasing(&probs, &se);
    out.checks.push(Check::new("escape_decreasing", mono, excess, 0.0, "largest rise beyond 2 stderr"));
    let top = *probs.last().expect("two points");
    out.checks.push(Check::new("escape_top", top < 0.05, top, 0.05, "Pr(|V_k| < c) at the largest kappa"));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SweepKind {
    AmplitudeMi,
    AwgnPhaseEntropy,
    LogNoise,
    DirectionSaturation,
    Dimension,
    PhaseUniformity,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepOptions {
    kind: Option<SweepKind>,
    direction: Option<Vec<[f64; 2]>>,
    n_grid: Option<Vec<usize>>,
    #[serde(default = "default_sub_steps")]
    sub_steps: usize,
}

fn default_sub_steps() -> usize {
    128
}

fn sweep(cfg: &RunConfig, root: &RngStream) -> Result<Outcome, CliError> {
    let sw = sweep_of(cfg)?;
    let o: SweepOptions = options(cfg)?;
    let kind = o.kind.unwrap_or(match sw.channel {
        SweepChannel::Mssfm => SweepKind::AmplitudeMi,
        SweepChannel::Awgn => SweepKind::AwgnPhaseEntropy,
        SweepChannel::Fading => SweepKind::LogNoise,
        SweepChannel::Zd => SweepKind::PhaseUniformity,
    });
    let mut out = Outcome::new();
    match kind {
        SweepKind::AmplitudeMi => {
            let channel = Channel::new(fiber(cfg)?.clone())?;
            let r = amplitude_mi_sweep(&channel, sw, root)?;
            let mut t = Table::new("sweep", &["P_watts", "mi_nats", "stderr", "near_singular"]);
            for p in &r.points {
                t.push(vec![p.p.into(), p.value.into(), p.stderr.into(), p.near_singular.into()]);
            }
            out.tables.push(t);
            let s = r.top_fit.slope;
            out.checks.push(Check::new("slope", (s - 0.5).abs() <= 0.1, s, 0.1, "top-30 dB slope vs ln P, 0.5 +- 0.1"));
            out.checks.push(Check::new("r_squared", r.top_fit.r_squared >= 0.98, r.top_fit.r_squared, 0.98, "fit R^2"));
            out.put("fit", r.fit);
            out.put("top_fit", r.top_fit);
        }
        SweepKind::AwgnPhaseEntropy => {
            let a = awgn_phase_entropy_sweep(&sw.p_grid, sw.trials_per_point, sw.k, root)?;
            let mut t = Table::new("sweep", &["P_watts", "h_nats", "stderr", "phase_entropy", "entropy_power"]);
            for (i, p) in a.result.points.iter().enumerate() {
                t.push(vec![
                    p.p.into(),
                    p.value.into(),
                    p.stderr.into(),
                    a.phase_entropy[i].into(),
                    a.entropy_power[i].into(),
                ]);
            }
            out.tables.push(t);
            let s = a.result.top_fit.slope;
            out.checks.push(Check::new("slope", (s + 0.5).abs() <= 0.1, s, 0.1, "top-30 dB slope vs ln P, -0.5 +- 0.1"));
            let hmax = a.phase_entropy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let cap = std::f64::consts::TAU.ln();
            out.checks.push(Check::new("phase_entropy_cap", hmax <= cap + 0.01, hmax, cap, "max h(angle Y)"));
            let falling = a.entropy_power.windows(2).all(|w| w[1] < w[0]);
            out.checks.push(Check::new("entropy_power_decreasing", falling, 0.0, 0.0, "strict along the grid"));
            out.put("fit", a.result.fit);
            out.put("top_fit", a.result.top_fit);
        }
        SweepKind::LogNoise => {
            let params = fiber(cfg)?;
            let dir = match &o.direction {
                Some(d) => vector(d, params.n, "options.direction")?,
                None => default_direction(params.n),
            };
            let dir = normalized(dir)?;
            let channel = Channel::new(params.clone())?;
            let tab = log_domain_noise_boundedness(&channel, &dir, &sw.p_grid, sw.trials_per_point, root)?;
            let mut t = Table::new("log_noise", &["P_watts", "mean", "variance"]);
            for r in &tab.rows {
                t.push(vec![r.p.into(), r.mean.into(), r.variance.into()]);
            }
            out.tables.push(t);
            out.checks.push(Check::new("variance_bounded", tab.ratio <= 1.2, tab.ratio, 1.2, "top / middle decade variance"));
            out.put("top_decade_variance", tab.top_decade_variance);
            out.put("middle_decade_variance", tab.middle_decade_variance);
        }
        SweepKind::DirectionSaturation => {
            let channel = Channel::new(fiber(cfg)?.clone())?;
            let tab = direction_rate_saturation(&channel, &sw.p_grid, sw.trials_per_point, sw.k, root)?;
            let mut t = Table::new("direction", &["P_watts", "rate_nats", "stderr", "near_singular"]);
            for p in &tab.points {
                t.push(vec![p.p.into(), p.value.into(), p.stderr.into(), p.near_singular.into()]);
            }
            out.tables.push(t);
            let top = tab.points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
            let cap = tab.ceiling + 0.5;
            out.checks.push(Check::new("below_ceiling", top <= cap, top, cap, "(1/n) log A_n + 0.5"));
            let knee = tab.knee.unwrap_or(0);
            let v: Vec<f64> = tab.points[knee..].iter().map(|p| p.value).collect();
            let se: Vec<f64> = tab.points[knee..].iter().map(|p| p.stderr).collect();
            let (mono, excess) = non_increasing(&v, &se);
            out.checks.push(Check::new("non_increasing_after_knee", mono, excess, 0.0, "largest rise beyond 2 stderr"));
            out.put("knee", tab.knee);
            out.put("ceiling", tab.ceiling);
        }
        SweepKind::Dimension => {
            let params = fiber(cfg)?;
            let n_grid = o.n_grid.clone().unwrap_or_else(|| vec![2, 4, 8, 16]);
            let p_fixed = *sw.p_grid.last().expect("validated");
            let rows =
                dimension_sweep(params, p_fixed, &n_grid, sw.trials_per_point, sw.input_law, sw.k, root)?;
            let mut t = Table::new("dimension", &["n", "mi_nats", "per_dof", "stderr"]);
            for r in &rows {
                t.push(vec![r.n.into(), r.mi.into(), r.per_dof.into(), r.stderr.into()]);
            }
            out.tables.push(t);
            let falling = rows.windows(2).all(|w| w[1].per_dof < w[0].per_dof);
            out.checks.push(Check::new("per_dof_decreasing", falling, 0.0, 0.0, "strict along n"));
            let mis: Vec<f64> = rows.iter().map(|r| r.mi).collect();
            let ratio = mis.iter().cloned().fold(0.0, f64::max) / mis.iter().cloned().fold(f64::INFINITY, f64::min);
            out.checks.push(Check::new("total_mi_ratio", ratio <= 2.0, ratio, 2.0, "max / min of n * per-DOF MI"));
        }
        SweepKind::PhaseUniformity => {
            let params = *zd(cfg)?;
            let sim = ZdSimulator::new(params, o.sub_steps, PhaseRule::Trapezoid)?;
            let r_grid: Vec<f64> = sw.p_grid.iter().map(|p| p.sqrt()).collect();
            let tab = phase_uniformity_sweep(&sim, &r_grid, sw.trials_per_point, 0.01, root)?;
            let mut t = Table::new("uniformity", &["P_watts", "r_x", "ks_distance", "tail_bound"]);
            for i in 0..r_grid.len() {
                t.push(vec![sw.p_grid[i].into(), r_grid[i].into(), tab.distance[i].into(), tab.tail_bound[i].into()]);
            }
            out.tables.push(t);
            out.checks.extend(uniformity_checks(&tab));
            out.put("mc_threshold", tab.mc_threshold);
            out.put("analytic_threshold", tab.analytic_threshold);
        }
    }
    out.put("kind", format!("{kind:?}"));
    Ok(out)
}

/// Monotonicity within twice the Monte Carlo scale, the level at the top
/// point and agreement of the two threshold locations.
pub fn uniformity_checks(tab: &crate::experiments::UniformityTable) -> Vec<Check> {
    let mut worst = 0.0f64;
    for w in tab.distance.windows(2) {
        worst = worst.max(w[1] - w[0] - 2.0 * tab.noise);
    }
    let top = *tab.distance.last().expect("non-empty grid");
    let agree = match (tab.mc_threshold, tab.analytic_threshold) {
        (Some(a), Some(b)) => a.abs_diff(b) <= 1,
        _ => false,
    };
    let gap = match (tab.mc_threshold, tab.analytic_threshold) {
        (Some(a), Some(b)) => a.abs_diff(b) as f64,
        _ => f64::INFINITY,
    };
    vec![
        Check::new("distance_non_increasing", worst <= 0.0, worst, 0.0, "largest rise beyond 2 / sqrt(trials)"),
        Check::new("distance_top", top < 0.01, top, 0.01, "KS distance at the top point"),
        Check::new("threshold_agreement", agree, gap, 1.0, "grid steps between MC and tail-bound thresholds"),
    ]
}

fn default_direction(n: usize) -> ComplexVector {
    let v: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0 + k as f64, 0.7 * k as f64)).collect();
    ComplexVector::new(v).expect("finite")
}

fn normalized(v: ComplexVector) -> Result<ComplexVector, CliError> {
    let r = v.norm();
    if !(r > 0.0) {
        return Err(CliError::Config("options.direction: must be nonzero".into()));
    }
    Ok(v.scale(Complex64::new(1.0 / r, 0.0)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityOptions {
    #[serde(default = "default_n_values")]
    n_values: Vec<usize>,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    norm_bins: Option<usize>,
}

fn default_n_values() -> Vec<usize> {
    vec![1, 2]
}

fn default_samples() -> usize {
    400_000
}

fn default_k() -> usize {
    DEFAULT_K
}

fn identity(cfg: &RunConfig, root: &RngStream) -> Result<Outcome, CliError> {
    let o: IdentityOptions = options(cfg)?;
    let conditioning = match o.norm_bins {
        Some(b) => Conditioning::NormBins(b),
        None => Conditioning::Isotropic,
    };
    let mut out = Outcome::new();
    let mut t = Table::new(
        "identity",
        &["n", "joint", "norm_entropy", "spherical", "mean_log_norm", "residual", "uniform_spherical", "log_area"],
    );
    for (i, &n) in o.n_values.iter().enumerate() {
        let c = identity_check(n, o.samples, conditioning, o.k, &root.substream(i as u64))?;
        let r = c.report;
        t.push(vec![
            n.into(),
            r.joint.into(),
            r.norm_entropy.into(),
            r.spherical.into(),
            r.mean_log_norm.into(),
            r.residual.into(),
            c.uniform_spherical.into(),
            c.log_area.into(),
        ]);
        out.checks.push(Check::new(&format!("residual_n{n}"), r.residual.abs() <= 0.05, r.residual, 0.05, "nats"));
        let err = c.uniform_spherical - c.log_area;
        out.checks.push(Check::new(&format!("spherical_n{n}"), err.abs() <= 0.03, err, 0.03, "h - log A_n"));
    }
    out.tables.push(t);
    Ok(out)
}

/// Runs the command without touching the file system.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let root = RngStream::new(cfg.master_seed, 0);
    with_workers(cfg.workers, || match cfg.command {
        Command::Simulate => simulate(cfg, &root),
        Command::ZdPdf => zd_pdf(cfg),
        Command::CheckInequalities => check_inequalities(cfg, &root),
        Command::FadingReport => fading_report(cfg, &root),
        Command::Escape => escape(cfg, &root),
        Command::Sweep => sweep(cfg, &root),
        Command::IdentityCheck => identity(cfg, &root),
    })?
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputDigest, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(OutputDigest {
        file: name.into(),
        sha256: Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }),
        bytes: bytes.len() as u64,
    })
}

/// Executes and writes `*.csv`, `summary.json` and `manifest.json`.
pub fn run(cfg: &RunConfig) -> Result<(Outcome, RunManifest), CliError> {
    let outcome = execute(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut outputs = Vec::new();
    for t in &outcome.tables {
        outputs.push(write(dir, &format!("{}.csv", t.name), t.to_csv().as_bytes())?);
    }
    let summary = json!({
        "command": cfg.command,
        "master_seed": cfg.master_seed,
        "results": outcome.summary,
        "checks": outcome.checks,
        "passed": outcome.passed(),
    });
    let text = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";
    outputs.push(write(dir, "summary.json", text.as_bytes())?);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: cfg.clone(),
        outputs,
        passed: outcome.passed(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
    write(dir, "manifest.json", text.as_bytes())?;
    Ok((outcome, manifest))
}

/// Entry point shared by the binary and the tests; returns the exit status.
pub fn main_with<I, T>(args: I, env_workers: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let flags = Overrides { seed: args.seed, workers: args.workers, out: args.out.clone() };
    let result = parse_config(args.command, args.config.as_deref(), &flags, env_workers).and_then(|cfg| run(&cfg));
    match result {
        Ok((outcome, manifest)) => {
            for c in &outcome.checks {
                println!("{} {} value={:e} threshold={:e} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold, c.detail);
            }
            println!("outputs written to {}", manifest.config.output_dir.display());
            if outcome.passed() {
                EXIT_OK
            } else {
                EXIT_ASSERTION
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
