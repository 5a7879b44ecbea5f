use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    assess, default_theta_set, penetration_metrics, plot_data_csv, summary_json, tube_csv,
    tube_from_csv, Assessment, AssessmentConfig, Coupling, EngineError, FlexTube, Mode, Summary,
};
use crate::milp::{backend_from_env, MilpBackend, SOLVER_ENV};
use crate::network::{load_model, validate, ModelError, NetworkModel};
use crate::pqbox::{boundary_csv, cross_section, tube_box, ExpandOptions, InitCase, PqBoxError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Empty(_) => EXIT_EMPTY,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Backend { .. } | EngineError::Milp(_) | EngineError::Unbounded { .. } => {
                CliError::Backend(e.to_string())
            }
            EngineError::EmptyTube => CliError::Empty(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<PqBoxError> for CliError {
    fn from(e: PqBoxError) -> Self {
        match e {
            PqBoxError::Engine(e) => e.into(),
            PqBoxError::NoFeasibleDirection(_) => CliError::Empty(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ctflex",
    version,
    about = "Continuous-time P/Q flexibility at the transmission-distribution interface"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve every direction and write the flexibility tube.
    Assess(AssessArgs),
    /// Decoupled P/Q box at one instant.
    Pqbox(PqboxArgs),
    /// Sweep α, PV scaling and device toggles, reporting M, K1 and K2.
    Metrics(MetricsArgs),
    /// Continuous-time and piecewise-constant tubes side by side.
    CompareDt(AssessArgs),
    /// Check a model file and list every broken rule.
    Validate { model: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ct,
    Dt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingArg {
    Joint,
    Sequential,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "ct")]
    pub mode: ModeArg,
    /// Directions sampled in [0, π); antipodes are added.
    #[arg(long, default_value_t = 12)]
    pub directions: usize,
    /// Comma-separated angles for M, e.g. `0,pi/3,2pi/3`; `default` is the six multiples of π/3.
    #[arg(long, default_value = "default")]
    pub theta_set: String,
    /// Overrides the model's chance-constraint risk level.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub gap: f64,
    /// Per-subproblem limit in seconds.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    /// Worker threads; defaults to the logical core count.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "joint")]
    pub coupling: CouplingArg,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AssessArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PqboxArgs {
    /// Model to assess; omit when `--tube-dir` is given.
    pub model: Option<PathBuf>,
    /// Directory holding `tube.csv` and `summary.json` from an earlier run.
    #[arg(long, conflicts_with = "model")]
    pub tube_dir: Option<PathBuf>,
    /// Instant in seconds.
    #[arg(long)]
    pub time: f64,
    /// Initial step; defaults to 5% of the largest boundary radius.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Freeze tolerance; defaults to 1e-4 of the largest boundary radius.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Extra membership checks per box edge.
    #[arg(long, default_value_t = 0)]
    pub edge_samples: usize,
    /// Also write the cross-section boundary with this many angles.
    #[arg(long, default_value_t = 0)]
    pub boundary_samples: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    pub model: PathBuf,
    /// Comma-separated α values; defaults to the model's α.
    #[arg(long)]
    pub alphas: Option<String>,
    /// Comma-separated PV forecast multipliers.
    #[arg(long, default_value = "1")]
    pub pv_scales: String,
    /// Also evaluate every cell without soft open points.
    #[arg(long)]
    pub toggle_sop: bool,
    /// Also evaluate every cell without storage.
    #[arg(long)]
    pub toggle_ess: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Parses `1.2`, `pi`, `pi/3`, `2pi/3` or `-pi/2`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let Some((head, tail)) = t.split_once("pi") else {
        return t.parse().map_err(|_| format!("bad angle {s:?}"));
    };
    let k = match head.trim_end_matches('*') {
        "" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| format!("bad angle {s:?}"))?,
    };
    let d = match tail {
        "" => 1.0,
        t => t
            .strip_prefix('/')
            .and_then(|d| d.parse::<f64>().ok())
            .filter(|d| *d != 0.0)
            .ok_or_else(|| format!("bad angle {s:?}"))?,
    };
    Ok(k * PI / d)
}

pub fn parse_theta_set(s: &str) -> Result<Vec<f64>, String> {
    if s.trim() == "default" {
        return Ok(default_theta_set());
    }
    let v = parse_list(s, parse_angle)?;
    if v.is_empty() {
        return Err("empty θ set".into());
    }
    Ok(v)
}

fn parse_list(s: &str, f: impl Fn(&str) -> Result<f64, String>) -> Result<Vec<f64>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(f)
        .collect()
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("bad number {s:?}"))
}

impl RunArgs {
    pub fn config(&self) -> Result<AssessmentConfig, CliError> {
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(CliError::Input(format!(
                "time limit must be positive, got {}",
                self.time_limit
            )));
        }
        let base = AssessmentConfig::default();
        let cfg = AssessmentConfig {
            directions: self.directions,
            mode: match self.mode {
                ModeArg::Ct => Mode::Ct,
                ModeArg::Dt => Mode::Dt,
            },
            mip_gap: self.gap,
            time_limit: Duration::from_secs_f64(self.time_limit),
            workers: self.workers.unwrap_or(base.workers),
            coupling: match self.coupling {
                CouplingArg::Joint => Coupling::Joint,
                CouplingArg::Sequential => Coupling::Sequential,
            },
            seed: self.seed,
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The explicit θ set, or `None` for the default.
    fn theta_set(&self) -> Result<Option<Vec<f64>>, CliError> {
        if self.theta_set.trim() == "default" {
            return Ok(None);
        }
        parse_theta_set(&self.theta_set)
            .map(Some)
            .map_err(CliError::Input)
    }

    fn echo(&self, cfg: &AssessmentConfig) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("mode", format!("{:?}", self.mode).to_lowercase()),
            ("directions", cfg.directions.to_string()),
            ("theta_set", self.theta_set.clone()),
            (
                "alpha",
                self.alpha.map_or("model".into(), |a| a.to_string()),
            ),
            ("gap", cfg.mip_gap.to_string()),
            ("time_limit_s", cfg.time_limit.as_secs_f64().to_string()),
            ("workers", cfg.workers.to_string()),
            ("seed", cfg.seed.to_string()),
            ("coupling", format!("{:?}", self.coupling).to_lowercase()),
        ])
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<String>,
    pub backend: String,
    pub config: BTreeMap<&'static str, String>,
    pub stage_wall_times_s: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub created_unix_s: u64,
}

impl RunManifest {
    fn new(command: &str, inputs: Vec<String>, config: BTreeMap<&'static str, String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            inputs,
            backend: std::env::var(SOLVER_ENV).unwrap_or_else(|_| "highs".into()),
            config,
            stage_wall_times_s: BTreeMap::new(),
            warnings: Vec::new(),
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    fn stage(&mut self, name: &str, started: Instant) {
        self.stage_wall_times_s
            .insert(name.into(), started.elapsed().as_secs_f64());
    }

    fn tube_warnings(&mut self, label: &str, tube: &FlexTube) {
        for s in tube.slices.iter().filter(|s| !s.status.is_feasible()) {
            self.warnings.push(format!(
                "{label}direction {:.6} rad: {}",
                s.theta,
                s.status.label()
            ));
        }
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    write_file(dir, name, &(text + "\n"))
}

fn read_model(path: &Path, alpha: Option<f64>) -> Result<NetworkModel, CliError> {
    let model = load_model(path)?;
    let model = match alpha {
        Some(a) => model.with_alpha(a),
        None => model,
    };
    let problems = validate(&model);
    if !problems.is_empty() {
        return Err(ModelError::Invalid(problems).into());
    }
    Ok(model)
}

fn backend() -> Result<Box<dyn MilpBackend>, CliError> {
    backend_from_env().map_err(|e| CliError::Backend(e.to_string()))
}

fn run_assessment(
    model: &NetworkModel,
    cfg: &AssessmentConfig,
    backend: &dyn MilpBackend,
) -> Result<Assessment, CliError> {
    let a = assess(model, cfg, backend)?;
    if a.tube.gap_count() == a.tube.slices.len() {
        return Err(CliError::Empty("every direction is infeasible".into()));
    }
    Ok(a)
}

/// The default set is the multiples of π/3 when all of them were sampled and
/// every sampled direction otherwise.
pub fn resolve_theta_set(explicit: Option<Vec<f64>>, tube: &FlexTube) -> Vec<f64> {
    explicit.unwrap_or_else(|| {
        let d = default_theta_set();
        if d.iter().all(|&t| tube.find(t).is_some()) {
            d
        } else {
            tube.directions()
        }
    })
}

fn summary(
    a: &Assessment,
    model: &NetworkModel,
    mode: &str,
    thetas: &Option<Vec<f64>>,
) -> Result<Summary, CliError> {
    let pen = penetration_metrics(model).ok();
    let thetas = resolve_theta_set(thetas.clone(), &a.tube);
    Ok(summary_json(
        &a.tube,
        mode,
        &thetas,
        pen,
        a.wall_time.as_secs_f64(),
    )?)
}

fn cmd_assess(args: &AssessArgs) -> Result<(), CliError> {
    let cfg = args.run.config()?;
    let thetas = args.run.theta_set()?;
    let mut manifest = RunManifest::new(
        "assess",
        vec![args.model.display().to_string()],
        args.run.echo(&cfg),
    );
    let t = Instant::now();
    let model = read_model(&args.model, args.run.alpha)?;
    manifest.stage("load", t);
    let backend = backend()?;
    let t = Instant::now();
    let a = run_assessment(&model, &cfg, backend.as_ref())?;
    manifest.stage("assess", t);
    manifest.tube_warnings("", &a.tube);
    let t = Instant::now();
    let mode = format!("{:?}", args.run.mode).to_lowercase();
    let out = &args.run.out;
    write_file(out, "tube.csv", &tube_csv(&a.tube))?;
    write_json(out, "summary.json", &summary(&a, &model, &mode, &thetas)?)?;
    write_file(out, "plot_data.csv", &plot_data_csv(&a.tube, 72, 15))?;
    manifest.stage("write", t);
    write_json(out, "manifest.json", &manifest)
}

fn load_tube_dir(dir: &Path) -> Result<FlexTube, CliError> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))
    };
    let summary: Summary = serde_json::from_str(&read("summary.json")?)
        .map_err(|e| CliError::Input(format!("malformed summary.json: {e}")))?;
    Ok(tube_from_csv(&read("tube.csv")?, summary.horizon())?)
}

fn cmd_pqbox(args: &PqboxArgs) -> Result<(), CliError> {
    let cfg = args.run.config()?;
    let (input, tube, mut manifest) = match (&args.model, &args.tube_dir) {
        (Some(path), None) => {
            let mut manifest = RunManifest::new(
                "pqbox",
                vec![path.display().to_string()],
                args.run.echo(&cfg),
            );
            let model = read_model(path, args.run.alpha)?;
            let t = Instant::now();
            let a = assess(&model, &cfg, backend()?.as_ref())?;
            manifest.stage("assess", t);
            manifest.tube_warnings("", &a.tube);
            (path.clone(), a.tube, manifest)
        }
        (None, Some(dir)) => {
            let manifest = RunManifest::new(
                "pqbox",
                vec![dir.display().to_string()],
                args.run.echo(&cfg),
            );
            (dir.clone(), load_tube_dir(dir)?, manifest)
        }
        _ => {
            return Err(CliError::Input(
                "give either a model file or --tube-dir".into(),
            ))
        }
    };
    let t = Instant::now();
    let cs = cross_section(&tube, args.time)?;
    let opts = match (args.delta, args.eps) {
        (None, None) if args.edge_samples == 0 => None,
        (d, e) => {
            let scaled = ExpandOptions::scaled(cs.max_radius());
            Some(ExpandOptions {
                delta: d.unwrap_or(scaled.delta),
                eps: e.unwrap_or(scaled.eps),
                edge_samples: args.edge_samples,
                ..scaled
            })
        }
    };
    let report = tube_box(&tube, args.time, opts)?;
    manifest.stage("pqbox", t);
    if report.start.case != InitCase::AllDirections {
        let msg = format!(
            "{}: largest feasible piece does not cover every direction at t = {}",
            input.display(),
            args.time
        );
        warn!("{msg}");
        manifest.warnings.push(msg);
    }
    let out = &args.run.out;
    write_json(out, "box.json", &report.pq_box)?;
    if args.boundary_samples > 0 {
        write_file(
            out,
            "boundary.csv",
            &boundary_csv(&cs, args.boundary_samples),
        )?;
    }
    write_json(out, "manifest.json", &manifest)
}

#[derive(Debug, Serialize)]
struct MetricsRow {
    alpha: f64,
    pv_scale: f64,
    sop: bool,
    ess: bool,
    m: f64,
    k1: Option<f64>,
    k2: Option<f64>,
    gaps: usize,
}

fn cmd_metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let cfg = args.run.config()?;
    let thetas = args.run.theta_set()?;
    let mut manifest = RunManifest::new(
        "metrics",
        vec![args.model.display().to_string()],
        args.run.echo(&cfg),
    );
    let base = read_model(&args.model, args.run.alpha)?;
    let alphas = match &args.alphas {
        Some(s) => parse_list(s, parse_number).map_err(CliError::Input)?,
        None => vec![base.uncertainty.alpha],
    };
    let scales = parse_list(&args.pv_scales, parse_number).map_err(CliError::Input)?;
    if alphas.is_empty() || scales.is_empty() {
        return Err(CliError::Input("empty parameter grid".into()));
    }
    let sop = if args.toggle_sop {
        vec![true, false]
    } else {
        vec![true]
    };
    let ess = if args.toggle_ess {
        vec![true, false]
    } else {
        vec![true]
    };
    let backend = backend()?;
    let mut rows = Vec::new();
    let t = Instant::now();
    for &alpha in &alphas {
        for &scale in &scales {
            for &with_sop in &sop {
                for &with_ess in &ess {
                    let mut model = base.with_alpha(alpha).with_pv_scale(scale);
                    if !with_sop {
                        model = model.without_sop();
                    }
                    if !with_ess {
                        model = model.without_ess();
                    }
                    if !validate(&model).is_empty() {
                        return Err(CliError::Input(format!(
                            "grid cell α = {alpha}, scale = {scale} is invalid"
                        )));
                    }
                    let a = assess(&model, &cfg, backend.as_ref())?;
                    let pen = penetration_metrics(&model).ok();
                    let gaps = a.tube.gap_count();
                    if gaps > 0 {
                        manifest.warnings.push(format!(
                            "α = {alpha}, scale = {scale}, sop = {with_sop}, ess = {with_ess}: {gaps} gaps"
                        ));
                    }
                    rows.push(MetricsRow {
                        alpha,
                        pv_scale: scale,
                        sop: with_sop,
                        ess: with_ess,
                        m: crate::engine::metric_m(
                            &a.tube,
                            &resolve_theta_set(thetas.clone(), &a.tube),
                        )?,
                        k1: pen.map(|p| p.k1),
                        k2: pen.and_then(|p| p.k2),
                        gaps,
                    });
                }
            }
        }
    }
    manifest.stage("sweep", t);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| CliError::Input(e.to_string()))?)
        .expect("CSV is UTF-8");
    write_file(&args.run.out, "metrics.csv", &text)?;
    write_json(&args.run.out, "manifest.json", &manifest)
}

fn cmd_compare_dt(args: &AssessArgs) -> Result<(), CliError> {
    let cfg = args.run.config()?;
    let thetas = args.run.theta_set()?;
    let mut manifest = RunManifest::new(
        "compare-dt",
        vec![args.model.display().to_string()],
        args.run.echo(&cfg),
    );
    let model = read_model(&args.model, args.run.alpha)?;
    let backend = backend()?;
    let out = &args.run.out;
    let mut tubes = Vec::new();
    for (mode, label) in [(Mode::Ct, "ct"), (Mode::Dt, "dt")] {
        let t = Instant::now();
        let a = run_assessment(
            &model,
            &AssessmentConfig {
                mode,
                ..cfg.clone()
            },
            backend.as_ref(),
        )?;
        manifest.stage(label, t);
        manifest.tube_warnings(&format!("{label} "), &a.tube);
        write_file(out, &format!("tube_{label}.csv"), &tube_csv(&a.tube))?;
        write_json(
            out,
            &format!("summary_{label}.json"),
            &summary(&a, &model, label, &thetas)?,
        )?;
        write_file(
            out,
            &format!("plot_data_{label}.csv"),
            &plot_data_csv(&a.tube, 72, 15),
        )?;
        tubes.push(a.tube);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let rows = (|| -> csv::Result<()> {
        w.write_record(["theta", "ct_objective", "dt_objective", "difference"])?;
        for (c, d) in tubes[0].slices.iter().zip(&tubes[1].slices) {
            let diff = c.objective().zip(d.objective()).map(|(a, b)| a - b);
            w.write_record([
                c.theta.to_string(),
                fmt(c.objective()),
                fmt(d.objective()),
                fmt(diff),
            ])?;
        }
        Ok(())
    })();
    rows.map_err(|e| CliError::Input(e.to_string()))?;
    let text = String::from_utf8(w.into_inner().map_err(|e| CliError::Input(e.to_string()))?)
        .expect("CSV is UTF-8");
    write_file(out, "compare.csv", &text)?;
    write_json(out, "manifest.json", &manifest)
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let model = load_model(path)?;
    let problems = validate(&model);
    if problems.is_empty() {
        println!(
            "{}: valid ({} nodes, {} periods)",
            path.display(),
            model.nodes,
            model.periods()
        );
        Ok(())
    } else {
        for p in &problems {
            println!("{p}");
        }
        Err(CliError::Input(format!(
            "{}: {} problems",
            path.display(),
            problems.len()
        )))
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Assess(a) => cmd_assess(a),
        Command::Pqbox(a) => cmd_pqbox(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::CompareDt(a) => cmd_compare_dt(a),
        Command::Validate { model } => cmd_validate(model),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
