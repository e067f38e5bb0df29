//! The `frametop` command line.
//!
//! Every command writes its reports under `--out-dir` and prints a short
//! JSON summary on stdout. Errors go to stderr as
//! `{"error": kind, "message": ..}`; the exit code is 2 for domain errors
//! (bad input, infeasible data) and 1 for internal failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::acceptance::{self, DEFAULT_SEED};
use crate::error::{FrameError, Result};
use crate::flow::{self, FlowConfig, FlowMethod};
use crate::hermitian::{self, Frame, ProjectionMatrix, TOL_ALG};
use crate::homotopy::{self, GridPoint, HomotopyConfig, ProjectionPath};
use crate::io::{self, LoopSamples, Provenance};
use crate::polytope::{self, NormVector, TOL_POLY};
use crate::rng;
use crate::schur_horn;
use crate::strata;

#[derive(Debug, Parser)]
#[command(name = "frametop", version, about = "Frames with prescribed norms: synthesis, flows, strata and loops")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    #[arg(long, global = true, env = "FRAMETOP_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Tolerance for frame and projection invariants.
    #[arg(long, global = true, default_value_t = TOL_ALG, value_parser = positive)]
    pub tol_alg: f64,
    /// Flow success threshold on f.
    #[arg(long, global = true, value_parser = positive)]
    pub f_tol: Option<f64>,
    /// Flow criticality threshold on the gradient norm.
    #[arg(long, global = true, value_parser = positive)]
    pub grad_tol: Option<f64>,
    #[arg(long, global = true, default_value = ".")]
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a frame with squared column norms d.
    Construct(ConstructArgs),
    /// Report polytope membership and the subset-sum hypothesis for d.
    Check(CheckArgs),
    /// Enumerate the critical strata of |mu - d|^2 as CSV.
    Strata(StrataArgs),
    /// Flow a projection down to the level set over d.
    Retract(RetractArgs),
    /// Join two frames with the same norms by a path of such frames.
    Connect(ConnectArgs),
    /// Try to contract a loop inside the level set over d.
    ContractLoop(ContractArgs),
    /// Winding invariant of a loop in a circle or torus fiber.
    Winding(WindingArgs),
    /// Run the acceptance suite.
    Acceptance(AcceptanceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NormArgs {
    /// Squared norms: comma-separated, inline JSON, or a JSON file.
    #[arg(long)]
    pub d: String,
    /// Frame rank (default: the rounded sum of d).
    #[arg(long)]
    pub k: Option<usize>,
}

impl NormArgs {
    fn parse(&self) -> Result<NormVector> {
        io::parse_norm_vector(&self.d, self.k)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConstructArgs {
    #[command(flatten)]
    pub norms: NormArgs,
    #[arg(long, default_value = "frame.json")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub norms: NormArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StrataArgs {
    #[command(flatten)]
    pub norms: NormArgs,
    #[arg(long, default_value_t = strata::MAX_ENUM_N)]
    pub max_n: usize,
    #[arg(long, default_value = "strata.csv")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Gradient,
    GaussNewton,
}

impl From<MethodArg> for FlowMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gradient => FlowMethod::Gradient,
            MethodArg::GaussNewton => FlowMethod::GaussNewton,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("start").required(true).args(["frame", "projection", "random"])))]
pub struct RetractArgs {
    /// Start from the Gram projection of this frame.
    #[arg(long)]
    pub frame: Option<PathBuf>,
    #[arg(long)]
    pub projection: Option<PathBuf>,
    /// Start from a Haar-random projection.
    #[arg(long)]
    pub random: bool,
    #[command(flatten)]
    pub norms: NormArgs,
    #[arg(long, value_parser = positive)]
    pub step0: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::Gradient)]
    pub method: MethodArg,
    #[arg(long, default_value = "retract.json")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Per-iteration trace (iter, f, gradnorm, step).
    #[arg(long, default_value = "retract_trace.csv")]
    #[serde(skip)]
    pub trace: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConnectArgs {
    #[arg(long)]
    pub f0: PathBuf,
    #[arg(long)]
    pub f1: PathBuf,
    #[command(flatten)]
    pub norms: NormArgs,
    /// Geodesic samples per path segment.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value = "connect.json")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value = "connect.csv")]
    #[serde(skip)]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["loop_file", "random"])))]
pub struct ContractArgs {
    /// Loop file `{"d": .., "samples": [..]}`.
    #[arg(long = "loop")]
    pub loop_file: Option<PathBuf>,
    /// Use a random loop of the given radius around a random point.
    #[arg(long)]
    pub random: bool,
    /// Squared norms (required unless the loop file has them).
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.2, value_parser = positive)]
    pub radius: f64,
    /// Samples `T` along the loop.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Contraction steps `S`.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Append the first sample to a loop file whose endpoint is not repeated.
    #[arg(long)]
    pub close: bool,
    #[arg(long, default_value = "contract.json")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value = "contract.csv")]
    #[serde(skip)]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindingMode {
    /// Relative phase of a 1x2 frame loop.
    Cp1,
    /// Two relative phases of a loop over (1/3, 1/3, 1/3, 1).
    #[value(alias = "ex53")]
    Torus,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WindingArgs {
    #[arg(long = "loop")]
    pub loop_file: PathBuf,
    #[arg(long, value_enum)]
    pub mode: WindingMode,
    #[arg(long, default_value = "winding.json")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value = "winding.csv")]
    #[serde(skip)]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AcceptanceArgs {
    /// Criterion ids or name prefixes (repeatable).
    #[arg(long)]
    pub only: Vec<String>,
    #[arg(long, default_value = "acceptance.csv")]
    #[serde(skip)]
    pub out: PathBuf,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("{x} is not a positive finite number")),
        Err(e) => Err(e.to_string()),
    }
}

/// Parse arguments, run, and map errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(if e.is_internal() { 1 } else { 2 })
        }
    }
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| FrameError::Io(format!("thread pool: {e}")))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Construct(a) => construct(g, a),
        Command::Check(a) => check(g, a),
        Command::Strata(a) => strata_cmd(g, a),
        Command::Retract(a) => retract(g, a),
        Command::Connect(a) => connect(g, a),
        Command::ContractLoop(a) => contract(g, a),
        Command::Winding(a) => winding(g, a),
        Command::Acceptance(a) => acceptance_cmd(g, a),
    }
}

fn flow_config(g: &GlobalArgs, base: FlowConfig) -> FlowConfig {
    FlowConfig {
        f_tol: g.f_tol.unwrap_or(base.f_tol),
        grad_tol: g.grad_tol.unwrap_or(base.grad_tol),
        ..base
    }
}

fn provenance<A: Serialize>(g: &GlobalArgs, command: &str, args: &A, extra: Value) -> Provenance {
    let mut config = json!({ "command": command, "global": g, "args": args });
    if let (Value::Object(map), Value::Object(more)) = (&mut config, extra) {
        map.extend(more);
    }
    Provenance::new(g.seed, config)
}

fn output(g: &GlobalArgs, file: &Path) -> Result<PathBuf> {
    fs::create_dir_all(&g.out_dir).map_err(|e| FrameError::Io(format!("{}: {e}", g.out_dir.display())))?;
    Ok(g.out_dir.join(file))
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("summary serializes"));
}

fn level_residual(p: &ProjectionMatrix, d: &NormVector) -> Result<f64> {
    let mu = flow::moment_map(p)?;
    Ok(mu.iter().zip(d.d()).map(|(m, x)| (m - x).abs()).fold(0.0, f64::max))
}

fn construct(g: &GlobalArgs, a: &ConstructArgs) -> Result<ExitCode> {
    let d = a.norms.parse()?;
    let frame = schur_horn::construct_frame(&d, g.seed)?;
    let report = schur_horn::verify_membership(&frame, &d, g.tol_alg)?;
    let path = output(g, &a.out)?;
    let prov = provenance(g, "construct", a, json!({}));
    io::write_json(
        &path,
        &prov.wrap(json!({
            "d": io::norm_vector_to_json(&d),
            "frame": io::frame_to_json(&frame),
            "membership": report,
        })),
    )?;
    print(&json!({
        "out": path.display().to_string(),
        "tight_residual": report.tight_residual,
        "max_norm_residual": report.max_norm_residual,
        "passed": report.passed,
    }));
    Ok(ExitCode::SUCCESS)
}

fn check(g: &GlobalArgs, a: &CheckArgs) -> Result<ExitCode> {
    let (values, k_in) = io::parse_values(&a.norms.d)?;
    let sum: f64 = values.iter().sum();
    let k = a.norms.k.or(k_in).unwrap_or(if sum.is_finite() && sum > 0.0 { sum.round() as usize } else { 0 });
    let n = values.len();
    let inside = polytope::in_polytope(&values, k, TOL_POLY);
    let (hypothesis, min_sum) = if inside {
        let d = NormVector::new(values, k)?;
        (polytope::satisfies_hypothesis(&d), Some(polytope::min_subset_sum(&d)))
    } else {
        (false, None)
    };
    let prov = provenance(g, "check", a, json!({}));
    print(&prov.wrap(json!({
        "in_polytope": inside,
        "satisfies_hypothesis": hypothesis,
        "n": n,
        "k": k,
        "min_subset_sum": min_sum,
    })));
    Ok(ExitCode::SUCCESS)
}

fn strata_cmd(g: &GlobalArgs, a: &StrataArgs) -> Result<ExitCode> {
    let d = a.norms.parse()?;
    if d.n() > a.max_n {
        return Err(FrameError::TooLarge(format!("n = {} exceeds --max-n {}", d.n(), a.max_n)));
    }
    let descriptors = strata::enumerate_strata(&d)?;
    let rows: Vec<Vec<String>> = descriptors
        .iter()
        .map(|s| {
            vec![
                s.blocks.iter().map(|b| io::join(b)).collect::<Vec<_>>().join(";"),
                s.capacities.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"),
                io::join_floats(&s.levels, ";"),
                io::join_floats(&s.a, " "),
                s.codim_complex.to_string(),
                io::float(s.energy_level()),
            ]
        })
        .collect();
    let path = output(g, &a.out)?;
    let prov = provenance(g, "strata", a, json!({ "d": io::norm_vector_to_json(&d) }));
    io::write_csv(
        &path,
        &prov,
        &["blocks", "capacities", "alphas", "a_vector", "codim_complex", "energy_level"],
        &rows,
    )?;
    print(&json!({
        "out": path.display().to_string(),
        "descriptors": descriptors.len(),
        "min_positive_codim": strata::min_positive_codim(&d)?,
    }));
    Ok(ExitCode::SUCCESS)
}

fn retract(g: &GlobalArgs, a: &RetractArgs) -> Result<ExitCode> {
    let d = a.norms.parse()?;
    let base = FlowConfig {
        method: a.method.into(),
        ..FlowConfig::default()
    };
    let cfg = FlowConfig {
        step0: a.step0.unwrap_or(base.step0),
        max_iter: a.max_iter.unwrap_or(base.max_iter),
        ..flow_config(g, base)
    };
    let p0 = if let Some(f) = &a.frame {
        hermitian::gram_projection(&io::load_frame(f)?)?
    } else if let Some(p) = &a.projection {
        io::load_projection(p)?
    } else {
        hermitian::random_projection(d.n(), d.k(), rng::derive_seed(g.seed, "cli-retract", 0))
    };
    let (p, trace) = flow::retract_to_level(&p0, &d, &cfg)?;
    let frame = hermitian::factor_projection(&p)?;
    let prov = provenance(g, "retract", a, json!({ "flow": cfg }));
    let out = output(g, &a.out)?;
    let trace_path = output(g, &a.trace)?;
    let summary = json!({
        "outcome": trace.outcome,
        "iterations": trace.iterates.len().saturating_sub(1),
        "final_f": trace.final_f(),
        "monotone": trace.is_monotone(),
        "level_residual": level_residual(&p, &d)?,
    });
    let mut body = summary.clone();
    body["d"] = io::norm_vector_to_json(&d);
    body["projection"] = io::projection_to_json(&p);
    body["frame"] = io::frame_to_json(&frame);
    io::write_json(&out, &prov.wrap(body))?;
    fs::write(&trace_path, format!("{}\n{}", prov.csv_comment(), trace.to_csv()))
        .map_err(|e| FrameError::Io(format!("{}: {e}", trace_path.display())))?;
    print(&summary);
    Ok(ExitCode::SUCCESS)
}

fn homotopy_config(g: &GlobalArgs, samples: Option<usize>, grid: Option<usize>) -> HomotopyConfig {
    let base = HomotopyConfig::default();
    HomotopyConfig {
        samples: samples.unwrap_or(base.samples).max(1),
        grid: grid.unwrap_or(base.grid).max(1),
        flow: flow_config(g, base.flow),
        ..base
    }
}

fn connect(g: &GlobalArgs, a: &ConnectArgs) -> Result<ExitCode> {
    let d = a.norms.parse()?;
    let f0 = io::load_frame(&a.f0)?;
    let f1 = io::load_frame(&a.f1)?;
    let cfg = homotopy_config(g, a.samples, None);
    let report = homotopy::connect_frames(&f0, &f1, &d, &cfg, g.seed)?;
    let mut rows = Vec::with_capacity(report.frames.len());
    for (i, f) in report.frames.iter().enumerate() {
        let m = schur_horn::verify_membership(f, &d, g.tol_alg)?;
        let step = if i == 0 { 0.0 } else { f.distance(&report.frames[i - 1]) };
        rows.push(vec![
            i.to_string(),
            if i < report.fiber_start { "lift" } else { "fiber" }.to_string(),
            io::float(m.tight_residual.max(m.max_norm_residual)),
            io::float(step),
        ]);
    }
    let prov = provenance(g, "connect", a, json!({ "homotopy": cfg }));
    let summary = json!({
        "success": report.success,
        "attempts": report.attempts,
        "frames": report.frames.len(),
        "fiber_start": report.fiber_start,
        "max_membership_residual": report.max_membership_residual,
        "max_frame_step": report.max_frame_step,
    });
    let mut body = summary.clone();
    body["d"] = io::norm_vector_to_json(&d);
    body["path"] = Value::Array(report.frames.iter().map(io::frame_to_json).collect());
    io::write_json(output(g, &a.out)?, &prov.wrap(body))?;
    io::write_csv(output(g, &a.csv)?, &prov, &["index", "segment", "membership_residual", "step"], &rows)?;
    print(&summary);
    Ok(ExitCode::SUCCESS)
}

fn contract(g: &GlobalArgs, a: &ContractArgs) -> Result<ExitCode> {
    let cfg = homotopy_config(g, a.samples, a.grid);
    let explicit = a.d.as_deref().map(|d| io::parse_norm_vector(d, a.k)).transpose()?;
    let (d, samples) = match &a.loop_file {
        Some(path) => {
            let file = io::loop_from_json(&io::read_json(path)?)?;
            let d = explicit
                .or(file.d.clone())
                .ok_or_else(|| FrameError::Parse("the loop file has no d; pass --d".into()))?;
            let mut samples = file.projections()?;
            if a.close && samples.first() != samples.last() {
                samples.push(samples[0].clone());
            }
            (d, samples)
        }
        None => {
            let d = explicit.ok_or_else(|| FrameError::Parse("a random loop needs --d".into()))?;
            let seed = rng::derive_seed(g.seed, "cli-loop", 0);
            let path = homotopy::random_level_loop(&d, a.radius, cfg.samples, seed, &cfg.flow)?;
            (d, path.samples)
        }
    };
    let path = ProjectionPath::on_level(samples, &d)?;
    let report = homotopy::contract_loop(&path, &d, &cfg)?;
    let mut rows = Vec::new();
    for (s, row) in report.grid.iter().enumerate() {
        for (t, point) in row.iter().enumerate() {
            let residual = match point {
                GridPoint::Retracted(p) => io::float(level_residual(p, &d)?),
                _ => String::new(),
            };
            rows.push(vec![s.to_string(), t.to_string(), point.status().to_string(), residual]);
        }
    }
    let prov = provenance(g, "contract-loop", a, json!({ "homotopy": cfg }));
    let summary = json!({
        "success": report.success,
        "critical_hits": report.critical_hits,
        "loop_samples": path.samples.len(),
        "loop_level_residual": path.max_level_residual,
        "max_level_residual": report.max_level_residual,
        "max_row_gap": report.max_row_gap,
        "max_row_step": report.max_row_step,
        "max_closure_gap": report.max_closure_gap,
    });
    let mut body = summary.clone();
    body["d"] = io::norm_vector_to_json(&d);
    io::write_json(output(g, &a.out)?, &prov.wrap(body))?;
    io::write_csv(output(g, &a.csv)?, &prov, &["s", "t", "status", "level_residual"], &rows)?;
    print(&summary);
    Ok(ExitCode::SUCCESS)
}

fn winding(g: &GlobalArgs, a: &WindingArgs) -> Result<ExitCode> {
    let file = io::loop_from_json(&io::read_json(&a.loop_file)?)?;
    let (invariant, rows) = match a.mode {
        WindingMode::Cp1 => {
            let frames: Vec<Frame> = match &file.samples {
                LoopSamples::Frames(f) => f.clone(),
                LoopSamples::Projections(p) => p.iter().map(hermitian::factor_projection).collect::<Result<_>>()?,
            };
            let invariant = homotopy::winding_cp1(&frames)?;
            let rows = frames
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let phase = (f.matrix()[(0, 1)] * f.matrix()[(0, 0)].conj()).arg();
                    vec![i.to_string(), io::float(phase)]
                })
                .collect::<Vec<_>>();
            (invariant, rows)
        }
        WindingMode::Torus => {
            let samples = file.projections()?;
            let invariant = homotopy::torus_invariant(&samples)?;
            let mut rows = Vec::with_capacity(samples.len());
            for (i, p) in samples.iter().enumerate() {
                let v = homotopy::torus_line(p, i)?;
                rows.push(vec![i.to_string(), io::float((v[1] / v[0]).arg()), io::float((v[2] / v[0]).arg())]);
            }
            (invariant, rows)
        }
    };
    let header: &[&str] = match a.mode {
        WindingMode::Cp1 => &["index", "phase"],
        WindingMode::Torus => &["index", "phase_2", "phase_3"],
    };
    let prov = provenance(g, "winding", a, json!({}));
    let summary = json!({ "mode": a.mode, "samples": rows.len(), "winding": invariant.components });
    io::write_json(output(g, &a.out)?, &prov.wrap(summary.clone()))?;
    io::write_csv(output(g, &a.csv)?, &prov, header, &rows)?;
    print(&summary);
    Ok(ExitCode::SUCCESS)
}

fn acceptance_cmd(g: &GlobalArgs, a: &AcceptanceArgs) -> Result<ExitCode> {
    let mut results = Vec::new();
    for &(id, name) in &acceptance::CRITERIA {
        if acceptance::selected(id, name, &a.only) {
            let r = acceptance::run_criterion(id, g.seed);
            println!("{}", r.line());
            results.push(r);
        }
    }
    if results.is_empty() {
        return Err(FrameError::Parse(format!("--only {:?} selects no criterion", a.only)));
    }
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                r.name.to_string(),
                if r.passed { "pass" } else { "fail" }.to_string(),
                format!("{:.3}", r.seconds),
                r.detail.clone(),
            ]
        })
        .collect();
    let prov = provenance(g, "acceptance", a, json!({}));
    let path = output(g, &a.out)?;
    io::write_csv(&path, &prov, &["id", "name", "result", "seconds", "detail"], &rows)?;
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed; table in {}", results.len(), path.display());
    Ok(if passed == results.len() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
