//! `randlu`: simulate randomized-measurement experiments, analyze count data
//! and certify CHSH violation, singlet fidelity and unitary randomness.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use randlu::bounds::{GridSpec, I3Policy, Method};
use randlu::estimators::Basis;
use randlu::formats::{parse_config, parse_dataset, parse_design_set, write_dataset, DesignSet};
use randlu::haar::{certify_states, certify_unitaries, DEFAULT_CONFIDENCE};
use randlu::invariants::compute_all;
use randlu::pipeline::{
    analyze, render_summary, replay_published, simulate, AnalysisOptions, CertificationReport, ExperimentConfig,
    StateSource,
};
use randlu::{Error, Result};

#[derive(Parser)]
#[command(name = "randlu", version, about = "Local-unitary invariants from randomized measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate shot data and write it as a dataset.
    Simulate(SimulateArgs),
    /// Analyze datasets (stdin when no file is given) into a JSON report.
    Analyze(AnalyzeArgs),
    /// Print the twelve invariants of a state preset or state file.
    Invariants(InvariantsArgs),
    /// Frame-potential randomness test of a unitary or state set.
    CertifyRandomness(RandomnessArgs),
    /// Certify from the published invariant intervals, no counts needed.
    #[command(name = "replay-paper")]
    ReplayPublished(ReplayArgs),
    /// Render a JSON report (stdin when no file is given) as text.
    Report(ReportArgs),
}

#[derive(Args)]
struct OutArg {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Confidence level of each invariant interval.
    #[arg(long, default_value_t = 0.9973)]
    gamma: f64,
    #[arg(long, default_value = "gauss")]
    method: Method,
    /// Grid points per axis of the region scan.
    #[arg(long, default_value_t = 41)]
    grid: usize,
    /// Zoom passes around the running minimum.
    #[arg(long, default_value_t = 1)]
    refinements: usize,
    /// Also impose the tetrahedron condition on the singular values.
    #[arg(long)]
    tetrahedron: bool,
    /// Print the text summary instead of JSON.
    #[arg(long)]
    summary: bool,
}

impl ScanArgs {
    fn grid(&self) -> GridSpec {
        GridSpec { resolution: self.grid, refinements: self.refinements, tetrahedron: self.tetrahedron }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat TOML experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// singlet, werner:P, paper-source or file:PATH.
    #[arg(long)]
    state: Option<StateSource>,
    #[arg(long)]
    visibility: Option<f64>,
    /// Settings per run.
    #[arg(long)]
    m: Option<usize>,
    /// Shots per basis per setting.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated bases, e.g. ZZ,XX,YY,YZ,ZY.
    #[arg(long, value_delimiter = ',')]
    bases: Option<Vec<Basis>>,
    #[arg(long, env = "RANDLU_SEED")]
    seed: Option<u64>,
    /// Insert a fixed unknown rotation in front of the detectors.
    #[arg(long)]
    misalignment: bool,
    /// Omit the applied unitaries from the output.
    #[arg(long)]
    no_unitaries: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    files: Vec<PathBuf>,
    #[command(flatten)]
    scan: ScanArgs,
    /// How the scanned I3 range is formed: measured, from-i2 or intersect.
    #[arg(long, default_value = "intersect")]
    i3_policy: I3Policy,
    /// Width of the per-setting I1 estimator range used by Hoeffding.
    #[arg(long)]
    i1_range: Option<f64>,
    /// Confidence of the frame-potential test on logged unitaries.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    randomness_confidence: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct InvariantsArgs {
    /// singlet, werner:P, paper-source, file:PATH or a path to a state file.
    state: String,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct RandomnessArgs {
    file: PathBuf,
    /// Design orders to test.
    #[arg(long, value_delimiter = ',', default_value = "2,4")]
    t: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    confidence: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    scan: ScanArgs,
    /// How the scanned I3 range is formed; Hoeffding always uses from-i2.
    #[arg(long, default_value = "from-i2")]
    i3_policy: I3Policy,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ReportArgs {
    file: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).with_context(format!("reading {}", path.display())))
}

fn read_stdin() -> Result<String> {
    let mut s = String::new();
    io::stdin().read_to_string(&mut s)?;
    Ok(s)
}

fn emit(out: &OutArg, text: &str) -> Result<()> {
    match &out.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Error::from(e).with_context(format!("writing {}", path.display())))
        }
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit_report(report: &CertificationReport, scan: &ScanArgs, out: &OutArg) -> Result<()> {
    let text = if scan.summary { render_summary(report) } else { to_json(report)? };
    emit(out, &text)
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => parse_config(&read_file(path)?).map_err(|e| e.with_context(path.display().to_string()))?,
        None => ExperimentConfig::new(a.state.clone().unwrap_or(StateSource::Singlet)),
    };
    if let Some(s) = a.state {
        cfg.state = s;
    }
    if let Some(v) = a.visibility {
        cfg.visibility = v;
    }
    if let Some(m) = a.m {
        cfg.m = m;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(r) = a.runs {
        cfg.runs = r;
    }
    if let Some(b) = a.bases {
        cfg.bases = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.misalignment |= a.misalignment;
    if a.no_unitaries {
        cfg.log_unitaries = false;
    }
    cfg.validate()?;
    emit(&a.out, &write_dataset(&simulate(&cfg)?))
}

fn run_analyze(a: AnalyzeArgs) -> Result<()> {
    let mut runs = Vec::new();
    if a.files.is_empty() {
        runs = parse_dataset(&read_stdin()?).map_err(|e| e.with_context("stdin"))?;
    }
    for path in &a.files {
        runs.extend(parse_dataset(&read_file(path)?).map_err(|e| e.with_context(path.display().to_string()))?);
    }
    let opts = AnalysisOptions {
        gamma: a.scan.gamma,
        method: a.scan.method,
        grid: a.scan.grid(),
        i3_policy: a.i3_policy,
        i1_range_width: a.i1_range,
        randomness_confidence: a.randomness_confidence,
    };
    emit_report(&analyze(&runs, &opts)?, &a.scan, &a.out)
}

fn run_invariants(a: InvariantsArgs) -> Result<()> {
    let source = match a.state.parse::<StateSource>() {
        Ok(s) => s,
        Err(_) if Path::new(&a.state).exists() => StateSource::File(PathBuf::from(&a.state)),
        Err(e) => return Err(e),
    };
    emit(&a.out, &to_json(&compute_all(&source.resolve()?.bloch()))?)
}

fn run_randomness(a: RandomnessArgs) -> Result<()> {
    let set = parse_design_set(&read_file(&a.file)?).map_err(|e| e.with_context(a.file.display().to_string()))?;
    let verdicts =
        a.t.iter()
            .map(|&t| match &set {
                DesignSet::Unitaries(u) => certify_unitaries(u, t, a.confidence),
                DesignSet::States(s) => certify_states(s, t, a.confidence),
            })
            .collect::<Result<Vec<_>>>()?;
    emit(&a.out, &to_json(&verdicts)?)
}

fn run_replay(a: ReplayArgs) -> Result<()> {
    let report = replay_published(a.scan.method, a.scan.gamma, a.scan.grid(), a.i3_policy)?;
    emit_report(&report, &a.scan, &a.out)
}

fn run_report(a: ReportArgs) -> Result<()> {
    let text = match &a.file {
        Some(path) => read_file(path)?,
        None => read_stdin()?,
    };
    let report: CertificationReport =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: Some(e.line()), msg: e.to_string() })?;
    emit(&a.out, &render_summary(&report))
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Simulate(a) => run_simulate(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Invariants(a) => run_invariants(a),
        Command::CertifyRandomness(a) => run_randomness(a),
        Command::ReplayPublished(a) => run_replay(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("randlu: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
