//! Command-line front end. `run_cli` returns the process exit code:
//! 0 success, 1 stage failure, 2 input error, 3 no anomalies, 4 audit failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::AppConfig;
use crate::detector::{detect, Anomaly, AnomalyKind, DetectorConfig};
use crate::gateway::BackendKind;
use crate::payload::{build_payload, round_for_payload, ValidationPayload};
use crate::pipeline::{replay, run_pipeline, PipelineError, RunSource};
use crate::runstore::{Clock, RunStore};
use crate::series::{load_metadata, load_series, SeriesFormat};

#[derive(Debug, Parser)]
#[command(name = "finval", version, about = "Detect and validate anomalies in daily financial series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flag outliers and missing values and emit the validation payload.
    Detect(DetectArgs),
    /// Run the agents on an existing payload file.
    Validate(ValidateArgs),
    /// Full pipeline: detect, validate, deliberate, report.
    Run(RunArgs),
    /// Re-render the final report of a sealed run from its event log.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long, env = "FINVAL_SERIES")]
    pub series: Option<PathBuf>,
    #[arg(long, env = "FINVAL_METADATA")]
    pub metadata: Option<PathBuf>,
    /// Overrides the series id taken from the file.
    #[arg(long, env = "FINVAL_SERIES_ID")]
    pub series_id: Option<String>,
    #[arg(long, env = "FINVAL_THRESHOLD")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, env = "FINVAL_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    /// Where to write the payload JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    #[arg(long, env = "FINVAL_CONFIG")]
    pub config: PathBuf,
    #[arg(long, env = "FINVAL_BACKEND")]
    pub backend: Option<BackendKind>,
    #[arg(long, env = "FINVAL_MOCK_SCRIPT")]
    pub mock_script: Option<PathBuf>,
    #[arg(long, env = "FINVAL_RUN_ROOT")]
    pub run_root: Option<PathBuf>,
    /// Report destination; defaults to `report.md` inside the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed epoch timestamps, for reproducible run ids and event logs.
    #[arg(long, env = "FINVAL_DETERMINISTIC_CLOCK")]
    pub deterministic_clock: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub payload: PathBuf,
    #[command(flatten)]
    pub agent: AgentArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub agent: AgentArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub run_id: String,
    #[arg(long, env = "FINVAL_RUN_ROOT", default_value = "runs")]
    pub run_root: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let message = match &e {
            PipelineError::Stage { run_id, .. } => format!("{e} (run {run_id})"),
            PipelineError::NoAnomalies { run_id: Some(id) } => format!("{e} (run {id})"),
            _ => e.to_string(),
        };
        Self {
            code: e.exit_code(),
            message,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Detect(a) => cmd_detect(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Replay(a) => cmd_replay(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn apply_input(config: &mut AppConfig, input: &InputArgs) {
    if let Some(p) = &input.series {
        config.inputs.series = Some(AppConfig::cli_path(p));
    }
    if let Some(p) = &input.metadata {
        config.inputs.metadata = Some(AppConfig::cli_path(p));
    }
    if let Some(id) = &input.series_id {
        config.inputs.series_id = Some(id.clone());
    }
    if let Some(t) = input.threshold {
        config.detection.z_threshold = t;
    }
}

fn load_agent_config(agent: &AgentArgs) -> Result<AppConfig, Failure> {
    let mut config = AppConfig::load(&AppConfig::cli_path(&agent.config)).map_err(Failure::input)?;
    if let Some(b) = agent.backend {
        config.gateway.backend = b;
    }
    if let Some(p) = &agent.mock_script {
        config.gateway.mock_script = Some(AppConfig::cli_path(p));
    }
    if let Some(p) = &agent.run_root {
        config.output.run_root = AppConfig::cli_path(p);
    }
    if let Some(p) = &agent.out {
        config.output.report_path = Some(AppConfig::cli_path(p));
    }
    Ok(config)
}

fn clock(agent: &AgentArgs) -> Clock {
    if agent.deterministic_clock {
        Clock::deterministic()
    } else {
        Clock::System
    }
}

pub fn format_anomalies(anomalies: &[Anomaly]) -> String {
    let mut text = String::from("date\tkind\tpercent_change\tz_score\n");
    for a in anomalies {
        let (value, z) = match a.kind {
            AnomalyKind::Outlier => (
                a.observed_value.map(|v| round_for_payload(v).to_string()).unwrap_or_default(),
                a.z_score.map(|z| format!("{z:.4}")).unwrap_or_default(),
            ),
            AnomalyKind::Missing => ("null".into(), "n/a".into()),
        };
        text.push_str(&format!("{}\t{}\t{value}\t{z}\n", a.date, a.kind));
    }
    text
}

fn cmd_detect(args: DetectArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (series_path, metadata_path, detection, series_id) = match &args.config {
        Some(path) => {
            let mut config = AppConfig::load(&AppConfig::cli_path(path)).map_err(Failure::input)?;
            apply_input(&mut config, &args.input);
            (config.inputs.series, config.inputs.metadata, config.detection, config.inputs.series_id)
        }
        None => {
            let mut detection = DetectorConfig::default();
            if let Some(t) = args.input.threshold {
                detection.z_threshold = t;
            }
            (
                args.input.series.as_deref().map(AppConfig::cli_path),
                args.input.metadata.as_deref().map(AppConfig::cli_path),
                detection,
                args.input.series_id.clone(),
            )
        }
    };
    let series_path = series_path.ok_or_else(|| Failure::input("--series is required"))?;
    let metadata_path = metadata_path.ok_or_else(|| Failure::input("--metadata is required"))?;
    detection.validate().map_err(Failure::input)?;
    let mut series = load_series(&series_path, SeriesFormat::from_path(&series_path)).map_err(Failure::input)?;
    if let Some(id) = series_id {
        series = series.with_id(id).map_err(Failure::input)?;
    }
    let metadata = load_metadata(&metadata_path).map_err(Failure::input)?;
    let anomalies = detect(&series, &detection).map_err(Failure::input)?;
    if anomalies.is_empty() {
        let _ = writeln!(out, "no anomalies in {}", series.series_id());
        return Err(PipelineError::NoAnomalies { run_id: None }.into());
    }
    let payload = build_payload(series.series_id(), &anomalies, &metadata).map_err(Failure::input)?;
    let json = serde_json::to_string_pretty(&payload).expect("payload serializes");
    match &args.out {
        Some(path) => {
            write_file(path, &json)?;
            let _ = write!(out, "{}", format_anomalies(&anomalies));
            let _ = writeln!(out, "payload written to {}", path.display());
        }
        None => {
            let _ = writeln!(out, "{json}");
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure {
            code: 4,
            message: format!("{}: {e}", parent.display()),
        })?;
    }
    fs::write(path, text).map_err(|e| Failure {
        code: 4,
        message: format!("{}: {e}", path.display()),
    })
}

fn report_run(result: Result<crate::pipeline::RunOutput, PipelineError>, out: &mut dyn Write) -> Result<(), Failure> {
    let run = result?;
    let _ = writeln!(out, "run {}: {}", run.run_id, run.outcome.as_str());
    let _ = writeln!(out, "report: {}", run.report_path.display());
    let _ = writeln!(out, "run directory: {}", run.run_dir.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = load_agent_config(&args.agent)?;
    let path = AppConfig::cli_path(&args.payload);
    let text = fs::read_to_string(&path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let payload: ValidationPayload =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    report_run(run_pipeline(&config, RunSource::Payload(payload), clock(&args.agent)), out)
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut config = load_agent_config(&args.agent)?;
    apply_input(&mut config, &args.input);
    let source = RunSource::from_config(&config)?;
    report_run(run_pipeline(&config, source, clock(&args.agent)), out)
}

fn cmd_replay(args: ReplayArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let store = RunStore::new(AppConfig::cli_path(&args.run_root));
    let report = replay(&store, &args.run_id).map_err(Failure::input)?;
    match &args.out {
        Some(path) => write_file(&AppConfig::cli_path(path), &report),
        None => {
            let _ = write!(out, "{report}");
            Ok(())
        }
    }
}
