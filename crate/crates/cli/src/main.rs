//! `handrub`: run, replay, simulate and evaluate hand-rub training sessions.
//!
//! Exit status is 0 on success, 1 when a command fails at run time and 2 for
//! usage errors. Diagnostics go to standard error; `HH_LOG_LEVEL` sets the
//! log level (error, warn, info or debug; default warn).

mod backend;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use handrub_core::dataset::{
    evaluate_clips, extract_training_set, load_manifest, split_dataset, train_baseline, BaselineModel,
    EvalReport, FileClipDecoder, SplitSpec, TrainConfig, DEFAULT_FRAME_STRIDE,
};
use handrub_core::eventlog::feedback_log_string;
use handrub_core::metrics::{aggregate, report_csv, sessions_csv, AggregateReport, SessionMetrics};
use handrub_core::simulate::{simulate, SimulationConfig};
use handrub_service::replay::replay_reader;
use handrub_service::server::{bind, serve, AppState, ServiceConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use backend::Backend;

#[derive(Parser)]
#[command(name = "handrub", version, about = "Guided hand-rub training engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session server (WebSocket /ws, GET /healthz).
    Serve {
        /// Service settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Baseline model JSON or score script (.jsonl).
        #[arg(long)]
        model: PathBuf,
    },
    /// Feed a recorded hh/1 inbound log through the engine.
    Replay {
        /// Inbound log, one JSON message per line.
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate sessions from per-step duration distributions.
    Simulate {
        /// Simulation settings (JSON).
        #[arg(long, conflicts_with = "fixed_durations")]
        config: Option<PathBuf>,
        /// Fixed per-step durations in seconds.
        #[arg(long)]
        fixed_durations: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        sessions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Evaluate a classifier on every clip of a dataset manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Evaluation settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Train the baseline classifier on the train split of a manifest.
    TrainBaseline {
        #[arg(long)]
        manifest: PathBuf,
        /// Training settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the split and shuffle seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert stored session metrics to CSV or JSON with an aggregate report.
    MetricsExport {
        /// Files holding one metrics object, an array, or JSON lines.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args)]
struct Output {
    /// Output directory; without it the report goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<handrub_core::Error> for CliError {
    fn from(e: handrub_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = init_logging().and_then(|()| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn init_logging() -> Result<(), CliError> {
    let level = match std::env::var("HH_LOG_LEVEL") {
        Err(_) => log::LevelFilter::Warn,
        Ok(v) => match v.as_str() {
            "error" => log::LevelFilter::Error,
            "warn" => log::LevelFilter::Warn,
            "info" => log::LevelFilter::Info,
            "debug" => log::LevelFilter::Debug,
            other => {
                return Err(CliError::Usage(format!(
                    "HH_LOG_LEVEL must be one of error, warn, info, debug; got {other:?}"
                )))
            }
        },
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Serve { config, model } => {
            let config: ServiceConfig = read_config(config.as_deref())?;
            config.engine.validate()?;
            let backend = Backend::load(&model)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
            runtime.block_on(async {
                let (listener, addr) = bind(&config).await.map_err(|e| CliError::Runtime(format!("{}: {e}", config.listen)))?;
                eprintln!("handrub serving hh/1 on ws://{addr}/ws");
                let state = AppState::new(config, backend.factory());
                serve(listener, state).await.map_err(|e| CliError::Runtime(e.to_string()))
            })
        }
        Command::Replay {
            log,
            config,
            model,
            out,
        } => {
            let config: ServiceConfig = read_config(config.as_deref())?;
            config.engine.validate()?;
            let backend = Backend::load(&model)?;
            let file = fs::File::open(&log).map_err(|e| CliError::io(&log, e))?;
            let id = log.file_stem().map_or("session".into(), |s| s.to_string_lossy().into_owned());
            let outcome = replay_reader(BufReader::new(file), &id, backend.factory(), config.engine, config.debug_scores)
                .map_err(|e| CliError::io(&log, e))?;
            if outcome.unread > 0 {
                log::warn!("connection closed with {} inbound lines unread", outcome.unread);
            }
            if !outcome.metrics.complete {
                log::warn!("{id}: log ended before the session completed");
            }
            create_dir(&out)?;
            write(&out, "outbound.jsonl", &outcome.outbound_jsonl())?;
            write(&out, "feedback.jsonl", &feedback_log_string(&outcome.feedback))?;
            write(&out, "metrics.json", &pretty(&outcome.metrics))
        }
        Command::Simulate {
            config,
            fixed_durations,
            sessions,
            seed,
            output,
        } => {
            let sim = match (config, fixed_durations) {
                (_, Some(path)) => SimulationConfig::load_fixed_durations(&path)?,
                (path, None) => read_config(path.as_deref())?,
            };
            let outcome = simulate(&sim, sessions, seed)?;
            let metrics: Vec<SessionMetrics> = outcome.sessions.into_iter().map(|s| s.metrics).collect();
            emit_metrics(&output, &metrics, &outcome.report)
        }
        Command::Eval {
            manifest,
            model,
            config,
            output,
        } => {
            let settings: EvalSettings = read_config(config.as_deref())?;
            let manifest = load_manifest(&manifest)?;
            let backend = Backend::load(&model)?;
            let source = FileClipDecoder::new();
            let report = evaluate_clips(&manifest, &source, settings.stride, |clip| backend.for_clip(&clip.path))?;
            for e in &report.clip_errors {
                log::warn!("{}: {}", e.path.display(), e.message);
            }
            emit_eval(&output, &report)
        }
        Command::TrainBaseline {
            manifest,
            config,
            seed,
            out,
        } => {
            let mut settings: TrainSettings = read_config(config.as_deref())?;
            if let Some(seed) = seed {
                settings.split.seed = seed;
                settings.train.seed = seed;
            }
            let manifest = load_manifest(&manifest)?;
            let splits = split_dataset(&manifest, &settings.split)?;
            let source = FileClipDecoder::new();
            let set = extract_training_set(&splits.train, &source, settings.stride)?;
            log::info!("training on {} frames from {} clips", set.len(), splits.train.len());
            let (model, loss_history) = train_baseline(&set, &settings.train, manifest.digest())?;
            let classifier = handrub_core::vision::BaselineClassifier::new(model.clone())?;
            let evaluate = |part: &handrub_core::dataset::DatasetManifest| -> Result<Option<EvalReport>, CliError> {
                if part.is_empty() {
                    return Ok(None);
                }
                Ok(Some(handrub_core::dataset::evaluate_classifier(&classifier, part, &source, settings.stride)?))
            };
            let summary = TrainingSummary {
                model_digest: model.digest(),
                manifest_digest: manifest.digest(),
                train_frames: set.len(),
                loss_history,
                val: evaluate(&splits.val)?,
                test: evaluate(&splits.test)?,
                settings,
            };
            create_dir(&out)?;
            write(&out, "model.json", &model_json(&model))?;
            write(&out, "training.json", &pretty(&summary))
        }
        Command::MetricsExport { inputs, output } => {
            let mut metrics = Vec::new();
            for path in &inputs {
                metrics.extend(read_metrics(path)?);
            }
            let report = aggregate(&metrics)?;
            emit_metrics(&output, &metrics, &report)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSettings {
    stride: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            stride: DEFAULT_FRAME_STRIDE,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    stride: usize,
    split: SplitSpec,
    train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            stride: DEFAULT_FRAME_STRIDE,
            split: SplitSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct TrainingSummary {
    model_digest: String,
    manifest_digest: String,
    train_frames: usize,
    loss_history: Vec<f64>,
    val: Option<EvalReport>,
    test: Option<EvalReport>,
    settings: TrainSettings,
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_metrics(path: &Path) -> Result<Vec<SessionMetrics>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |e: serde_json::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    match text.trim_start().chars().next() {
        Some('[') => serde_json::from_str(&text).map_err(bad),
        _ => BufReader::new(text.as_bytes())
            .lines()
            .map_while(Result::ok)
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(&l).map_err(bad))
            .collect::<Result<Vec<_>, _>>()
            .or_else(|_| serde_json::from_str(&text).map(|m| vec![m]).map_err(bad)),
    }
}

fn emit_metrics(output: &Output, sessions: &[SessionMetrics], report: &AggregateReport) -> Result<(), CliError> {
    let Some(out) = &output.out else {
        print!(
            "{}",
            match output.format {
                Format::Json => pretty(report),
                Format::Csv => report_csv(report),
            }
        );
        return Ok(());
    };
    create_dir(out)?;
    match output.format {
        Format::Json => {
            write(out, "sessions.json", &pretty(&sessions))?;
            write(out, "report.json", &pretty(report))
        }
        Format::Csv => {
            write(out, "sessions.csv", &sessions_csv(sessions))?;
            write(out, "report.csv", &report_csv(report))
        }
    }
}

fn emit_eval(output: &Output, report: &EvalReport) -> Result<(), CliError> {
    let summary = format!(
        "metric,value\naccuracy,{}\nloss,{}\nn_frames,{}\ncompleteness,{}\n",
        report.accuracy, report.loss, report.n_frames, report.completeness
    );
    let Some(out) = &output.out else {
        print!(
            "{}",
            match output.format {
                Format::Json => pretty(report),
                Format::Csv => summary,
            }
        );
        return Ok(());
    };
    create_dir(out)?;
    match output.format {
        Format::Json => write(out, "eval.json", &pretty(report)),
        Format::Csv => {
            write(out, "eval.csv", &summary)?;
            write(out, "confusion.csv", &report.confusion.to_csv())
        }
    }
}

fn model_json(model: &BaselineModel) -> String {
    serde_json::to_string(model).expect("model serializes") + "\n"
}

fn pretty<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}
