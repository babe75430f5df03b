//! Command-line surface: `ingest`, `synth`, `train`, `evaluate`, `predict`.
//!
//! Exit status is 0 on success, 1 on data or validation errors, and 2 on usage
//! errors (bad flags, missing input paths). Diagnostics go to stderr; data goes
//! to stdout or the `--out` path.

mod bundle;

pub use bundle::{fingerprint, ModelBundle, BUNDLE_FORMAT};

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classifiers::ModelSpec;
use crate::cnn::write_loss_history_csv;
use crate::error::Error;
use crate::evaluation::{cross_validate, EvaluationSummary, Protocol, SplitMode};
use crate::ingest::{
    assemble_dataset, check_duration, parse_recording_from, read_canonical_csv_from, trim_transitions,
    write_canonical_csv, Dataset, GaitLabel, RawSource, CANONICAL_HEADER, CHANNEL_NAMES,
};
use crate::pipeline::{fit_pipeline, index_windows, majority_verdict, PipelineConfig, WindowPrediction};
use crate::synthgen::generate_benchmark_with;

#[derive(Debug, Parser)]
#[command(
    name = "gaitscope",
    version,
    about = "Abnormal gait detection from smartphone IMU recordings"
)]
pub struct Cli {
    /// Pipeline config (JSON). Missing keys take their defaults; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted (for `synth --raw` a directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitModeArg {
    Window,
    Subject,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Kfold,
    Holdout,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge raw per-subject logs into one canonical CSV. Subject ids are file stems.
    Ingest {
        /// Raw logs of subjects with normal gait.
        #[arg(long, num_args = 1..)]
        normal: Vec<PathBuf>,
        /// Raw logs of subjects with abnormal gait.
        #[arg(long, num_args = 1..)]
        abnormal: Vec<PathBuf>,
        /// Accept recordings whose trimmed length differs from `duration_s`.
        #[arg(long)]
        variable_length: bool,
    },
    /// Generate a synthetic benchmark as canonical CSV.
    Synth {
        #[arg(long, default_value_t = 14)]
        normal: usize,
        #[arg(long, default_value_t = 9)]
        abnormal: usize,
        /// Seconds per recording; defaults to the config's `duration_s`.
        #[arg(long)]
        duration_s: Option<f64>,
        /// Write one raw log per subject (with transition padding) into the `--out` directory instead.
        #[arg(long)]
        raw: bool,
    },
    /// Fit the pipeline and one model on a canonical CSV and write a model bundle.
    Train {
        /// Canonical CSV; defaults to the config's `data`.
        data: Option<PathBuf>,
        /// Model to train when the config lists several (knn, logistic_regression, naive_bayes, svm, cnn).
        #[arg(long)]
        model: Option<String>,
        /// Also write the per-epoch training loss as CSV.
        #[arg(long)]
        loss_history: Option<PathBuf>,
    },
    /// Cross-validate every configured model; prints the results table, writes the JSON report to `--out`.
    Evaluate {
        data: Option<PathBuf>,
        /// Defaults to the config's split mode.
        #[arg(long, value_enum)]
        split_mode: Option<SplitModeArg>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
    },
    /// Classify each window of a recording and report the majority verdict.
    Predict {
        bundle: PathBuf,
        /// Canonical CSV or a raw six-column log (trimmed like `ingest`).
        recording: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout and errors to stderr
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaitscope: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.split.seed = config.seed;
    match &cli.command {
        Command::Ingest {
            normal,
            abnormal,
            variable_length,
        } => cmd_ingest(&config, normal, abnormal, *variable_length, cli.out.as_deref()),
        Command::Synth {
            normal,
            abnormal,
            duration_s,
            raw,
        } => cmd_synth(&config, *normal, *abnormal, *duration_s, *raw, cli.out.as_deref()),
        Command::Train {
            data,
            model,
            loss_history,
        } => cmd_train(
            &config,
            data.as_deref(),
            model.as_deref(),
            loss_history.as_deref(),
            cli.out.as_deref(),
        ),
        Command::Evaluate {
            data,
            split_mode,
            protocol,
        } => cmd_evaluate(&config, data.as_deref(), *split_mode, *protocol, cli.out.as_deref()),
        Command::Predict { bundle, recording } => cmd_predict(bundle, recording, cli.out.as_deref()),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    Ok(PipelineConfig::from_json(&text)?)
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{what} `{}` does not exist", path.display())));
    }
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn cmd_ingest(
    config: &PipelineConfig,
    normal: &[PathBuf],
    abnormal: &[PathBuf],
    variable_length: bool,
    out: Option<&Path>,
) -> CliResult<()> {
    if normal.is_empty() && abnormal.is_empty() {
        return Err(CliError::Usage(
            "ingest needs --normal and/or --abnormal input files".into(),
        ));
    }
    let sources: Vec<RawSource> = normal
        .iter()
        .map(|p| RawSource::from_path(p, GaitLabel::Normal))
        .chain(abnormal.iter().map(|p| RawSource::from_path(p, GaitLabel::Abnormal)))
        .collect();
    for s in &sources {
        require_file(&s.path, "input file")?;
    }
    let raw = crate::ingest::parse_many(&sources, config.sample_rate_hz)?;
    let mut recordings = Vec::with_capacity(raw.len());
    for rec in &raw {
        let trimmed = trim_transitions(rec, config.trim_head_s, config.trim_tail_s)?;
        if !(variable_length || config.variable_length) {
            check_duration(&trimmed, config.duration_s)?;
        }
        recordings.push(trimmed);
    }
    let provenance = sources.iter().map(|s| s.path.display().to_string()).collect();
    let dataset = assemble_dataset(recordings, provenance)?;
    let counts = dataset.rows_per_label();
    eprintln!(
        "ingested {} recordings: {} rows ({} normal, {} abnormal)",
        dataset.recordings.len(),
        dataset.total_rows(),
        counts.normal,
        counts.abnormal
    );
    let mut buf = Vec::new();
    write_canonical_csv(&dataset, &mut buf)?;
    emit(out, &buf)
}

fn write_raw_log(path: &Path, rec: &crate::ingest::Recording) -> CliResult<()> {
    let mut text = CHANNEL_NAMES.join(",");
    text.push('\n');
    for s in &rec.samples {
        let fields: Vec<String> = s
            .channels
            .iter()
            .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
            .collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_synth(
    config: &PipelineConfig,
    normal: usize,
    abnormal: usize,
    duration_s: Option<f64>,
    raw: bool,
    out: Option<&Path>,
) -> CliResult<()> {
    let duration = duration_s.unwrap_or(config.duration_s);
    if raw {
        let Some(dir) = out else {
            return Err(CliError::Usage("synth --raw needs --out <directory>".into()));
        };
        let padded = duration + config.trim_head_s + config.trim_tail_s;
        let dataset = generate_benchmark_with(normal, abnormal, config.seed, padded, config.sample_rate_hz)?;
        fs::create_dir_all(dir)?;
        for rec in &dataset.recordings {
            write_raw_log(&dir.join(format!("{}.csv", rec.subject_id)), rec)?;
        }
        eprintln!("wrote {} raw logs to {}", dataset.recordings.len(), dir.display());
        return Ok(());
    }
    let dataset = generate_benchmark_with(normal, abnormal, config.seed, duration, config.sample_rate_hz)?;
    let mut buf = Vec::new();
    write_canonical_csv(&dataset, &mut buf)?;
    emit(out, &buf)
}

fn data_path(config: &PipelineConfig, arg: Option<&Path>) -> CliResult<PathBuf> {
    let path = arg
        .map(Path::to_path_buf)
        .or_else(|| config.data.clone())
        .ok_or_else(|| CliError::Usage("no data path given (positional argument or config `data`)".into()))?;
    require_file(&path, "data file")?;
    Ok(path)
}

fn load_dataset(config: &PipelineConfig, path: &Path) -> CliResult<(Dataset, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let dataset = read_canonical_csv_from(bytes.as_slice(), path, config.sample_rate_hz)?;
    if !config.variable_length {
        for rec in &dataset.recordings {
            check_duration(rec, config.duration_s)?;
        }
    }
    Ok((dataset, bytes))
}

fn select_model(config: &PipelineConfig, key: Option<&str>) -> CliResult<ModelSpec> {
    match key {
        Some(key) => config
            .models
            .iter()
            .find(|m| m.key() == key)
            .cloned()
            .or_else(|| ModelSpec::all_defaults().into_iter().find(|m| m.key() == key))
            .ok_or_else(|| CliError::Usage(format!("unknown model `{key}`"))),
        None if config.models.len() == 1 => Ok(config.models[0].clone()),
        None => Err(CliError::Usage(format!(
            "config lists {} models; choose one with --model",
            config.models.len()
        ))),
    }
}

fn cmd_train(
    config: &PipelineConfig,
    data: Option<&Path>,
    model: Option<&str>,
    loss_history: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<()> {
    let path = data_path(config, data)?;
    let spec = select_model(config, model)?;
    let (dataset, bytes) = load_dataset(config, &path)?;
    let snapshot = PipelineConfig {
        models: vec![spec.clone()],
        data: Some(path.clone()),
        ..config.clone()
    };
    let trained = fit_pipeline(&dataset, &snapshot, &spec)?;
    let training_windows = index_windows(&dataset, &snapshot.window)?.len();
    let bundle = ModelBundle {
        format_version: BUNDLE_FORMAT,
        created_at: chrono::Utc::now().to_rfc3339(),
        feature_dim: trained.pipeline.feature_dim(),
        config: snapshot,
        data_fingerprint: fingerprint(&bytes),
        training_windows,
        pipeline: trained.pipeline,
    };
    if let Some(p) = loss_history {
        let mut buf = Vec::new();
        write_loss_history_csv(&trained.loss_history, &mut buf)?;
        fs::write(p, buf)?;
    }
    eprintln!(
        "trained {} on {} windows (feature dim {})",
        spec.display_name(),
        training_windows,
        bundle.feature_dim
    );
    let mut json = bundle.to_json()?;
    json.push('\n');
    emit(out, json.as_bytes())
}

fn cmd_evaluate(
    config: &PipelineConfig,
    data: Option<&Path>,
    split_mode: Option<SplitModeArg>,
    protocol: Option<ProtocolArg>,
    out: Option<&Path>,
) -> CliResult<()> {
    let path = data_path(config, data)?;
    let (dataset, _) = load_dataset(config, &path)?;
    let modes = match split_mode {
        None => vec![config.split.mode],
        Some(SplitModeArg::Window) => vec![SplitMode::WindowLevel],
        Some(SplitModeArg::Subject) => vec![SplitMode::SubjectLevel],
        Some(SplitModeArg::Both) => vec![SplitMode::WindowLevel, SplitMode::SubjectLevel],
    };
    let mut plan = config.split;
    if let Some(p) = protocol {
        plan.protocol = match p {
            ProtocolArg::Kfold => Protocol::KFold,
            ProtocolArg::Holdout => Protocol::Holdout,
        };
    }
    let mut summaries: Vec<EvaluationSummary> = Vec::new();
    let mut stdout = io::stdout().lock();
    for mode in modes {
        let plan = crate::evaluation::SplitPlan { mode, ..plan };
        let summary = cross_validate(&dataset, config, &plan)?;
        if let Some(w) = &summary.warning {
            eprintln!("warning: {w}");
        }
        let protocol = match summary.protocol {
            Protocol::KFold => format!("{}-fold cross-validation", summary.folds),
            Protocol::Holdout => format!(
                "single {}/{} holdout split",
                plan.train_fraction,
                1.0 - plan.train_fraction
            ),
        };
        writeln!(stdout, "# {} split, {protocol}", summary.split_mode.as_str())?;
        summary.write_table(&mut stdout)?;
        summaries.push(summary);
    }
    stdout.flush()?;
    if let Some(out) = out {
        #[derive(Serialize)]
        struct Report<'a> {
            evaluations: &'a [EvaluationSummary],
        }
        let mut json = serde_json::to_string_pretty(&Report {
            evaluations: &summaries,
        })
        .map_err(Error::from)?;
        json.push('\n');
        fs::write(out, json)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RecordingVerdict {
    subject_id: String,
    /// Known label when the input was a canonical CSV.
    label: Option<GaitLabel>,
    windows: Vec<WindowPrediction>,
    normal_windows: usize,
    abnormal_windows: usize,
    verdict: GaitLabel,
}

fn cmd_predict(bundle_path: &Path, recording: &Path, out: Option<&Path>) -> CliResult<()> {
    require_file(bundle_path, "bundle")?;
    require_file(recording, "recording")?;
    let bundle = ModelBundle::load(bundle_path)?;
    let config = &bundle.config;
    let bytes = fs::read(recording)?;
    let canonical = bytes
        .split(|&b| b == b'\n')
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .find(|l| !l.iter().all(u8::is_ascii_whitespace))
        .is_some_and(|l| l == CANONICAL_HEADER.as_bytes());
    let recordings: Vec<(crate::ingest::Recording, Option<GaitLabel>)> = if canonical {
        read_canonical_csv_from(bytes.as_slice(), recording, config.sample_rate_hz)?
            .recordings
            .into_iter()
            .map(|r| {
                let label = r.label;
                (r, Some(label))
            })
            .collect()
    } else {
        let stem = recording
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "recording".into());
        // the label is a placeholder; raw logs carry none
        let raw = parse_recording_from(
            bytes.as_slice(),
            recording,
            &stem,
            GaitLabel::Normal,
            config.sample_rate_hz,
        )?;
        vec![(trim_transitions(&raw, config.trim_head_s, config.trim_tail_s)?, None)]
    };
    let mut verdicts = Vec::with_capacity(recordings.len());
    for (rec, label) in recordings {
        let windows = bundle.pipeline.predict_recording(&rec)?;
        let labels: Vec<GaitLabel> = windows.iter().map(|w| w.label).collect();
        let abnormal = labels.iter().filter(|&&l| l == GaitLabel::Abnormal).count();
        let verdict = majority_verdict(&labels).expect("at least one window was classified");
        eprintln!(
            "{}: {} ({abnormal}/{} windows abnormal)",
            rec.subject_id,
            verdict,
            labels.len()
        );
        verdicts.push(RecordingVerdict {
            subject_id: rec.subject_id,
            label,
            normal_windows: labels.len() - abnormal,
            abnormal_windows: abnormal,
            windows,
            verdict,
        });
    }
    #[derive(Serialize)]
    struct Output {
        recordings: Vec<RecordingVerdict>,
    }
    let mut json = serde_json::to_string_pretty(&Output { recordings: verdicts }).map_err(Error::from)?;
    json.push('\n');
    emit(out, json.as_bytes())
}
