use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use emocorr::data::{
    generate_synthetic, load_dataset_dir, load_semeval_tsv, read_header_emotions,
    write_dataset_dir, DataError, SplitName, SyntheticSpec,
};
use emocorr::grid::{emit_report, render_report, run_grid, CellResult, CellStatus, GridCell, GridSpec, ReportFormat};
use emocorr::labels::{empirical_correlation, wheel_prior, EmotionSet};
use emocorr::model::{EmotionModel, ModelError};
use emocorr::text::TextError;
use emocorr::train::{evaluate_split, run_seeds, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "emocorr", version, about = "Correlation-aware multi-label emotion classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Dev => SplitName::Dev,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Directory holding train.tsv, dev.tsv and test.tsv.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed count `N` (seeds 0..N) or a comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over its seeds.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for the report and per-seed checkpoints.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a sweep file and write one report row per cell.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// Report file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a spec file.
    GenData {
        /// TOML synthetic dataset spec.
        #[arg(long)]
        spec: PathBuf,
        /// Override the seed in the synthetic spec file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print empirical and wheel correlation priors as CSV.
    InspectCorr {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Optional config supplying emotion names and wheel angles.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Divergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Divergence(m) => m,
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::Divergence { .. } => Failure::Divergence(msg),
            TrainError::Data(_) | TrainError::Metrics(_) => Failure::Data(msg),
            TrainError::Model(ModelError::Text(TextError::SequenceTooLong { .. })) => {
                Failure::Data(msg)
            }
            _ => Failure::Usage(msg),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(_) | DataError::NotPsd(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if text.contains(',') {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| usage(format!("bad seed {s:?}"))))
            .collect::<Result<_>>()?
    } else {
        let n: u64 = text
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad seed count {text:?}")))?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(usage("at least one seed is required"));
    }
    Ok(seeds)
}

fn apply_seed_flags(trainer: &mut emocorr::train::TrainerConfig, run: &RunArgs) -> Result<()> {
    if let Some(s) = run.seed {
        trainer.seeds = vec![s];
    } else if let Some(list) = &run.seeds {
        trainer.seeds = parse_seeds(list)?;
    }
    Ok(())
}

/// Config emotion names if given, otherwise the training file's header.
fn resolve_emotions(config: &mut TrainConfig, data_dir: &Path) -> Result<EmotionSet> {
    if config.model.emotions.is_none() {
        let names = read_header_emotions(&data_dir.join(SplitName::Train.file_name()))?;
        config.model.emotions = Some(names);
    }
    config.emotion_set().map_err(Failure::from)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(usage)?;
            }
            std::fs::write(path, text)
                .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn cmd_train(run: RunArgs, out: PathBuf) -> Result<()> {
    let mut config = TrainConfig::load(&run.config)?;
    apply_seed_flags(&mut config.trainer, &run)?;
    let set = resolve_emotions(&mut config, &run.data_dir)?;
    config.validate()?;
    let data = load_dataset_dir(&run.data_dir, &set)?;
    let (result, models) = run_seeds(&config, &data, &set, run.threads)?;
    std::fs::create_dir_all(&out).map_err(usage)?;
    for (seed, model) in config.trainer.seeds.iter().zip(&models) {
        model
            .save(&out.join(format!("checkpoint-seed{seed}")))
            .map_err(usage)?;
    }
    let cell = GridCell {
        model: config.model.kind,
        loss: config.loss,
    };
    let rows = [CellResult {
        cell,
        status: CellStatus::Done(result.clone()),
    }];
    let path = out.join(format!("report.{}", extension(run.format)));
    emit_report(&rows, &set, run.format.into(), &path).map_err(usage)?;
    println!(
        "dev jaccard {:.4} +- {:.4}, test jaccard {:.4} +- {:.4} over {} seeds; report {}",
        result.dev.jaccard.mean,
        result.dev.jaccard.std,
        result.test.jaccard.mean,
        result.test.jaccard.std,
        result.seeds.len(),
        path.display()
    );
    Ok(())
}

fn cmd_grid(run: RunArgs, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(&run.config)
        .map_err(|e| usage(format!("cannot read {}: {e}", run.config.display())))?;
    let mut spec = GridSpec::from_toml(&text).map_err(usage)?;
    apply_seed_flags(&mut spec.trainer, &run)?;
    let cells = spec.cells().map_err(usage)?;
    let mut base = spec.base_config();
    let set = resolve_emotions(&mut base, &run.data_dir)?;
    let data = load_dataset_dir(&run.data_dir, &set)?;
    let outcome = run_grid(&cells, &base, &data, &set, run.threads);
    info!(
        "{} training runs, {} retraining runs",
        outcome.training_runs, outcome.retrain_runs
    );
    let report = render_report(&outcome.cells, &set, run.format.into()).map_err(usage)?;
    write_output(out.as_deref(), &report)?;
    if outcome.any_diverged() {
        return Err(Failure::Divergence(
            "at least one grid cell diverged".into(),
        ));
    }
    Ok(())
}

fn cmd_eval(
    checkpoint: PathBuf,
    data_dir: PathBuf,
    split: SplitArg,
    format: Format,
    threshold: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = EmotionModel::load(&checkpoint).map_err(usage)?;
    let name: SplitName = split.into();
    let data = load_semeval_tsv(&data_dir.join(name.file_name()), name, model.emotions())?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(usage("threshold must lie in (0, 1)"));
    }
    let report = evaluate_split(&model, &data, threshold)?;
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).map_err(usage)?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut header = vec!["jaccard".to_string(), "micro_f1".into(), "macro_f1".into()];
            let mut row = vec![
                format!("{:.6}", report.jaccard),
                format!("{:.6}", report.micro_f1),
                format!("{:.6}", report.macro_f1),
            ];
            for (name, f) in model.emotions().names().iter().zip(&report.per_emotion_f1) {
                header.push(format!("f1_{name}"));
                row.push(format!("{f:.6}"));
            }
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
    };
    write_output(out.as_deref(), &text)
}

fn cmd_gen_data(spec_path: PathBuf, seed: Option<u64>, out: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&spec_path)
        .map_err(|e| usage(format!("cannot read {}: {e}", spec_path.display())))?;
    let mut spec: SyntheticSpec = toml::from_str(&text).map_err(usage)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let set = spec.emotion_set()?;
    let data = generate_synthetic(&spec)?;
    write_dataset_dir(&out, &data, &set)?;
    println!(
        "wrote {} train, {} dev, {} test examples to {}",
        data.train.len(),
        data.dev.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_inspect(
    data_dir: PathBuf,
    split: SplitArg,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let set = resolve_emotions(&mut cfg, &data_dir)?;
    let name: SplitName = split.into();
    let data = load_semeval_tsv(&data_dir.join(name.file_name()), name, &set)?;
    let rho = empirical_correlation(&data.labels()).map_err(|e| Failure::Data(e.to_string()))?;
    let theta = wheel_prior(&set).map_err(usage)?;
    let mut text = format!("prior,emotion,{}\n", set.names().join(","));
    for (label, prior) in [("rho", &rho), ("theta", &theta)] {
        for (i, name) in set.names().iter().enumerate() {
            let row: Vec<String> = (0..set.len())
                .map(|j| format!("{:.6}", prior.get(i, j)))
                .collect();
            text.push_str(&format!("{label},{name},{}\n", row.join(",")));
        }
    }
    write_output(out.as_deref(), &text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { run, out } => cmd_train(run, out),
        Command::Grid { run, out } => cmd_grid(run, out),
        Command::Eval {
            checkpoint,
            data_dir,
            split,
            format,
            threshold,
            out,
        } => cmd_eval(checkpoint, data_dir, split, format, threshold, out),
        Command::GenData { spec, seed, out } => cmd_gen_data(spec, seed, out),
        Command::InspectCorr {
            data_dir,
            split,
            config,
            out,
        } => cmd_inspect(data_dir, split, config, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
