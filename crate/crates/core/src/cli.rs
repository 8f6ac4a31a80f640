//! Command line: `synth`, `train`, `evaluate`, `predict` and `serve`.
//!
//! Every subcommand works offline. Usage errors exit with status 2, other
//! failures with 1.

use std::ffi::OsString;
use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::avm::{save_model, train, TargetTransform, TrainParams};
use crate::domain::{PropertyConfiguration, PropertyType};
use crate::eval::{run_ablation, AblationConfig};
use crate::ingest::{DataDir, Dataset};
use crate::service::{handle_valuation, serve, ServiceConfig, Services, Snapshot, ValuationRequest};
use crate::synth::{synth_generate, SynthConfig, DEFAULT_SIZE};

#[derive(Debug, Parser)]
#[command(name = "valuate", version, about = "Explainable automated property valuation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus into a data directory.
    Synth(SynthArgs),
    /// Train one model per property type found in a data directory.
    Train(TrainArgs),
    /// Run the imputation ablation and write a MAPE report.
    Evaluate(EvaluateArgs),
    /// Value one property given as JSON and print the report.
    Predict(PredictArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Records per property type.
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    pub size: usize,
    #[arg(long, default_value_t = 0.8)]
    pub spatial_correlation: f64,
    /// Property types to generate; all when omitted.
    #[arg(long = "type", value_name = "TYPE")]
    pub types: Vec<PropertyType>,
    /// Data directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = TrainParams::default().num_trees)]
    pub num_trees: usize,
    #[arg(long, default_value_t = TrainParams::default().max_leaves)]
    pub max_leaves: usize,
    #[arg(long, default_value_t = TrainParams::default().min_samples_leaf)]
    pub min_samples_leaf: usize,
    #[arg(long, default_value_t = TrainParams::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainParams::default().feature_histogram_bins)]
    pub bins: usize,
    #[arg(long, default_value_t = 1.0)]
    pub row_subsample: f64,
    /// Fit unit price directly instead of its logarithm.
    #[arg(long)]
    pub no_log_target: bool,
}

impl ModelArgs {
    fn params(&self, seed: u64) -> TrainParams {
        TrainParams {
            num_trees: self.num_trees,
            max_leaves: self.max_leaves,
            min_samples_leaf: self.min_samples_leaf,
            learning_rate: self.learning_rate,
            feature_histogram_bins: self.bins,
            row_subsample: self.row_subsample,
            target_transform: if self.no_log_target {
                TargetTransform::Identity
            } else {
                TargetTransform::Log
            },
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "type", value_name = "TYPE")]
    pub types: Vec<PropertyType>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "type", value_name = "TYPE")]
    pub types: Vec<PropertyType>,
    /// Share of non-kept features hidden per test instance.
    #[arg(long, default_value_t = 0.5)]
    pub mask_rate: f64,
    #[arg(long, default_value_t = crate::domain::DEFAULT_K)]
    pub k: usize,
    /// First seed; runs use seed, seed + 1, ...
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub runs: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV report path; the text table goes next to it with a .txt extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Valuation request or property document (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Property configuration (JSON); overrides one in the input.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("VALUATE_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn selected(types: &[PropertyType]) -> Vec<PropertyType> {
    if types.is_empty() {
        PropertyType::ALL.to_vec()
    } else {
        types.to_vec()
    }
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    if a.size == 0 {
        bail!("--size must be at least 1");
    }
    if !(0.0..=1.0).contains(&a.spatial_correlation) {
        bail!("--spatial-correlation must lie in [0, 1]");
    }
    let dir = DataDir::new(&a.out);
    let config = SynthConfig::new(a.seed, a.size, a.spatial_correlation);
    for ty in selected(&a.types) {
        let dataset = synth_generate(config, ty);
        dir.save_schema(dataset.schema())?;
        dir.save_dataset(&dataset)?;
        tracing::info!(property_type = %ty, records = dataset.len(), path = %dir.dataset_path(ty).display(), "wrote dataset");
    }
    Ok(())
}

fn load_datasets(dir: &DataDir, types: &[PropertyType]) -> anyhow::Result<Vec<Dataset>> {
    let schema = dir.load_schema()?;
    let wanted = if types.is_empty() {
        dir.available_types()
    } else {
        types.to_vec()
    };
    if wanted.is_empty() {
        bail!("no datasets under {}", dir.root().display());
    }
    wanted
        .into_iter()
        .map(|ty| {
            let (dataset, rejects) = dir
                .load_dataset(ty, &schema)
                .with_context(|| format!("loading {ty} dataset"))?;
            if !rejects.is_empty() {
                tracing::warn!(property_type = %ty, rejected = rejects.len(), "rows rejected");
            }
            Ok(dataset)
        })
        .collect()
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let dir = DataDir::new(&a.data);
    let params = a.model.params(a.seed);
    params.validate()?;
    for dataset in load_datasets(&dir, &a.types)? {
        let ty = dataset.property_type();
        let started = Instant::now();
        let model = train(&dataset, &params).with_context(|| format!("training {ty}"))?;
        let path = dir.model_path(ty);
        save_model(&path, &model)?;
        tracing::info!(
            property_type = %ty,
            trees = model.trees().len(),
            seconds = started.elapsed().as_secs_f64(),
            path = %path.display(),
            "trained model"
        );
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.mask_rate) {
        bail!("--mask-rate must lie in [0, 1]");
    }
    if a.k == 0 || a.runs == 0 {
        bail!("--k and --runs must be at least 1");
    }
    let dir = DataDir::new(&a.data);
    let datasets = load_datasets(&dir, &a.types)?;
    let config = AblationConfig {
        train_params: a.model.params(a.seed),
        configuration: PropertyConfiguration::unconstrained(a.k),
        mask_rate: a.mask_rate,
        seeds: (a.seed..a.seed + a.runs).collect(),
        test_fraction: a.test_fraction,
        ..AblationConfig::default()
    };
    config.train_params.validate()?;
    let started = Instant::now();
    let result = run_ablation(&datasets, &config)?;
    let table = result.to_table();
    println!("{table}");
    tracing::info!(seconds = started.elapsed().as_secs_f64(), "ablation finished");
    if let Some(out) = &a.out {
        write_file(out, &result.to_csv())?;
        write_file(&out.with_extension("txt"), &table)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_predict(a: &PredictArgs) -> anyhow::Result<()> {
    let mut request: ValuationRequest = read_json(&a.input)?;
    if let Some(path) = &a.config {
        request.configuration = Some(read_json(path)?);
    }
    let snapshot = Snapshot::load(&DataDir::new(&a.data))?;
    let report = handle_valuation(&snapshot, &Services::default(), &request)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> anyhow::Result<()> {
    let mut config = ServiceConfig::load(&a.config)?;
    if let Some(bind) = a.bind {
        config.bind = bind;
    }
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(config))
}
