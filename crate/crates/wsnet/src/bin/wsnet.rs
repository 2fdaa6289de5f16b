//! Experiment driver: generate data, pre-train the style encoder, extract
//! embeddings, train and evaluate recognizers, run writer adaptation, and
//! aggregate reports. One TOML configuration file per experiment; a few
//! flags override config fields and are recorded in the run manifest.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wsnet::adaptation::AdaptMethod;
use wsnet::config::ExperimentConfig;
use wsnet::error::Error;
use wsnet::experiment;
use wsnet::recognizer::ConditioningMode;

#[derive(Parser)]
#[command(name = "wsnet", version, about = "writer-style conditioned handwriting recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the conditioning mode (baseline, single_adain, all_adain).
    #[arg(long)]
    mode: Option<String>,
    /// Override the embedding dimension.
    #[arg(long)]
    ed: Option<usize>,
    /// Override the embedding initialization (normal, pretrained).
    #[arg(long)]
    embedding_init: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpora and the cluster partition.
    Generate(ConfigArgs),
    /// Contrastive pre-training of the writer style encoder.
    TrainEncoder(ConfigArgs),
    /// Aggregate per-writer embeddings from the trained encoder.
    ExtractEmbeddings(ConfigArgs),
    /// Train the recognizer under the configured recipe.
    Train(ConfigArgs),
    /// Decode the test splits and write CER reports.
    Evaluate {
        #[command(flatten)]
        common: ConfigArgs,
        /// Checkpoint to evaluate (defaults to this run's final checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Writer-independent adaptation runs on the held-out corpus.
    Adapt {
        #[command(flatten)]
        common: ConfigArgs,
        /// Baseline checkpoint (defaults to the experiment's baseline run).
        #[arg(long)]
        baseline_checkpoint: Option<PathBuf>,
        /// Comma-separated subset of methods (select,optimize,finetune,encode).
        #[arg(long)]
        methods: Option<String>,
        /// Comma-separated subset of adaptation cluster sizes.
        #[arg(long)]
        clusters: Option<String>,
    },
    /// Aggregate evaluation/adaptation artifacts into CSV tables and charts.
    Report {
        /// Experiment output directories to aggregate.
        run_dirs: Vec<PathBuf>,
        /// Where to write tables and charts.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &ConfigArgs) -> Result<Vec<String>, Error> {
    let mut overrides = Vec::new();
    if let Some(dir) = &args.output_dir {
        cfg.experiment.output_dir = dir.clone();
        overrides.push(format!("output_dir={}", dir.display()));
    }
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
        overrides.push(format!("seed={seed}"));
    }
    if let Some(mode) = &args.mode {
        cfg.net.mode = match mode.as_str() {
            "baseline" => ConditioningMode::Baseline,
            "single_adain" => ConditioningMode::SingleAdain,
            "all_adain" => ConditioningMode::AllAdain,
            other => return Err(Error::Config(format!("unknown mode {other}"))),
        };
        overrides.push(format!("mode={mode}"));
    }
    if let Some(ed) = args.ed {
        cfg.net.ed = ed;
        overrides.push(format!("ed={ed}"));
    }
    if let Some(init) = &args.embedding_init {
        cfg.net.embedding_init = match init.as_str() {
            "normal" => wsnet::wsb::EmbeddingInit::Normal,
            "pretrained" => wsnet::wsb::EmbeddingInit::Pretrained,
            other => return Err(Error::Config(format!("unknown embedding init {other}"))),
        };
        overrides.push(format!("embedding_init={init}"));
    }
    cfg.validate()?;
    Ok(overrides)
}

fn parse_methods(s: &str) -> Result<Vec<AdaptMethod>, Error> {
    s.split(',')
        .map(|m| match m.trim() {
            "select" => Ok(AdaptMethod::Select),
            "optimize" => Ok(AdaptMethod::Optimize),
            "finetune" => Ok(AdaptMethod::Finetune),
            "encode" => Ok(AdaptMethod::Encode),
            other => Err(Error::Config(format!("unknown method {other}"))),
        })
        .collect()
}

fn parse_clusters(s: &str) -> Result<Vec<usize>, Error> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad cluster size {c}")))
        })
        .collect()
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            let overrides = apply_overrides(&mut cfg, &args)?;
            experiment::cmd_generate(&cfg, &overrides)
        }
        Command::TrainEncoder(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            let overrides = apply_overrides(&mut cfg, &args)?;
            experiment::cmd_train_encoder(&cfg, &overrides)
        }
        Command::ExtractEmbeddings(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            let overrides = apply_overrides(&mut cfg, &args)?;
            experiment::cmd_extract_embeddings(&cfg, &overrides)
        }
        Command::Train(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            let overrides = apply_overrides(&mut cfg, &args)?;
            experiment::cmd_train(&cfg, &overrides)
        }
        Command::Evaluate { common, checkpoint } => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            let overrides = apply_overrides(&mut cfg, &common)?;
            let report = experiment::cmd_evaluate(&cfg, checkpoint.as_deref(), &overrides)?;
            for row in &report.rows {
                println!("{}\t{:.4}", row.split, row.cer);
            }
            Ok(())
        }
        Command::Adapt {
            common,
            baseline_checkpoint,
            methods,
            clusters,
        } => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            let overrides = apply_overrides(&mut cfg, &common)?;
            let methods = methods.as_deref().map(parse_methods).transpose()?;
            let clusters = clusters.as_deref().map(parse_clusters).transpose()?;
            experiment::cmd_adapt(
                &cfg,
                baseline_checkpoint.as_deref(),
                methods,
                clusters,
                &overrides,
            )
        }
        Command::Report { run_dirs, out } => {
            if run_dirs.is_empty() {
                return Err(Error::Config("report needs at least one run directory".into()));
            }
            experiment::cmd_report(&run_dirs, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
