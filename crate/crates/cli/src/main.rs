use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use semtm_core::eval::EvalReport;
use semtm_core::pipeline::{self, ArtifactPaths, PipelineConfig};

#[derive(Parser)]
#[command(name = "semtm", version, about = "Tsetlin machine text classification with \
generated-corpus pretraining and semantic feature enrichment")]
struct Cli {
    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Pipeline config, TOML. Relative paths inside it resolve against its
    /// own directory.
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the whole pipeline, resuming past stages that already finished.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Run once per seed into seed-<n> subdirectories and summarize.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Discover sub-intents (or write the pinned ones) to subintents.json.
    Discover {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Generate the staged synthetic corpus for the discovered sub-intents.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Build the vocabulary over the train set plus the synthetic corpus.
    BuildVocab {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Pretrain the monotone clause pools on the synthetic corpus.
    TrainNtm {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Extract per-sub-intent feature groups from the pretrained pools.
    ExtractFeatures {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Enrich the train and test sets with indicator columns.
    Enrich {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train the classifier on the enriched train set.
    TrainTm {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Evaluate the classifier on the enriched test set.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Explain one prediction using the artifacts of a finished run.
    Explain {
        #[command(flatten)]
        config: ConfigArg,
        /// Text to classify.
        #[arg(long, conflicts_with = "file")]
        text: Option<String>,
        /// File whose contents are the text to classify.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Emit the explanation as JSON instead of plain text.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match cli.cmd {
        Cmd::Run { config, seeds } => run(&load(&config)?, &seeds),
        Cmd::Discover { config } => {
            let cfg = load(&config)?;
            pipeline::run_stage(&cfg, "subintents")?;
            let paths = ArtifactPaths::new(&cfg.output_dir);
            let raw = fs::read_to_string(paths.subintents())?;
            let records: Vec<serde_json::Value> = serde_json::from_str(&raw)?;
            println!("{} sub-intents -> {}", records.len(), paths.subintents().display());
            for r in &records {
                if let Some(name) = r.get("name").and_then(|v| v.as_str()) {
                    println!("  {name}");
                }
            }
            Ok(())
        }
        Cmd::Generate { config } => stage(&load(&config)?, "corpus"),
        Cmd::BuildVocab { config } => stage(&load(&config)?, "vocab"),
        Cmd::TrainNtm { config } => stage(&load(&config)?, "ntm"),
        Cmd::ExtractFeatures { config } => stage(&load(&config)?, "features"),
        Cmd::Enrich { config } => stage(&load(&config)?, "enrich"),
        Cmd::TrainTm { config } => stage(&load(&config)?, "tm"),
        Cmd::Eval { config } => {
            let cfg = load(&config)?;
            pipeline::run_stage(&cfg, "eval")?;
            let paths = ArtifactPaths::new(&cfg.output_dir);
            let raw = fs::read_to_string(paths.report())?;
            let report: EvalReport = serde_json::from_str(&raw)?;
            print_report(&report);
            println!("report: {}", paths.report().display());
            Ok(())
        }
        Cmd::Explain { config, text, file, json } => {
            let cfg = load(&config)?;
            let text = match (text, file) {
                (Some(t), _) => t,
                (None, Some(p)) => fs::read_to_string(&p)
                    .with_context(|| format!("reading {}", p.display()))?,
                (None, None) => anyhow::bail!("pass --text or --file"),
            };
            let paths = ArtifactPaths::new(&cfg.output_dir);
            let explanation = pipeline::explain_text(&cfg, &paths, text.trim())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&explanation)?);
            } else {
                print!("{}", explanation.render());
            }
            Ok(())
        }
    }
}

fn load(arg: &ConfigArg) -> Result<PipelineConfig> {
    PipelineConfig::load(&arg.config)
        .with_context(|| format!("loading config {}", arg.config.display()))
}

fn stage(cfg: &PipelineConfig, name: &str) -> Result<()> {
    pipeline::run_stage(cfg, name)?;
    println!("stage {name}: done");
    Ok(())
}

fn run(cfg: &PipelineConfig, seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        let run = pipeline::run_pipeline(cfg)?;
        for s in &run.stages {
            println!("stage {}: {}", s.stage, if s.skipped { "skipped" } else { "done" });
        }
        print_report(&run.report);
        println!("report: {}", run.paths.report().display());
        return Ok(());
    }
    let summary = pipeline::run_seeds(cfg, seeds)?;
    for (seed, report) in &summary.per_seed {
        println!("seed {seed}: accuracy {:.4}", report.accuracy);
    }
    println!(
        "accuracy over {} seeds: {:.4} ± {:.4}",
        summary.per_seed.len(),
        summary.mean_accuracy,
        summary.stddev_accuracy
    );
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!(
        "accuracy {:.4}  micro-f1 {:.4}  (n={})",
        report.accuracy, report.micro_f1, report.meta.test_size
    );
    for c in &report.per_class {
        println!(
            "  {}: precision {:.4}  recall {:.4}  support {}",
            c.label, c.precision, c.recall, c.support
        );
    }
}
