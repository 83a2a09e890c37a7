use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advmia::evaluation::EvalReport;
use advmia::nn::checkpoint::save_model;
use advmia::runner::{
    evaluate_score_table, export_report, load_or_generate_data, run_pipeline, train_target,
    with_workers, write_atomic, write_binary_split, write_csv_split, ExperimentConfig,
    ExportExtras, ScoreTable,
};
use advmia::scores::read_score_csv;
use advmia::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Membership-inference privacy audits for small neural classifiers.
#[derive(Parser)]
#[command(name = "advmia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines); built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Csv,
    Binary,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset's member and non-member splits.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "csv")]
        format: DataFormat,
    },
    /// Train the target model and save it as `target.model`.
    TrainTarget {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full audit and write the report.
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Re-evaluate `scores_<strategy>.csv` dumps and rewrite the report.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding the score dumps; defaults to the output directory.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut overrides = Vec::new();
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &common.out {
        overrides.push(("output.dir".into(), out.display().to_string()));
    }
    match &common.config {
        Some(path) => ExperimentConfig::load(path, &overrides),
        None => ExperimentConfig::from_text("", &overrides),
    }
}

fn workers() -> Result<Option<usize>> {
    match std::env::var("ADVMIA_WORKERS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| {
                Error::Config(format!(
                    "ADVMIA_WORKERS must be a positive integer, got `{v}`"
                ))
            }),
        Err(_) => Ok(None),
    }
}

fn gen_data(config: &ExperimentConfig, format: DataFormat) -> Result<()> {
    let data = load_or_generate_data(config)?;
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir)?;
    for (name, split) in [("train", &data.train), ("heldout", &data.heldout)] {
        let mut buf = Vec::new();
        let file = match format {
            DataFormat::Csv => {
                write_csv_split(split, &mut buf)?;
                format!("{name}.csv")
            }
            DataFormat::Binary => {
                write_binary_split(split, data.manifest.classes, &mut buf)?;
                format!("{name}.bin")
            }
        };
        write_atomic(&dir.join(file), &buf)?;
    }
    let mut manifest = serde_json::to_vec_pretty(&data.manifest)?;
    manifest.push(b'\n');
    write_atomic(&dir.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} member and {} non-member samples to {}",
        data.train.len(),
        data.heldout.len(),
        dir.display()
    );
    Ok(())
}

fn train_cmd(config: &ExperimentConfig) -> Result<()> {
    let data = load_or_generate_data(config)?;
    let model = train_target(config, &data)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join("target.model");
    save_model(&path, &model)?;
    println!(
        "train accuracy {:.4}, heldout accuracy {:.4}; saved {}",
        model.accuracy(&data.train)?,
        model.accuracy(&data.heldout)?,
        path.display()
    );
    Ok(())
}

fn report_cmd(config: &ExperimentConfig, scores_dir: &Path) -> Result<()> {
    let mut records = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scores_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    for p in paths {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("scores_") && name.ends_with(".csv") {
            records.extend(read_score_csv(std::fs::File::open(&p)?)?);
        }
    }
    let table = ScoreTable::from_records(&records)?;
    let mut report = EvalReport::new(config.seed, config.echo());
    report.strategies = evaluate_score_table(
        &table,
        &config.protocol,
        &config.ratio_strategies,
        config.seed,
    )?;
    export_report(&report, &config.out_dir, &ExportExtras::none())?;
    println!(
        "re-rendered {} strategies into {}",
        report.strategies.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn summarize(report: &EvalReport) {
    if let Some(t) = &report.target {
        println!(
            "target: train accuracy {:.4}, heldout accuracy {:.4}",
            t.train_accuracy, t.heldout_accuracy
        );
    }
    for (name, s) in &report.strategies {
        println!(
            "{name:>12}  auroc {:.4} ± {:.4}  accuracy {:.4} ± {:.4}  balanced {:.4}  fpr {:.4}",
            s.auroc.mean,
            s.auroc.std,
            s.accuracy.mean,
            s.accuracy.std,
            s.threshold.balanced_accuracy,
            s.threshold.fpr
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = workers()?;
    match cli.command {
        Command::GenData { common, format } => gen_data(&load_config(&common)?, format),
        Command::TrainTarget { common } => {
            let config = load_config(&common)?;
            with_workers(workers, || train_cmd(&config))
        }
        Command::Audit { common } => {
            let config = load_config(&common)?;
            let report = run_pipeline(&config, workers)?;
            summarize(&report);
            Ok(())
        }
        Command::Report { common, scores } => {
            let config = load_config(&common)?;
            let dir = scores.unwrap_or_else(|| config.out_dir.clone());
            with_workers(workers, || report_cmd(&config, &dir))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
