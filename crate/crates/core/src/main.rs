use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use idrl::data::Dataset;
use idrl::harness::{
    prepare, run_ablation, run_benchmark, run_bias_sweep, run_grid, write_ablation_csv, write_grid_csv, write_json,
    write_sweep_csv, DataSource, ExperimentConfig, REPORT_SCHEMA_VERSION,
};
use idrl::io::{load_csv, save_csv};
use idrl::metrics::{evaluate, MetricsReport, SplitLabel};
use idrl::model::{fit, IdrlConfig, TrainedModel};
use idrl::synthetic::{generate, SyntheticSpec};
use idrl::{IdrlError, Result};

/// Treatment-effect estimation with infomax and domain-independent representations.
#[derive(Parser)]
#[command(name = "idrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed_base.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Defaults to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset: data.csv plus metadata.json.
    Generate(Common),
    /// Fit one model on the first replication's split: model.json, training_log.json.
    Train(Common),
    /// Score a saved model (--model), or run the full benchmark without one.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Ablation over the two MI terms: ablation.json, ablation.csv.
    Ablate(Common),
    /// Bias-amplification sweep over q: sweep_q.json, sweep_q.csv.
    SweepQ(Common),
    /// Correlation family × variable-count grid: grid.json, grid.csv.
    Grid(Common),
}

fn resolve(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed_base = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn source_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.source {
        DataSource::Synthetic(spec) => Ok(generate(&SyntheticSpec {
            sample_seed: cfg.seed_base,
            ..spec.clone()
        })?
        .0),
        DataSource::Csv { path } => load_csv(path),
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    config: &'a ExperimentConfig,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn envelope<T: Serialize>(cfg: &ExperimentConfig, body: T) -> Envelope<'_, T> {
    Envelope {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg,
        seed: cfg.seed_base,
        body,
    }
}

fn model_config(cfg: &ExperimentConfig) -> IdrlConfig {
    IdrlConfig {
        seed: cfg.seed_base,
        ..cfg.model.clone()
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match cli.command {
        Command::Generate(common) => {
            let (cfg, out) = resolve(&common)?;
            let DataSource::Synthetic(spec) = &cfg.source else {
                return Err(IdrlError::Config("generate needs a synthetic data source".into()));
            };
            let spec = SyntheticSpec {
                sample_seed: cfg.seed_base,
                ..spec.clone()
            };
            let (ds, _, meta) = generate(&spec)?;
            let data = out.join("data.csv");
            save_csv(&ds, &data)?;
            let path = out.join("metadata.json");
            write_json(&envelope(&cfg, serde_json::json!({ "metadata": meta })), &path)?;
            written.extend([data, path]);
        }
        Command::Train(common) => {
            let (cfg, out) = resolve(&common)?;
            let prepared = prepare(&source_dataset(&cfg)?, &cfg.split, cfg.seed_base)?;
            let (model, log) = fit(&model_config(&cfg), &prepared.train, &prepared.valid)?;
            let path = out.join("model.json");
            std::fs::write(&path, model.to_json()?)?;
            written.push(path);
            let path = out.join("training_log.json");
            write_json(&envelope(&cfg, serde_json::json!({ "log": log })), &path)?;
            written.push(path);
        }
        Command::Evaluate { common, model } => {
            let (cfg, out) = resolve(&common)?;
            match model {
                Some(model_path) => {
                    let model = TrainedModel::from_json(&std::fs::read_to_string(&model_path)?)?;
                    let prepared = prepare(&source_dataset(&cfg)?, &cfg.split, cfg.seed_base)?;
                    let in_set = prepared.train.concat(&prepared.valid)?;
                    let score = |ds: &Dataset, label| -> Result<MetricsReport> {
                        let (y0, y1) = model.predict(&ds.x)?;
                        evaluate(ds, &y0, &y1, label)
                    };
                    let reports = vec![
                        score(&in_set, SplitLabel::InSample)?,
                        score(&prepared.test, SplitLabel::OutSample)?,
                    ];
                    let path = out.join("metrics.json");
                    let body = serde_json::json!({
                        "model": model_path,
                        "method": model.config.method_label(),
                        "reports": reports,
                    });
                    write_json(&envelope(&cfg, body), &path)?;
                    written.push(path);
                }
                None => {
                    let report = run_benchmark(&cfg)?;
                    let path = out.join("benchmark.json");
                    write_json(&report, &path)?;
                    written.push(path);
                }
            }
        }
        Command::Ablate(common) => {
            let (cfg, out) = resolve(&common)?;
            let report = run_ablation(&cfg)?;
            let json = out.join("ablation.json");
            write_json(&report, &json)?;
            let csv = out.join("ablation.csv");
            write_ablation_csv(&report, &csv)?;
            written.extend([json, csv]);
        }
        Command::SweepQ(common) => {
            let (cfg, out) = resolve(&common)?;
            let report = run_bias_sweep(&cfg)?;
            let json = out.join("sweep_q.json");
            write_json(&report, &json)?;
            let csv = out.join("sweep_q.csv");
            write_sweep_csv(&report, &csv)?;
            written.extend([json, csv]);
        }
        Command::Grid(common) => {
            let (cfg, out) = resolve(&common)?;
            let report = run_grid(&cfg)?;
            let json = out.join("grid.json");
            write_json(&report, &json)?;
            let csv = out.join("grid.csv");
            write_grid_csv(&report, &csv)?;
            written.extend([json, csv]);
        }
    }
    Ok(written)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", display(&p));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
