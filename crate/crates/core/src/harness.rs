//! Experiment configuration and the reproduction workflows: benchmark runs,
//! ablations, bias sweeps and the correlation / variable-count grid.
//!
//! Every workflow derives all randomness from `seed_base + replication`, so a
//! report carrying its resolved config is enough to rerun it bit for bit.
//! Jobs may run on several workers (`IDRL_THREADS`), but results are always
//! collected in job order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, standardize, Dataset, SplitSpec};
use crate::error::{IdrlError, Result};
use crate::io::load_csv;
use crate::metrics::{evaluate, knn_estimator, MetricsReport, SplitLabel};
use crate::model::{fit, IdrlConfig};
use crate::synthetic::{amplify_bias, generate, CorrelationFamily, SyntheticSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "IDRL_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Regenerated per replication with `sample_seed = seed_base + rep`.
    Synthetic(SyntheticSpec),
    /// One fixed dataset; replications differ in split and model seeds.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pehe,
    Ate,
    PolicyRisk,
    Att,
    FactualRmse,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Pehe,
        Metric::Ate,
        Metric::PolicyRisk,
        Metric::Att,
        Metric::FactualRmse,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasSweepConfig {
    pub q_values: Vec<f64>,
    /// The candidate pool holds `pool_factor * n_samples` units.
    pub pool_factor: usize,
}

impl Default for BiasSweepConfig {
    fn default() -> Self {
        Self {
            q_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            pool_factor: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub correlation_families: Vec<CorrelationFamily>,
    pub instrumental_counts: Vec<usize>,
    pub irrelevant_counts: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            correlation_families: CorrelationFamily::ALL.to_vec(),
            instrumental_counts: vec![10, 20],
            irrelevant_counts: vec![20, 40],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub model: IdrlConfig,
    pub split: SplitSpec,
    pub replications: usize,
    pub seed_base: u64,
    pub metrics: Vec<Metric>,
    /// Also train the variant with both MI terms disabled.
    pub include_tarnet: bool,
    /// Adds a k-nearest-neighbour baseline when set.
    pub knn_k: Option<usize>,
    pub bias_sweep: BiasSweepConfig,
    pub grid: GridConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticSpec::default()),
            model: experiment_model(),
            split: SplitSpec::default(),
            replications: 10,
            seed_base: 0,
            metrics: Metric::ALL.to_vec(),
            include_tarnet: true,
            knn_k: None,
            bias_sweep: BiasSweepConfig::default(),
            grid: GridConfig::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Training settings used by the experiment workflows: minibatches of 128,
/// weight decay 3e-2 and 150 epochs with best-validation selection.
pub fn experiment_model() -> IdrlConfig {
    IdrlConfig {
        epochs: 150,
        batch_size: Some(128),
        weight_decay: 3e-2,
        ..IdrlConfig::default()
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(IdrlError::Config("replications must be at least 1".into()));
        }
        self.model.validate()?;
        self.split.validate()?;
        match &self.source {
            DataSource::Synthetic(spec) => spec.validate()?,
            DataSource::Csv { path } => {
                if !path.is_file() {
                    return Err(IdrlError::Config(format!(
                        "dataset {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        if self.knn_k == Some(0) {
            return Err(IdrlError::Config("knn_k must be at least 1".into()));
        }
        if self.bias_sweep.q_values.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(IdrlError::Config("q values must lie in [0, 1]".into()));
        }
        if self.bias_sweep.pool_factor == 0 {
            return Err(IdrlError::Config("pool_factor must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64).map(|r| self.seed_base + r).collect()
    }

    fn synthetic_spec(&self, workflow: &str) -> Result<&SyntheticSpec> {
        match &self.source {
            DataSource::Synthetic(spec) => Ok(spec),
            DataSource::Csv { .. } => Err(IdrlError::Config(format!(
                "{workflow} needs a synthetic data source"
            ))),
        }
    }
}

pub fn configured_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Runs `f` over `jobs` on at most `IDRL_THREADS` workers; output order
/// matches input order.
fn run_jobs<J, T, F>(jobs: &[J], f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync + Send,
{
    let threads = configured_threads();
    if threads == 1 {
        return jobs.iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| IdrlError::Config(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Idrl(IdrlConfig),
    Knn(usize),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Idrl(c) => c.method_label().to_string(),
            Method::Knn(_) => "knn".to_string(),
        }
    }
}

fn with_seed(model: &IdrlConfig, seed: u64) -> IdrlConfig {
    IdrlConfig {
        seed,
        ..model.clone()
    }
}

fn tarnet(model: &IdrlConfig) -> IdrlConfig {
    IdrlConfig {
        disable_mi_s: true,
        disable_mi_h: true,
        ..model.clone()
    }
}

fn benchmark_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let mut out = vec![Method::Idrl(cfg.model.clone())];
    if cfg.include_tarnet && !(cfg.model.disable_mi_s && cfg.model.disable_mi_h) {
        out.push(Method::Idrl(tarnet(&cfg.model)));
    }
    if let Some(k) = cfg.knn_k {
        out.push(Method::Knn(k));
    }
    out
}

fn ablation_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let base = IdrlConfig {
        disable_mi_s: false,
        disable_mi_h: false,
        ..cfg.model.clone()
    };
    let mut out = vec![
        Method::Idrl(base.clone()),
        Method::Idrl(IdrlConfig {
            disable_mi_s: true,
            ..base.clone()
        }),
        Method::Idrl(IdrlConfig {
            disable_mi_h: true,
            ..base.clone()
        }),
    ];
    if cfg.include_tarnet {
        out.push(Method::Idrl(tarnet(&base)));
    }
    out
}

/// Metrics for one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub replication: usize,
    pub seed: u64,
    /// Best-validation epoch; absent for non-neural baselines.
    pub best_epoch: Option<usize>,
    pub in_sample: MetricsReport,
    pub out_sample: MetricsReport,
}

/// One replication's data, already split.
pub struct Prepared {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

pub fn prepare(ds: &Dataset, split_spec: &SplitSpec, seed: u64) -> Result<Prepared> {
    let (train, valid, test) = split(
        ds,
        &SplitSpec {
            seed,
            ..*split_spec
        },
    )?;
    Ok(Prepared { train, valid, test })
}

fn restrict(mut r: MetricsReport, metrics: &[Metric]) -> MetricsReport {
    if !metrics.contains(&Metric::Pehe) {
        r.sqrt_pehe = None;
    }
    if !metrics.contains(&Metric::Ate) {
        r.eps_ate = None;
    }
    if !metrics.contains(&Metric::PolicyRisk) {
        r.r_pol = None;
        r.warnings.clear();
    }
    if !metrics.contains(&Metric::Att) {
        r.eps_att = None;
    }
    r
}

/// Trains `method` on one prepared replication and evaluates it in-sample
/// (train + valid) and out-of-sample (test).
pub fn run_method(
    method: &Method,
    data: &Prepared,
    replication: usize,
    seed: u64,
    metrics: &[Metric],
) -> Result<RunResult> {
    let in_set = data.train.concat(&data.valid)?;
    let (in_pred, out_pred, best_epoch) = match method {
        Method::Idrl(model) => {
            let (trained, _) = fit(&with_seed(model, seed), &data.train, &data.valid)?;
            (
                trained.predict(&in_set.x)?,
                trained.predict(&data.test.x)?,
                Some(trained.best_epoch),
            )
        }
        Method::Knn(k) => {
            let (_, train_std, others) = standardize(&data.train, &[&in_set, &data.test])?;
            (
                knn_estimator(&train_std, &others[0].x, *k)?,
                knn_estimator(&train_std, &others[1].x, *k)?,
                None,
            )
        }
    };
    let in_sample = evaluate(&in_set, &in_pred.0, &in_pred.1, SplitLabel::InSample)?;
    let out_sample = evaluate(&data.test, &out_pred.0, &out_pred.1, SplitLabel::OutSample)?;
    Ok(RunResult {
        method: method.label(),
        replication,
        seed,
        best_epoch,
        in_sample: restrict(in_sample, metrics),
        out_sample: restrict(out_sample, metrics),
    })
}

/// Mean of each metric over replications, per method and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub split_label: SplitLabel,
    pub replications: usize,
    pub sqrt_pehe: Option<f64>,
    pub eps_ate: Option<f64>,
    pub r_pol: Option<f64>,
    pub eps_att: Option<f64>,
    pub factual_rmse: f64,
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn aggregate(results: &[RunResult]) -> Vec<Aggregate> {
    let mut methods: Vec<&str> = Vec::new();
    for r in results {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for method in methods {
        for label in [SplitLabel::InSample, SplitLabel::OutSample] {
            let reports: Vec<&MetricsReport> = results
                .iter()
                .filter(|r| r.method == method)
                .map(|r| match label {
                    SplitLabel::InSample => &r.in_sample,
                    SplitLabel::OutSample => &r.out_sample,
                })
                .collect();
            let col = |f: fn(&MetricsReport) -> Option<f64>| -> Vec<Option<f64>> {
                reports.iter().map(|r| f(r)).collect()
            };
            out.push(Aggregate {
                method: method.to_string(),
                split_label: label,
                replications: reports.len(),
                sqrt_pehe: mean_of(&col(|r| r.sqrt_pehe)),
                eps_ate: mean_of(&col(|r| r.eps_ate)),
                r_pol: mean_of(&col(|r| r.r_pol)),
                eps_att: mean_of(&col(|r| r.eps_att)),
                factual_rmse: mean_of(&col(|r| Some(r.factual_rmse))).unwrap_or(f64::NAN),
            });
        }
    }
    out
}

impl Aggregate {
    pub fn find<'a>(aggs: &'a [Aggregate], method: &str, label: SplitLabel) -> Option<&'a Aggregate> {
        aggs.iter().find(|a| a.method == method && a.split_label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub workflow: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub results: Vec<RunResult>,
    pub aggregates: Vec<Aggregate>,
}

fn load_source(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    match &cfg.source {
        DataSource::Synthetic(spec) => Ok(generate(&SyntheticSpec {
            sample_seed: seed,
            ..spec.clone()
        })?
        .0),
        DataSource::Csv { path } => load_csv(path),
    }
}

fn run_methods(cfg: &ExperimentConfig, methods: &[Method], workflow: &str) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let prepared: Vec<Prepared> = seeds
        .iter()
        .map(|&seed| prepare(&load_source(cfg, seed)?, &cfg.split, seed))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, &Method)> = (0..seeds.len())
        .flat_map(|rep| methods.iter().map(move |m| (rep, m)))
        .collect();
    let results = run_jobs(&jobs, |&(rep, method)| {
        run_method(method, &prepared[rep], rep, seeds[rep], &cfg.metrics)
    })?;
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        workflow: workflow.to_string(),
        config: cfg.clone(),
        aggregates: aggregate(&results),
        seeds,
        results,
    })
}

/// The configured model, plus the tarnet-equivalent and kNN baselines when
/// enabled, over every replication.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    run_methods(cfg, &benchmark_methods(cfg), "benchmark")
}

/// Full model, without the MI(r,s) term, without the MI(r,h) term, and
/// optionally without both; all variants share seeds.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    run_methods(cfg, &ablation_methods(cfg), "ablation")
}

/// One row per method of an ablation table, out-of-sample means.
pub fn ablation_table(report: &BenchmarkReport) -> Vec<Aggregate> {
    report
        .aggregates
        .iter()
        .filter(|a| a.split_label == SplitLabel::OutSample)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: f64,
    pub method: String,
    pub sqrt_pehe: f64,
    pub eps_ate: f64,
    pub replication: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn mean(&self, q: f64, method: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.q == q && r.method == method)
            .map(|r| r.sqrt_pehe)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn sweep_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    benchmark_methods(cfg)
        .into_iter()
        .filter(|m| matches!(m, Method::Idrl(_)))
        .collect()
}

fn require_ground_truth(r: &RunResult) -> Result<(f64, f64)> {
    match (r.out_sample.sqrt_pehe, r.out_sample.eps_ate) {
        (Some(p), Some(a)) => Ok((p, a)),
        _ => Err(IdrlError::Config(
            "sweeps need the pehe and ate metrics enabled".into(),
        )),
    }
}

/// For each replication and q: draws a `pool_factor * n` pool, keeps `n`
/// units via bias amplification at level q, then runs the full pipeline.
/// Every q level is computed independently of the others.
pub fn run_bias_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let spec = cfg.synthetic_spec("bias sweep")?;
    let seeds = cfg.seeds();
    let q_values = &cfg.bias_sweep.q_values;
    let methods = sweep_methods(cfg);
    let mut prepared = Vec::new();
    for &seed in &seeds {
        let pool_spec = SyntheticSpec {
            sample_seed: seed,
            n_samples: spec.n_samples * cfg.bias_sweep.pool_factor,
            ..spec.clone()
        };
        let (pool, gt, _) = generate(&pool_spec)?;
        for &q in q_values {
            let ds = amplify_bias(&pool, &gt, q, spec.n_samples, seed)?;
            prepared.push(prepare(&ds, &cfg.split, seed)?);
        }
    }
    let jobs: Vec<(usize, usize, &Method)> = (0..seeds.len())
        .flat_map(|rep| (0..q_values.len()).map(move |qi| (rep, qi)))
        .flat_map(|(rep, qi)| methods.iter().map(move |m| (rep, qi, m)))
        .collect();
    let rows = run_jobs(&jobs, |&(rep, qi, method)| {
        let r = run_method(
            method,
            &prepared[rep * q_values.len() + qi],
            rep,
            seeds[rep],
            &cfg.metrics,
        )?;
        let (sqrt_pehe, eps_ate) = require_ground_truth(&r)?;
        Ok(SweepRow {
            q: q_values[qi],
            method: r.method,
            sqrt_pehe,
            eps_ate,
            replication: rep,
        })
    })?;
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        seeds,
        rows,
    })
}

/// One grid cell and replication; metrics are keyed by method label in the
/// order the methods ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub family: CorrelationFamily,
    pub n_instrumental: usize,
    pub n_irrelevant: usize,
    pub replication: usize,
    pub sqrt_pehe: Vec<(String, f64)>,
    pub eps_ate: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub rows: Vec<GridRow>,
}

impl GridReport {
    /// Mean out-of-sample √PEHE of `method` over the replications of a cell.
    pub fn cell_mean(
        &self,
        family: CorrelationFamily,
        n_instrumental: usize,
        n_irrelevant: usize,
        method: &str,
    ) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| {
                r.family == family && r.n_instrumental == n_instrumental && r.n_irrelevant == n_irrelevant
            })
            .filter_map(|r| r.sqrt_pehe.iter().find(|(m, _)| m == method).map(|(_, v)| *v))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Full factorial over correlation family × instrumental count × irrelevant
/// count, each cell a benchmark run of the sweep methods.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridReport> {
    cfg.validate()?;
    let spec = cfg.synthetic_spec("grid")?;
    let g = &cfg.grid;
    if g.correlation_families.is_empty() || g.instrumental_counts.is_empty() || g.irrelevant_counts.is_empty() {
        return Err(IdrlError::Config("grid axes must be nonempty".into()));
    }
    let seeds = cfg.seeds();
    let methods = sweep_methods(cfg);
    let mut cells = Vec::new();
    for &family in &g.correlation_families {
        for &n_instrumental in &g.instrumental_counts {
            for &n_irrelevant in &g.irrelevant_counts {
                cells.push((family, n_instrumental, n_irrelevant));
            }
        }
    }
    let mut prepared = Vec::new();
    for &(family, n_instrumental, n_irrelevant) in &cells {
        for &seed in &seeds {
            let cell_spec = SyntheticSpec {
                correlation_family: family,
                n_instrumental,
                n_irrelevant,
                sample_seed: seed,
                ..spec.clone()
            };
            cell_spec.validate()?;
            prepared.push(prepare(&generate(&cell_spec)?.0, &cfg.split, seed)?);
        }
    }
    let jobs: Vec<(usize, usize, &Method)> = (0..cells.len())
        .flat_map(|c| (0..seeds.len()).map(move |rep| (c, rep)))
        .flat_map(|(c, rep)| methods.iter().map(move |m| (c, rep, m)))
        .collect();
    let results = run_jobs(&jobs, |&(c, rep, method)| {
        let r = run_method(method, &prepared[c * seeds.len() + rep], rep, seeds[rep], &cfg.metrics)?;
        let metrics = require_ground_truth(&r)?;
        Ok((r.method, metrics))
    })?;
    let mut rows = Vec::new();
    for (k, chunk) in results.chunks(methods.len()).enumerate() {
        let (c, rep) = (k / seeds.len(), k % seeds.len());
        let (family, n_instrumental, n_irrelevant) = cells[c];
        rows.push(GridRow {
            family,
            n_instrumental,
            n_irrelevant,
            replication: rep,
            sqrt_pehe: chunk.iter().map(|(m, (p, _))| (m.clone(), *p)).collect(),
            eps_ate: chunk.iter().map(|(m, (_, a))| (m.clone(), *a)).collect(),
        });
    }
    Ok(GridReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        seeds,
        methods: methods.iter().map(Method::label).collect(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Output

/// First line of every CSV artifact: `# ` followed by a JSON object holding
/// the schema version and the resolved config. Readers skip it as a comment.
fn provenance_line(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<String> {
    let v = serde_json::json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": cfg,
        "seeds": seeds,
    });
    Ok(format!("# {}\n", serde_json::to_string(&v)?))
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Out-of-sample comparison table: one row per method.
pub fn write_ablation_csv(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(provenance_line(&report.config, &report.seeds)?.as_bytes())?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["method", "replications", "sqrt_pehe", "eps_ate", "r_pol", "eps_att", "factual_rmse"])?;
    for a in ablation_table(report) {
        w.write_record([
            a.method.clone(),
            a.replications.to_string(),
            opt(a.sqrt_pehe),
            opt(a.eps_ate),
            opt(a.r_pol),
            opt(a.eps_att),
            format!("{:?}", a.factual_rmse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(provenance_line(&report.config, &report.seeds)?.as_bytes())?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["q", "method", "sqrt_pehe", "eps_ate", "replication"])?;
    for r in &report.rows {
        w.write_record([
            format!("{:?}", r.q),
            r.method.clone(),
            format!("{:?}", r.sqrt_pehe),
            format!("{:?}", r.eps_ate),
            r.replication.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid_csv(report: &GridReport, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(provenance_line(&report.config, &report.seeds)?.as_bytes())?;
    let mut w = csv::Writer::from_writer(f);
    let mut header = vec![
        "family".to_string(),
        "n_instrumental".to_string(),
        "n_irrelevant".to_string(),
        "replication".to_string(),
    ];
    for m in &report.methods {
        header.push(format!("{m}_sqrt_pehe"));
        header.push(format!("{m}_eps_ate"));
    }
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![
            r.family.name().to_string(),
            r.n_instrumental.to_string(),
            r.n_irrelevant.to_string(),
            r.replication.to_string(),
        ];
        for ((_, p), (_, a)) in r.sqrt_pehe.iter().zip(&r.eps_ate) {
            rec.push(format!("{p:?}"));
            rec.push(format!("{a:?}"));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV artifact written above, skipping its provenance line.
pub fn read_artifact_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
