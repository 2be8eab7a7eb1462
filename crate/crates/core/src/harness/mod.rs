//! Config-driven experiment sweeps: every strategy × every seed, one metrics
//! CSV per run and a `summary.csv` per experiment.

mod config;
mod summary;

use std::path::PathBuf;

use rayon::prelude::*;

pub use config::{
    parse_config, parse_config_str, DatasetConfig, ExperimentConfig, ModelConfig, StrategyConfig, StrategySpec,
};
pub use summary::{format_summary, summarize_dir, summarize_runs, write_summary_csv, RunSummary, SummaryRow};

use crate::cluster::{run, RunPlan};
use crate::data::{gen_synthetic, load_csv, CsvSchema, Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::{write_csv, MetricsRecord};
use crate::model::{ModelKind, ModelSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub output_dir: Option<PathBuf>,
    /// Runs executed concurrently.
    pub parallel_runs: usize,
    /// Threads computing worker gradients inside one run.
    pub worker_threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            output_dir: None,
            parallel_runs: 1,
            worker_threads: 1,
        }
    }
}

/// One finished (or failed) run of the sweep.
#[derive(Debug)]
pub struct RunOutcome {
    pub strategy: String,
    pub seed: u64,
    pub csv_path: PathBuf,
    pub result: Result<Vec<MetricsRecord>>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub runs: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.result.is_err())
    }
}

pub fn run_file_stem(strategy: &str, seed: u64) -> String {
    format!("{strategy}_seed{seed}")
}

/// Training and evaluation sets for a config.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.dataset {
        DatasetConfig::Synthetic {
            kind,
            n,
            input_dim,
            noise,
            seed,
            eval_n,
        } => {
            // one draw split in two, so both halves share any hidden ground truth
            let all = gen_synthetic(*kind, n + eval_n, *input_dim, *noise, *seed)?;
            let train: Vec<usize> = (0..*n).collect();
            let eval: Vec<usize> = (*n..n + eval_n).collect();
            Ok((
                Dataset::new(all.gather(&train)?, all.task())?,
                Dataset::new(all.gather(&eval)?, all.task())?,
            ))
        }
        DatasetConfig::Csv {
            path,
            eval_path,
            target_column,
            task,
        } => {
            let schema = CsvSchema {
                target_column: target_column.clone(),
                task: *task,
            };
            let train = load_csv(path, &schema)?;
            let eval = match eval_path {
                Some(p) => load_csv(p, &schema)?,
                None => train.clone(),
            };
            Ok((train, eval))
        }
    }
}

pub fn model_spec(cfg: &ExperimentConfig, train: &Dataset) -> Result<ModelSpec> {
    let m = &cfg.model;
    let spec = match (m.kind, train.task()) {
        (ModelKind::LinearRegressionMse, TaskKind::Regression) => ModelSpec::linear_regression(train.input_dim()),
        (ModelKind::LogisticRegression, TaskKind::Classification) => {
            if train.classes() != 2 {
                return Err(Error::config(
                    "model.kind",
                    format!("logistic_regression needs 2 classes, dataset has {}", train.classes()),
                ));
            }
            ModelSpec::logistic_regression(train.input_dim())
        }
        (ModelKind::Mlp, TaskKind::Classification) => {
            ModelSpec::mlp(train.input_dim(), m.hidden.clone(), train.classes())
        }
        (kind, task) => {
            return Err(Error::config(
                "model.kind",
                format!("{kind:?} does not fit a {task:?} dataset"),
            ))
        }
    };
    Ok(spec.with_l2(m.l2_reg))
}

/// Plans for every strategy × seed, in config order.
pub fn build_plans(cfg: &ExperimentConfig, train: &Dataset, worker_threads: usize) -> Result<Vec<(String, RunPlan)>> {
    let model = model_spec(cfg, train)?;
    let per_epoch = train.len() / (cfg.n_workers * cfg.batch_per_worker);
    if per_epoch == 0 {
        return Err(Error::config(
            "batch_per_worker",
            format!(
                "global batch {} exceeds dataset size {}",
                cfg.n_workers * cfg.batch_per_worker,
                train.len()
            ),
        ));
    }
    let total = cfg.epochs * per_epoch;
    let mut plans = Vec::new();
    for s in &cfg.strategies {
        let strategy = s.spec.resolve(total);
        strategy.validate(total)?;
        for &seed in &cfg.seeds {
            plans.push((
                s.name.clone(),
                RunPlan {
                    n_workers: cfg.n_workers,
                    batch_per_worker: cfg.batch_per_worker,
                    epochs: cfg.epochs,
                    strategy: strategy.clone(),
                    schedule: cfg.schedule.clone(),
                    model: model.clone(),
                    momentum: cfg.momentum,
                    eval_every: cfg.eval_every.unwrap_or(per_epoch),
                    seed,
                    cost: cfg.cost,
                    threads: worker_threads.max(1),
                },
            ));
        }
    }
    Ok(plans)
}

/// Checks everything a run would check, without running.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<usize> {
    let (train, _) = load_datasets(cfg)?;
    Ok(build_plans(cfg, &train, 1)?.len())
}

/// Runs the whole sweep.
///
/// Config and data errors abort before any run starts. A run that fails
/// leaves a `<name>_seed<seed>.FAILED` file with the error text; the other
/// runs and the summary are still written.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutcome> {
    let (train, eval) = load_datasets(cfg)?;
    let plans = build_plans(cfg, &train, opts.worker_threads)?;
    let output_dir = opts.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&output_dir).map_err(|e| Error::io(&output_dir, e))?;

    let one = |(name, plan): &(String, RunPlan)| -> RunOutcome {
        let stem = run_file_stem(name, plan.seed);
        let csv_path = output_dir.join(format!("{stem}.csv"));
        let result = run(plan, &train, &eval).and_then(|r| {
            write_csv(&r.records, &csv_path)?;
            Ok(r.records)
        });
        if let Err(e) = &result {
            let marker = output_dir.join(format!("{stem}.FAILED"));
            let _ = std::fs::write(&marker, format!("{e}\n"));
        }
        RunOutcome {
            strategy: name.clone(),
            seed: plan.seed,
            csv_path,
            result,
        }
    };

    let runs: Vec<RunOutcome> = if opts.parallel_runs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.parallel_runs)
            .build()
            .map_err(|e| Error::usage(format!("cannot start thread pool: {e}")))?;
        pool.install(|| plans.par_iter().map(one).collect())
    } else {
        plans.iter().map(one).collect()
    };

    let summaries: Vec<RunSummary> = runs
        .iter()
        .filter_map(|r| {
            r.result
                .as_ref()
                .ok()
                .map(|recs| RunSummary::from_records(&r.strategy, r.seed, recs))
        })
        .collect();
    let order: Vec<String> = cfg.strategies.iter().map(|s| s.name.clone()).collect();
    let summary = summarize_runs(&summaries, &order);
    write_summary_csv(&summary, output_dir.join("summary.csv"))?;
    Ok(ExperimentOutcome {
        output_dir,
        runs,
        summary,
    })
}
