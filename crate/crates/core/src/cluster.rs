//! Runs `n` simulated workers through `K` iterations.
//!
//! Each iteration draws `n` disjoint mini-batches, computes local gradients
//! (optionally on a rayon pool), hands them to the [`Synchronizer`] and
//! appends a [`MetricsRecord`]. Gradients are collected in worker order and
//! all reductions are sequential, so the thread count never changes results.

use rayon::prelude::*;

use crate::data::{Dataset, SamplerState};
use crate::error::{Error, Result};
use crate::metrics::{CostModel, MetricsRecord};
use crate::model::{accuracy, loss_and_grad, Batch, ModelSpec};
use crate::numkit::{mean_of, sq_l2_norm, ParamVector, RngStream};
use crate::optim::{sgd_step, LrSchedule, MomentumState};
use crate::sync::{SyncEvent, SyncStrategy, Synchronizer};

const INIT_STREAM: u64 = u64::MAX - 1;
const SAMPLER_STREAM: u64 = u64::MAX - 2;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState {
    pub id: usize,
    pub params: ParamVector,
    pub momentum: MomentumState,
    /// Private stream, `stream_id == id`.
    pub rng: RngStream,
}

#[derive(Clone, Debug)]
pub struct RunPlan {
    pub n_workers: usize,
    /// Per-worker mini-batch size `m`.
    pub batch_per_worker: usize,
    pub epochs: usize,
    pub strategy: SyncStrategy,
    pub schedule: LrSchedule,
    pub model: ModelSpec,
    pub momentum: f64,
    pub eval_every: usize,
    pub seed: u64,
    pub cost: CostModel,
    /// Worker threads for gradient computation; 1 runs inline.
    pub threads: usize,
}

impl RunPlan {
    pub fn iterations_per_epoch(&self, n_rows: usize) -> usize {
        n_rows / (self.n_workers * self.batch_per_worker).max(1)
    }

    /// `K = epochs · ⌊N / (n·m)⌋`.
    pub fn total_iterations(&self, n_rows: usize) -> usize {
        self.epochs * self.iterations_per_epoch(n_rows)
    }

    fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.n_workers == 0 {
            return Err(Error::config("n_workers", "must be positive"));
        }
        if self.batch_per_worker == 0 {
            return Err(Error::config("batch_per_worker", "must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be positive"));
        }
        if self.n_workers * self.batch_per_worker > dataset.len() {
            return Err(Error::config(
                "batch_per_worker",
                format!(
                    "global batch {} exceeds dataset size {}",
                    self.n_workers * self.batch_per_worker,
                    dataset.len()
                ),
            ));
        }
        if self.model.input_dim != dataset.input_dim() {
            return Err(Error::Dimension {
                expected: self.model.input_dim,
                found: dataset.input_dim(),
            });
        }
        self.model.validate()?;
        self.schedule.validate()?;
        if self.cost.n != self.n_workers {
            return Err(Error::config("cost", "cost model node count must equal n_workers"));
        }
        self.cost.validate()?;
        self.strategy.validate(self.total_iterations(dataset.len()))
    }

    fn initial_params(&self) -> ParamVector {
        self.model.init_params(&mut RngStream::new(self.seed, INIT_STREAM))
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub records: Vec<MetricsRecord>,
    pub workers: Vec<WorkerState>,
    pub sync_events: Vec<SyncEvent>,
    /// Mini-batch gradient evaluations (excluding evaluation passes).
    pub grad_calls: u64,
}

impl RunResult {
    pub fn averaged_params(&self) -> Result<ParamVector> {
        mean_of(self.workers.iter().map(|w| &w.params))
    }

    /// Last measured full training loss.
    pub fn final_train_loss(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .map(|r| r.train_loss)
            .find(|v| !v.is_nan())
            .unwrap_or(f64::NAN)
    }
}

struct Evaluation {
    train_loss: f64,
    grad_sq_norm: f64,
    accuracy: f64,
}

fn evaluate(model: &ModelSpec, w: &ParamVector, train: &Dataset, eval_set: &Dataset) -> Result<Evaluation> {
    let (train_loss, g) = loss_and_grad(model, w, train.as_batch())?;
    let accuracy = if model.is_classifier() {
        accuracy(model, w, eval_set.as_batch())?
    } else {
        f64::NAN
    };
    Ok(Evaluation {
        train_loss,
        grad_sq_norm: sq_l2_norm(g.as_slice()),
        accuracy,
    })
}

fn diverged(k: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::Diverged {
            iteration: k,
            detail: format!("non-finite {context}"),
        },
        other => other,
    }
}

fn local_gradients(
    model: &ModelSpec,
    workers: &[WorkerState],
    batches: &[Batch],
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<ParamVector>> {
    let compute = |(w, b): (&WorkerState, &Batch)| loss_and_grad(model, &w.params, b).map(|(_, g)| g);
    match pool {
        Some(pool) => pool.install(|| workers.par_iter().zip(batches.par_iter()).map(compute).collect()),
        None => workers.iter().zip(batches).map(compute).collect(),
    }
}

/// Executes the plan. Evaluation uses the averaged parameters every
/// `eval_every` iterations and at the final iteration.
pub fn run(plan: &RunPlan, dataset: &Dataset, eval_set: &Dataset) -> Result<RunResult> {
    plan.validate(dataset)?;
    let n = plan.n_workers;
    let iters_per_epoch = plan.iterations_per_epoch(dataset.len());
    let total = plan.total_iterations(dataset.len());
    let dim = plan.model.dim();

    let w0 = plan.initial_params();
    let mut workers = (0..n)
        .map(|i| {
            Ok(WorkerState {
                id: i,
                params: w0.clone(),
                momentum: MomentumState::new(dim, plan.momentum)?,
                rng: RngStream::new(plan.seed, i as u64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sampler = SamplerState::new(dataset.len(), RngStream::new(plan.seed, SAMPLER_STREAM));
    let mut sync = Synchronizer::new(plan.strategy.clone(), dim, plan.cost.bytes_per_scalar);
    let pool = if plan.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(plan.threads)
                .build()
                .map_err(|e| Error::usage(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut records = Vec::with_capacity(total);
    let mut events = Vec::new();
    let mut grad_calls = 0u64;
    let mut sync_count = 0u64;
    let mut bytes_cum = 0u64;
    let mut comm_time = 0.0f64;

    for k in 0..total {
        let epoch = k / iters_per_epoch;
        let lr = plan.schedule.lr_at(epoch);
        let batches = sampler.next_global_batch(dataset, n, plan.batch_per_worker)?;
        debug_assert_eq!(sampler.epoch(), epoch);
        let grads = local_gradients(&plan.model, &workers, &batches, pool.as_ref()).map_err(|e| diverged(k, e))?;
        grad_calls += n as u64;

        let report = sync
            .apply_sync(&mut workers, &grads, k, epoch, lr)
            .map_err(|e| diverged(k, e.at_iteration(k)))?;
        let mut s_k = f64::NAN;
        if let Some(event) = report.event {
            sync_count += 1;
            bytes_cum += event.bytes_per_worker;
            comm_time += plan.cost.event_time(&event);
            s_k = event.s_k;
            events.push(event);
        }

        let mut record = MetricsRecord {
            k,
            epoch,
            lr,
            train_loss: f64::NAN,
            eval_accuracy: f64::NAN,
            var_wk: report.pre_sync_variance,
            s_k,
            period: report.period,
            sync_count_cum: sync_count,
            bytes_cum,
            comm_time_modeled_cum: comm_time,
            grad_sq_norm: f64::NAN,
        };
        if (k + 1) % plan.eval_every == 0 || k + 1 == total {
            let avg = mean_of(workers.iter().map(|w| &w.params))?;
            let ev = evaluate(&plan.model, &avg, dataset, eval_set).map_err(|e| diverged(k, e))?;
            record.train_loss = ev.train_loss;
            record.eval_accuracy = ev.accuracy;
            record.grad_sq_norm = ev.grad_sq_norm;
        }
        records.push(record);
    }

    Ok(RunResult {
        records,
        workers,
        sync_events: events,
        grad_calls,
    })
}

/// Single-node mini-batch SGD over global batches of `n·m` rows, drawn from
/// the same sampler stream as [`run`]. No synchronizer is involved.
pub fn run_serial_reference(plan: &RunPlan, dataset: &Dataset, eval_set: &Dataset) -> Result<RunResult> {
    plan.validate(dataset)?;
    let global = plan.n_workers * plan.batch_per_worker;
    let iters_per_epoch = plan.iterations_per_epoch(dataset.len());
    let total = plan.total_iterations(dataset.len());

    let mut params = plan.initial_params();
    let mut momentum = MomentumState::new(params.len(), plan.momentum)?;
    let mut sampler = SamplerState::new(dataset.len(), RngStream::new(plan.seed, SAMPLER_STREAM));
    let mut records = Vec::with_capacity(total);

    for k in 0..total {
        let epoch = k / iters_per_epoch;
        let lr = plan.schedule.lr_at(epoch);
        let batch = sampler.next_global_batch(dataset, 1, global)?.remove(0);
        let (_, g) = loss_and_grad(&plan.model, &params, &batch).map_err(|e| diverged(k, e))?;
        sgd_step(&mut params, &g, &mut momentum, lr).map_err(|e| diverged(k, e))?;
        let mut record = MetricsRecord {
            k,
            epoch,
            lr,
            train_loss: f64::NAN,
            eval_accuracy: f64::NAN,
            var_wk: 0.0,
            s_k: f64::NAN,
            period: 1,
            sync_count_cum: 0,
            bytes_cum: 0,
            comm_time_modeled_cum: 0.0,
            grad_sq_norm: f64::NAN,
        };
        if (k + 1) % plan.eval_every == 0 || k + 1 == total {
            let ev = evaluate(&plan.model, &params, dataset, eval_set).map_err(|e| diverged(k, e))?;
            record.train_loss = ev.train_loss;
            record.eval_accuracy = ev.accuracy;
            record.grad_sq_norm = ev.grad_sq_norm;
        }
        records.push(record);
    }

    Ok(RunResult {
        records,
        workers: vec![WorkerState {
            id: 0,
            params,
            momentum,
            rng: RngStream::new(plan.seed, 0),
        }],
        sync_events: Vec::new(),
        grad_calls: total as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};
    use crate::model::loss;
    use crate::sync::AdaptiveParams;

    fn linreg_plan(n: usize, strategy: SyncStrategy) -> (RunPlan, Dataset) {
        let ds = gen_synthetic(SyntheticKind::LinregGaussian, 256, 4, 0.0, 5).unwrap();
        let plan = RunPlan {
            n_workers: n,
            batch_per_worker: 8,
            epochs: 40,
            strategy,
            schedule: LrSchedule::constant(0.05),
            model: ModelSpec::linear_regression(4),
            momentum: 0.0,
            eval_every: 16,
            seed: 3,
            cost: CostModel::ethernet_10g(n),
            threads: 1,
        };
        (plan, ds)
    }

    #[test]
    fn full_sync_solves_noiseless_regression() {
        let (plan, ds) = linreg_plan(4, SyncStrategy::FullSync);
        let r = run(&plan, &ds, &ds).unwrap();
        let w = r.averaged_params().unwrap();
        let l = loss(&plan.model, &w, ds.as_batch()).unwrap();
        assert!(l < 1e-6, "final loss {l:e}");
        assert_eq!(r.final_train_loss(), r.records.last().unwrap().train_loss);
    }

    #[test]
    fn workers_start_identical_and_full_sync_keeps_them_so() {
        let (mut plan, ds) = linreg_plan(3, SyncStrategy::FullSync);
        plan.epochs = 2;
        plan.momentum = 0.9;
        let r = run(&plan, &ds, &ds).unwrap();
        assert!(r.records.iter().all(|rec| rec.var_wk >= 0.0));
        assert!(r.workers.windows(2).all(|w| w[0].params == w[1].params));
        let mut plan0 = plan.clone();
        plan0.epochs = 0;
        let r0 = run(&plan0, &ds, &ds).unwrap();
        assert!(r0.records.is_empty());
        assert!(r0.workers.iter().all(|w| w.params == plan.initial_params()));
    }

    #[test]
    fn grad_call_count_is_k_times_n() {
        let (mut plan, ds) = linreg_plan(4, SyncStrategy::ConstantPeriod { p: 3 });
        plan.epochs = 3;
        let r = run(&plan, &ds, &ds).unwrap();
        assert_eq!(r.grad_calls, (plan.total_iterations(ds.len()) * 4) as u64);
    }

    #[test]
    fn cumulative_fields_are_monotone() {
        let (mut plan, ds) = linreg_plan(4, SyncStrategy::AdaptivePeriod(AdaptiveParams::new(2, 100)));
        plan.epochs = 20;
        let r = run(&plan, &ds, &ds).unwrap();
        for w in r.records.windows(2) {
            assert!(w[1].sync_count_cum >= w[0].sync_count_cum);
            assert!(w[1].bytes_cum >= w[0].bytes_cum);
            assert!(w[1].comm_time_modeled_cum >= w[0].comm_time_modeled_cum);
            let synced = w[1].sync_count_cum > w[0].sync_count_cum;
            assert_eq!(synced, w[1].comm_time_modeled_cum > w[0].comm_time_modeled_cum);
            assert_eq!(synced, !w[1].s_k.is_nan());
        }
    }

    #[test]
    fn divergence_reports_iteration() {
        let (mut plan, ds) = linreg_plan(2, SyncStrategy::FullSync);
        plan.schedule = LrSchedule::constant(1e3);
        match run(&plan, &ds, &ds).unwrap_err() {
            Error::Diverged { iteration, .. } => assert!(iteration > 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn plan_validation() {
        let (mut plan, ds) = linreg_plan(2, SyncStrategy::FullSync);
        plan.batch_per_worker = 200;
        assert!(run(&plan, &ds, &ds).unwrap_err().is_config());
        let (mut plan, ds) = linreg_plan(2, SyncStrategy::ConstantPeriod { p: 0 });
        assert!(run(&plan, &ds, &ds).unwrap_err().is_config());
        plan.strategy = SyncStrategy::FullSync;
        plan.model = ModelSpec::linear_regression(3);
        assert!(matches!(run(&plan, &ds, &ds), Err(Error::Dimension { .. })));
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let ds = gen_synthetic(SyntheticKind::RingClasses, 512, 4, 0.2, 8).unwrap();
        let base = RunPlan {
            n_workers: 4,
            batch_per_worker: 16,
            epochs: 4,
            strategy: SyncStrategy::ConstantPeriod { p: 3 },
            schedule: LrSchedule::constant(0.1),
            model: ModelSpec::mlp(4, vec![8], 3),
            momentum: 0.9,
            eval_every: 5,
            seed: 12,
            cost: CostModel::ethernet_10g(4),
            threads: 1,
        };
        let a = run(&base, &ds, &ds).unwrap();
        for threads in [2, 4] {
            let b = run(&RunPlan { threads, ..base.clone() }, &ds, &ds).unwrap();
            assert_eq!(
                crate::metrics::records_to_csv(&a.records),
                crate::metrics::records_to_csv(&b.records)
            );
            assert_eq!(a.workers, b.workers);
        }
    }
}
