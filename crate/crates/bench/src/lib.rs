//! Shared fixtures for the simulator benchmarks.

use periodavg::{gen_synthetic, CostModel, Dataset, LrSchedule, ModelSpec, RunPlan, SyncStrategy, SyntheticKind};

/// `two_gaussians` with 20 features, as used by the desk-scale benchmark.
pub fn two_gaussians(n: usize) -> Dataset {
    gen_synthetic(SyntheticKind::TwoGaussians, n, 20, 2.0, 7).expect("synthetic data")
}

/// One epoch of 8 workers × 32 rows on a 20→32→2 MLP.
pub fn one_epoch_plan(strategy: SyncStrategy, threads: usize) -> RunPlan {
    RunPlan {
        n_workers: 8,
        batch_per_worker: 32,
        epochs: 1,
        strategy,
        schedule: LrSchedule::constant(0.1),
        model: ModelSpec::mlp(20, vec![32], 2),
        momentum: 0.9,
        eval_every: usize::MAX,
        seed: 1,
        cost: CostModel::ethernet_10g(8),
        threads,
    }
}
