//! Synchronization strategies: when workers average their parameters and
//! what goes over the wire.
//!
//! Averaging strategies (full sync, constant period, adaptive period,
//! piecewise-constant period) let every worker take a local momentum step and
//! then, when the strategy fires, replace all worker parameters by their
//! elementwise mean. Momentum buffers stay local. The quantized strategy
//! instead exchanges stochastically rounded gradients every iteration.
//!
//! The adaptive controller samples `C₂` as the mean of `S_k / γ_k` over the
//! sync events before `K_s`, then nudges the period by one per sync to keep
//! the pre-averaging variance `S_k` inside `[band_low, band_high] · γ_k · C₂`.

use crate::cluster::WorkerState;
use crate::error::{Error, Result};
use crate::numkit::{check_finite, mean_of, mean_sq_deviation, ParamVector, RngStream};
use crate::optim::sgd_step;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveParams {
    pub p_init: usize,
    /// Iteration index where sampling of `C₂` ends.
    pub k_s: usize,
    pub band_low: f64,
    pub band_high: f64,
    /// Epochs at the start of training that sync every iteration.
    pub warmup_epochs_p1: usize,
}

impl AdaptiveParams {
    pub fn new(p_init: usize, k_s: usize) -> Self {
        AdaptiveParams {
            p_init,
            k_s,
            band_low: 0.7,
            band_high: 1.3,
            warmup_epochs_p1: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start_epoch: usize,
    pub p: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SyncStrategy {
    FullSync,
    ConstantPeriod { p: usize },
    AdaptivePeriod(AdaptiveParams),
    PiecewiseConstant { segments: Vec<Segment> },
    Quantized { bits: u32 },
}

impl SyncStrategy {
    /// Default display name used for output files.
    pub fn default_name(&self) -> String {
        match self {
            SyncStrategy::FullSync => "fullsgd".into(),
            SyncStrategy::ConstantPeriod { p } => format!("cpsgd_p{p}"),
            SyncStrategy::AdaptivePeriod(_) => "adpsgd".into(),
            SyncStrategy::PiecewiseConstant { .. } => "piecewise".into(),
            SyncStrategy::Quantized { bits } => format!("qsgd{bits}"),
        }
    }

    /// Checks parameter ranges against the run length `total_iterations`.
    pub fn validate(&self, total_iterations: usize) -> Result<()> {
        match self {
            SyncStrategy::FullSync => Ok(()),
            SyncStrategy::ConstantPeriod { p } => {
                if *p == 0 {
                    Err(Error::config("strategy.p", "period must be at least 1"))
                } else {
                    Ok(())
                }
            }
            SyncStrategy::AdaptivePeriod(a) => {
                if a.p_init == 0 {
                    return Err(Error::config("strategy.p_init", "period must be at least 1"));
                }
                if total_iterations > 0 && a.k_s >= total_iterations {
                    return Err(Error::config(
                        "strategy.ks_fraction",
                        format!("K_s = {} must be below K = {total_iterations}", a.k_s),
                    ));
                }
                if !(a.band_low < 1.0 && 1.0 < a.band_high && a.band_low > 0.0) {
                    return Err(Error::config(
                        "strategy.band_low",
                        format!("band must satisfy 0 < low < 1 < high, got [{}, {}]", a.band_low, a.band_high),
                    ));
                }
                Ok(())
            }
            SyncStrategy::PiecewiseConstant { segments } => {
                match segments.first() {
                    None => return Err(Error::config("strategy.segments", "at least one segment required")),
                    Some(s) if s.start_epoch != 0 => {
                        return Err(Error::config("strategy.segments", "first segment must start at epoch 0"))
                    }
                    _ => {}
                }
                if segments.windows(2).any(|w| w[0].start_epoch >= w[1].start_epoch) {
                    return Err(Error::config("strategy.segments", "start epochs must be strictly ascending"));
                }
                if segments.iter().any(|s| s.p == 0) {
                    return Err(Error::config("strategy.segments", "period must be at least 1"));
                }
                Ok(())
            }
            SyncStrategy::Quantized { bits } => {
                if (2..=8).contains(bits) {
                    Ok(())
                } else {
                    Err(Error::config("strategy.bits", format!("{bits} outside 2..=8")))
                }
            }
        }
    }

    fn segment_period(segments: &[Segment], epoch: usize) -> usize {
        segments
            .iter()
            .take_while(|s| s.start_epoch <= epoch)
            .last()
            .map_or(1, |s| s.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerPhase {
    Sampling,
    Adapting,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveControllerState {
    /// Local updates since the last sync.
    pub cnt: usize,
    pub p: usize,
    pub c2_sum: f64,
    pub c2_count: usize,
    pub c2: f64,
    pub phase: ControllerPhase,
}

impl AdaptiveControllerState {
    pub fn new(p_init: usize) -> Self {
        AdaptiveControllerState {
            cnt: 0,
            p: p_init.max(1),
            c2_sum: 0.0,
            c2_count: 0,
            c2: 0.0,
            phase: ControllerPhase::Sampling,
        }
    }
}

/// Whether the update about to be applied should be followed by averaging.
///
/// `since_sync` counts local updates since the last sync, not including the
/// current one; the adaptive strategy uses the controller's own counter.
pub fn should_sync(
    strategy: &SyncStrategy,
    controller: Option<&AdaptiveControllerState>,
    since_sync: usize,
    epoch: usize,
) -> Result<bool> {
    Ok(match strategy {
        SyncStrategy::FullSync | SyncStrategy::Quantized { .. } => true,
        SyncStrategy::ConstantPeriod { p } => since_sync + 1 >= *p,
        SyncStrategy::PiecewiseConstant { segments } => {
            since_sync + 1 >= SyncStrategy::segment_period(segments, epoch)
        }
        SyncStrategy::AdaptivePeriod(a) => {
            let c = controller.ok_or_else(|| Error::usage("adaptive strategy needs a controller state"))?;
            epoch < a.warmup_epochs_p1 || c.cnt + 1 >= c.p
        }
    })
}

/// Elementwise mean of worker parameters, summed in ascending worker order.
pub fn average_params(workers: &[ParamVector]) -> Result<ParamVector> {
    mean_of(workers)
}

/// `S_k = (1/n) Σ_j ‖w̄ − w_j‖²` over post-update, pre-averaging parameters.
pub fn compute_sk(workers: &[ParamVector]) -> Result<f64> {
    mean_sq_deviation(workers)
}

/// Controller update after a sync at iteration `k` with observed `s_k`.
pub fn adapt_period(
    controller: &AdaptiveControllerState,
    s_k: f64,
    lr: f64,
    k: usize,
    k_s: usize,
    band_low: f64,
    band_high: f64,
) -> Result<AdaptiveControllerState> {
    if !(lr > 0.0) {
        return Err(Error::usage("learning rate must be positive"));
    }
    if !(s_k >= 0.0) {
        return Err(Error::usage(format!("S_k = {s_k} must be nonnegative")));
    }
    let mut next = controller.clone();
    next.cnt = 0;
    if k < k_s {
        next.phase = ControllerPhase::Sampling;
        next.c2_sum += s_k / lr;
        next.c2_count += 1;
        next.c2 = next.c2_sum / next.c2_count as f64;
        return Ok(next);
    }
    if next.c2_count == 0 {
        return Err(Error::config("strategy.ks_fraction", "K_s too small: no C2 samples"));
    }
    next.phase = ControllerPhase::Adapting;
    if s_k < band_low * lr * next.c2 {
        next.p += 1;
    } else if s_k > band_high * lr * next.c2 {
        next.p = next.p.saturating_sub(1).max(1);
    }
    Ok(next)
}

/// Stochastically rounded gradient: one real scale plus `d` signed levels.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedGrad {
    pub scale: f64,
    pub levels: Vec<i8>,
    pub bits: u32,
}

impl QuantizedGrad {
    /// Largest level magnitude `s = 2^(bits−1) − 1`.
    pub fn max_level(&self) -> i32 {
        max_level(self.bits)
    }

    /// Bytes for the packed levels alone.
    pub fn payload_bytes(&self) -> u64 {
        quantized_payload_bytes(self.levels.len(), self.bits)
    }

    /// Packed levels plus the scale scalar.
    pub fn wire_bytes(&self, bytes_per_scalar: u64) -> u64 {
        self.payload_bytes() + bytes_per_scalar
    }
}

fn max_level(bits: u32) -> i32 {
    (1 << (bits - 1)) - 1
}

pub fn quantized_payload_bytes(dim: usize, bits: u32) -> u64 {
    (dim as u64 * bits as u64).div_ceil(8)
}

/// Unbiased stochastic quantization to `bits`-wide signed levels.
pub fn quantize(g: &ParamVector, bits: u32, rng: &mut RngStream) -> Result<QuantizedGrad> {
    if !(2..=8).contains(&bits) {
        return Err(Error::usage(format!("quantization bits {bits} outside 2..=8")));
    }
    check_finite(g.as_slice(), "gradient to quantize")?;
    let s = max_level(bits);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let levels = g
        .iter()
        .map(|&v| {
            let u = rng.uniform();
            if scale == 0.0 {
                return 0;
            }
            let r = (v.abs() / scale) * s as f64;
            let floor = r.floor();
            let up = u < r - floor;
            let mag = (floor as i32 + i32::from(up)).min(s);
            (if v < 0.0 { -mag } else { mag }) as i8
        })
        .collect();
    Ok(QuantizedGrad { scale, levels, bits })
}

pub fn dequantize(q: &QuantizedGrad) -> ParamVector {
    let s = q.max_level() as f64;
    ParamVector::from_raw(q.levels.iter().map(|&l| l as f64 * q.scale / s).collect())
}

/// Record of one communication round.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncEvent {
    pub k: usize,
    /// Pre-averaging parameter variance.
    pub s_k: f64,
    pub period_before: usize,
    pub period_after: usize,
    pub bytes_per_worker: u64,
    /// Payload of each allreduce issued for this event, in bytes.
    pub allreduce_payloads: Vec<u64>,
}

/// Per-iteration outcome of [`Synchronizer::apply_sync`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Parameter variance after the local update, before any averaging.
    pub pre_sync_variance: f64,
    /// Averaging period in force after this iteration.
    pub period: usize,
    pub event: Option<SyncEvent>,
}

/// Runtime state of a strategy across iterations.
#[derive(Clone, Debug)]
pub struct Synchronizer {
    strategy: SyncStrategy,
    controller: Option<AdaptiveControllerState>,
    since_sync: usize,
    dim: usize,
    bytes_per_scalar: u64,
}

impl Synchronizer {
    pub fn new(strategy: SyncStrategy, dim: usize, bytes_per_scalar: u64) -> Self {
        let controller = match &strategy {
            SyncStrategy::AdaptivePeriod(a) => Some(AdaptiveControllerState::new(a.p_init)),
            _ => None,
        };
        Synchronizer {
            strategy,
            controller,
            since_sync: 0,
            dim,
            bytes_per_scalar,
        }
    }

    pub fn strategy(&self) -> &SyncStrategy {
        &self.strategy
    }

    pub fn controller(&self) -> Option<&AdaptiveControllerState> {
        self.controller.as_ref()
    }

    fn current_period(&self, epoch: usize) -> usize {
        match &self.strategy {
            SyncStrategy::FullSync | SyncStrategy::Quantized { .. } => 1,
            SyncStrategy::ConstantPeriod { p } => *p,
            SyncStrategy::PiecewiseConstant { segments } => SyncStrategy::segment_period(segments, epoch),
            SyncStrategy::AdaptivePeriod(a) => {
                if epoch < a.warmup_epochs_p1 {
                    1
                } else {
                    self.controller.as_ref().map_or(a.p_init, |c| c.p)
                }
            }
        }
    }

    fn param_bytes(&self) -> u64 {
        self.dim as u64 * self.bytes_per_scalar
    }

    /// Applies iteration `k`: local momentum steps with `grads`, then
    /// averaging (and controller update) when the strategy fires.
    pub fn apply_sync(
        &mut self,
        workers: &mut [WorkerState],
        grads: &[ParamVector],
        k: usize,
        epoch: usize,
        lr: f64,
    ) -> Result<StepReport> {
        if workers.is_empty() {
            return Err(Error::usage("no workers"));
        }
        if workers.len() != grads.len() {
            return Err(Error::usage(format!(
                "{} workers but {} gradients",
                workers.len(),
                grads.len()
            )));
        }
        if let SyncStrategy::Quantized { bits } = self.strategy {
            return self.quantized_step(workers, grads, k, lr, bits);
        }

        for (w, g) in workers.iter_mut().zip(grads) {
            sgd_step(&mut w.params, g, &mut w.momentum, lr)?;
        }
        let variance = mean_sq_deviation(workers.iter().map(|w| &w.params))?;

        let fire = should_sync(&self.strategy, self.controller.as_ref(), self.since_sync, epoch)?;
        let period_before = self.current_period(epoch);
        if !fire {
            self.since_sync += 1;
            if let Some(c) = self.controller.as_mut() {
                c.cnt += 1;
            }
            return Ok(StepReport {
                pre_sync_variance: variance,
                period: period_before,
                event: None,
            });
        }

        let mean = mean_of(workers.iter().map(|w| &w.params))?;
        for w in workers.iter_mut() {
            w.params = mean.clone();
        }
        self.since_sync = 0;

        let mut payloads = vec![self.param_bytes()];
        if let SyncStrategy::AdaptivePeriod(a) = self.strategy {
            // S_k is exchanged as one extra scalar allreduce.
            payloads.push(self.bytes_per_scalar);
            if epoch >= a.warmup_epochs_p1 {
                let c = self.controller.as_ref().expect("adaptive controller");
                self.controller = Some(adapt_period(c, variance, lr, k, a.k_s, a.band_low, a.band_high)?);
            }
        }
        let period_after = self.current_period(epoch);
        Ok(StepReport {
            pre_sync_variance: variance,
            period: period_after,
            event: Some(SyncEvent {
                k,
                s_k: variance,
                period_before,
                period_after,
                bytes_per_worker: payloads.iter().sum(),
                allreduce_payloads: payloads,
            }),
        })
    }

    fn quantized_step(
        &mut self,
        workers: &mut [WorkerState],
        grads: &[ParamVector],
        k: usize,
        lr: f64,
        bits: u32,
    ) -> Result<StepReport> {
        let mut decoded = Vec::with_capacity(workers.len());
        let mut wire = 0;
        for (w, g) in workers.iter_mut().zip(grads) {
            let q = quantize(g, bits, &mut w.rng)?;
            wire = q.wire_bytes(self.bytes_per_scalar);
            decoded.push(dequantize(&q));
        }
        let avg = mean_of(&decoded)?;
        for w in workers.iter_mut() {
            sgd_step(&mut w.params, &avg, &mut w.momentum, lr)?;
        }
        let variance = mean_sq_deviation(workers.iter().map(|w| &w.params))?;
        Ok(StepReport {
            pre_sync_variance: variance,
            period: 1,
            event: Some(SyncEvent {
                k,
                s_k: variance,
                period_before: 1,
                period_after: 1,
                bytes_per_worker: wire,
                allreduce_payloads: vec![wire],
            }),
        })
    }
}
