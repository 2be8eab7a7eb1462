//! TOML experiment configuration.
//!
//! ```toml
//! n_workers = 8
//! batch_per_worker = 32
//! epochs = 60
//! seeds = [1, 2, 3]
//!
//! [model]
//! kind = "mlp"
//! hidden = [32]
//!
//! [dataset]
//! kind = "two_gaussians"
//! n = 8192
//! input_dim = 20
//! noise = 2.0
//!
//! [lr]
//! base = 0.1
//! milestones = [30, 45]
//!
//! [[strategy]]
//! kind = "full_sync"
//!
//! [[strategy]]
//! p_init = 4
//! ks_fraction = 0.25
//! ```
//!
//! A strategy table's variant is given by `kind` or inferred from its keys;
//! keys of two different variants in one table are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{SyntheticKind, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::CostModel;
use crate::model::ModelKind;
use crate::optim::{LrSchedule, WarmupMode};
use crate::sync::{AdaptiveParams, Segment, SyncStrategy};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_workers: usize,
    batch_per_worker: usize,
    epochs: usize,
    seeds: Vec<u64>,
    momentum: Option<f64>,
    eval_every: Option<usize>,
    output_dir: Option<PathBuf>,
    model: RawModel,
    dataset: RawDataset,
    lr: RawLr,
    #[serde(default)]
    cost: RawCost,
    strategy: Vec<RawStrategy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    #[serde(default)]
    hidden: Vec<usize>,
    #[serde(default)]
    l2_reg: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    kind: String,
    n: Option<usize>,
    input_dim: Option<usize>,
    noise: Option<f64>,
    seed: Option<u64>,
    eval_n: Option<usize>,
    path: Option<PathBuf>,
    eval_path: Option<PathBuf>,
    target_column: Option<String>,
    task: Option<TaskKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLr {
    base: f64,
    #[serde(default)]
    milestones: Vec<usize>,
    decay: Option<f64>,
    #[serde(default)]
    warmup_epochs: usize,
    #[serde(default)]
    warmup: WarmupMode,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    bandwidth_bytes_per_s: Option<f64>,
    latency_s: Option<f64>,
    bytes_per_scalar: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    name: Option<String>,
    kind: Option<String>,
    p: Option<usize>,
    p_init: Option<usize>,
    ks_fraction: Option<f64>,
    band_low: Option<f64>,
    band_high: Option<f64>,
    warmup_epochs_p1: Option<usize>,
    segments: Option<Vec<(usize, usize)>>,
    bits: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: Vec<usize>,
    pub l2_reg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetConfig {
    Synthetic {
        kind: SyntheticKind,
        n: usize,
        input_dim: usize,
        noise: f64,
        seed: u64,
        /// Held-out rows generated after the training rows.
        eval_n: usize,
    },
    Csv {
        path: PathBuf,
        eval_path: Option<PathBuf>,
        target_column: String,
        task: TaskKind,
    },
}

/// Strategy as configured, before `K_s` is resolved against the run length.
#[derive(Clone, Debug, PartialEq)]
pub enum StrategySpec {
    FullSync,
    ConstantPeriod {
        p: usize,
    },
    AdaptivePeriod {
        p_init: usize,
        ks_fraction: f64,
        band_low: f64,
        band_high: f64,
        warmup_epochs_p1: usize,
    },
    PiecewiseConstant {
        segments: Vec<Segment>,
    },
    Quantized {
        bits: u32,
    },
}

impl StrategySpec {
    pub fn resolve(&self, total_iterations: usize) -> SyncStrategy {
        match self {
            StrategySpec::FullSync => SyncStrategy::FullSync,
            StrategySpec::ConstantPeriod { p } => SyncStrategy::ConstantPeriod { p: *p },
            StrategySpec::AdaptivePeriod {
                p_init,
                ks_fraction,
                band_low,
                band_high,
                warmup_epochs_p1,
            } => SyncStrategy::AdaptivePeriod(AdaptiveParams {
                p_init: *p_init,
                k_s: (ks_fraction * total_iterations as f64).floor() as usize,
                band_low: *band_low,
                band_high: *band_high,
                warmup_epochs_p1: *warmup_epochs_p1,
            }),
            StrategySpec::PiecewiseConstant { segments } => SyncStrategy::PiecewiseConstant {
                segments: segments.clone(),
            },
            StrategySpec::Quantized { bits } => SyncStrategy::Quantized { bits: *bits },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub name: String,
    pub spec: StrategySpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_workers: usize,
    pub batch_per_worker: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub momentum: f64,
    /// `None` evaluates once per epoch.
    pub eval_every: Option<usize>,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    pub schedule: LrSchedule,
    pub cost: CostModel,
    pub strategies: Vec<StrategyConfig>,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_str(&text)?;
    // relative paths are taken from the config file's directory
    let base = path.parent().unwrap_or(Path::new(""));
    if let DatasetConfig::Csv { path, eval_path, .. } = &mut cfg.dataset {
        if path.is_relative() {
            *path = base.join(&*path);
        }
        if let Some(p) = eval_path.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
    }
    if cfg.output_dir.is_relative() {
        cfg.output_dir = base.join(&cfg.output_dir);
    }
    Ok(cfg)
}

fn serde_key(message: &str) -> String {
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "<config>".into()
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        Error::config(serde_key(&message), message)
    })?;
    build(raw)
}

fn require<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(key, "missing required key"))
}

fn build(raw: RawConfig) -> Result<ExperimentConfig> {
    if raw.n_workers == 0 {
        return Err(Error::config("n_workers", "must be positive"));
    }
    if raw.batch_per_worker == 0 {
        return Err(Error::config("batch_per_worker", "must be positive"));
    }
    if raw.epochs == 0 {
        return Err(Error::config("epochs", "must be positive"));
    }
    if raw.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed required"));
    }
    let momentum = raw.momentum.unwrap_or(0.9);
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::config("momentum", "must lie in [0, 1)"));
    }
    if raw.eval_every == Some(0) {
        return Err(Error::config("eval_every", "must be positive"));
    }

    let model = ModelConfig {
        kind: raw.model.kind,
        hidden: raw.model.hidden,
        l2_reg: raw.model.l2_reg,
    };
    if !(model.l2_reg >= 0.0 && model.l2_reg.is_finite()) {
        return Err(Error::config("model.l2_reg", "must be nonnegative"));
    }
    if model.kind != ModelKind::Mlp && !model.hidden.is_empty() {
        return Err(Error::config("model.hidden", "only valid for mlp"));
    }
    if model.hidden.contains(&0) {
        return Err(Error::config("model.hidden", "layer widths must be positive"));
    }

    let dataset = build_dataset(raw.dataset)?;

    let schedule = LrSchedule {
        base_lr: raw.lr.base,
        milestones: raw.lr.milestones,
        decay_factor: raw.lr.decay.unwrap_or(0.1),
        warmup_epochs: raw.lr.warmup_epochs,
        warmup_mode: raw.lr.warmup,
    };
    schedule.validate()?;
    if schedule.warmup_mode == WarmupMode::Linear && schedule.warmup_epochs == 0 {
        return Err(Error::config("lr.warmup_epochs", "linear warmup needs at least one epoch"));
    }

    let cost = CostModel {
        n: raw.n_workers,
        bandwidth_bytes_per_s: raw.cost.bandwidth_bytes_per_s.unwrap_or(1.25e9),
        latency_s: raw.cost.latency_s.unwrap_or(50e-6),
        bytes_per_scalar: raw.cost.bytes_per_scalar.unwrap_or(4),
    };
    cost.validate()?;

    if raw.strategy.is_empty() {
        return Err(Error::config("strategy", "at least one [[strategy]] block required"));
    }
    let mut strategies = Vec::with_capacity(raw.strategy.len());
    for s in raw.strategy {
        let cfg = build_strategy(s)?;
        if strategies.iter().any(|o: &StrategyConfig| o.name == cfg.name) {
            return Err(Error::config("strategy.name", format!("duplicate strategy name `{}`", cfg.name)));
        }
        strategies.push(cfg);
    }

    Ok(ExperimentConfig {
        n_workers: raw.n_workers,
        batch_per_worker: raw.batch_per_worker,
        epochs: raw.epochs,
        seeds: raw.seeds,
        momentum,
        eval_every: raw.eval_every,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        model,
        dataset,
        schedule,
        cost,
        strategies,
    })
}

fn build_dataset(d: RawDataset) -> Result<DatasetConfig> {
    if d.kind == "csv" {
        for (present, key) in [
            (d.n.is_some(), "dataset.n"),
            (d.input_dim.is_some(), "dataset.input_dim"),
            (d.noise.is_some(), "dataset.noise"),
            (d.seed.is_some(), "dataset.seed"),
            (d.eval_n.is_some(), "dataset.eval_n"),
        ] {
            if present {
                return Err(Error::config(key, "not valid for csv datasets"));
            }
        }
        return Ok(DatasetConfig::Csv {
            path: require(d.path, "dataset.path")?,
            eval_path: d.eval_path,
            target_column: require(d.target_column, "dataset.target_column")?,
            task: require(d.task, "dataset.task")?,
        });
    }
    let kind: SyntheticKind = d
        .kind
        .parse()
        .map_err(|_| Error::config("dataset.kind", format!("unsupported dataset kind `{}`", d.kind)))?;
    for (present, key) in [
        (d.path.is_some(), "dataset.path"),
        (d.eval_path.is_some(), "dataset.eval_path"),
        (d.target_column.is_some(), "dataset.target_column"),
        (d.task.is_some(), "dataset.task"),
    ] {
        if present {
            return Err(Error::config(key, "only valid for csv datasets"));
        }
    }
    let n = require(d.n, "dataset.n")?;
    let input_dim = require(d.input_dim, "dataset.input_dim")?;
    let noise = d.noise.unwrap_or(0.0);
    if n == 0 {
        return Err(Error::config("dataset.n", "must be positive"));
    }
    if input_dim == 0 {
        return Err(Error::config("dataset.input_dim", "must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::config("dataset.noise", "must be nonnegative"));
    }
    Ok(DatasetConfig::Synthetic {
        kind,
        n,
        input_dim,
        noise,
        seed: d.seed.unwrap_or(0),
        eval_n: d.eval_n.unwrap_or(n / 4).max(1),
    })
}

fn build_strategy(s: RawStrategy) -> Result<StrategyConfig> {
    let constant = s.p.is_some();
    let adaptive = s.p_init.is_some()
        || s.ks_fraction.is_some()
        || s.band_low.is_some()
        || s.band_high.is_some()
        || s.warmup_epochs_p1.is_some();
    let piecewise = s.segments.is_some();
    let quantized = s.bits.is_some();
    let groups = [
        (constant, "constant_period"),
        (adaptive, "adaptive_period"),
        (piecewise, "piecewise_constant"),
        (quantized, "quantized"),
    ];
    let present: Vec<&str> = groups.iter().filter(|g| g.0).map(|g| g.1).collect();
    if present.len() > 1 {
        return Err(Error::config(
            "strategy",
            format!("ambiguous strategy: keys for {} in one block", present.join(" and ")),
        ));
    }
    let kind = match (s.kind.as_deref(), present.first()) {
        (Some(k), Some(&inferred)) if k != inferred => {
            return Err(Error::config("strategy.kind", format!("`{k}` conflicts with keys for {inferred}")))
        }
        (Some(k), _) => k.to_string(),
        (None, Some(&inferred)) => inferred.to_string(),
        (None, None) => return Err(Error::config("strategy.kind", "missing required key")),
    };

    let spec = match kind.as_str() {
        "full_sync" => StrategySpec::FullSync,
        "constant_period" => {
            let p = require(s.p, "strategy.p")?;
            if p == 0 {
                return Err(Error::config("strategy.p", "period must be at least 1"));
            }
            StrategySpec::ConstantPeriod { p }
        }
        "adaptive_period" => {
            let p_init = require(s.p_init, "strategy.p_init")?;
            let ks_fraction = require(s.ks_fraction, "strategy.ks_fraction")?;
            let band_low = s.band_low.unwrap_or(0.7);
            let band_high = s.band_high.unwrap_or(1.3);
            if p_init == 0 {
                return Err(Error::config("strategy.p_init", "period must be at least 1"));
            }
            if !(ks_fraction > 0.0 && ks_fraction < 1.0) {
                return Err(Error::config(
                    "strategy.ks_fraction",
                    format!("value {ks_fraction} out of range (0, 1)"),
                ));
            }
            if !(band_low > 0.0 && band_low < 1.0) {
                return Err(Error::config("strategy.band_low", "value out of range (0, 1)"));
            }
            if !(band_high > 1.0 && band_high.is_finite()) {
                return Err(Error::config("strategy.band_high", "value out of range (1, inf)"));
            }
            StrategySpec::AdaptivePeriod {
                p_init,
                ks_fraction,
                band_low,
                band_high,
                warmup_epochs_p1: s.warmup_epochs_p1.unwrap_or(1),
            }
        }
        "piecewise_constant" => {
            let segments: Vec<Segment> = require(s.segments, "strategy.segments")?
                .into_iter()
                .map(|(start_epoch, p)| Segment { start_epoch, p })
                .collect();
            let spec = StrategySpec::PiecewiseConstant { segments };
            spec.resolve(0).validate(0)?;
            spec
        }
        "quantized" => {
            let bits = require(s.bits, "strategy.bits")?;
            if !(2..=8).contains(&bits) {
                return Err(Error::config("strategy.bits", format!("value {bits} out of range 2..=8")));
            }
            StrategySpec::Quantized { bits }
        }
        other => return Err(Error::config("strategy.kind", format!("unknown strategy kind `{other}`"))),
    };
    let name = match s.name {
        Some(n) if n.is_empty() || n.contains(['/', '\\', ',']) => {
            return Err(Error::config("strategy.name", format!("`{n}` is not a usable file name")))
        }
        Some(n) => n,
        None => spec.resolve(1).default_name(),
    };
    Ok(StrategyConfig { name, spec })
}
