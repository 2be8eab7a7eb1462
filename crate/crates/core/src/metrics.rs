//! Per-iteration records, variance series, convergence metric and the
//! ring-allreduce communication cost model.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::{mean_sq_deviation, ParamVector};
use crate::sync::SyncEvent;

/// One row per iteration. Fields that are not measured at an iteration are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub k: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Full training-set loss of the averaged parameters (eval iterations only).
    pub train_loss: f64,
    pub eval_accuracy: f64,
    /// Variance across workers after the local update, before averaging.
    pub var_wk: f64,
    /// Same as `var_wk` on sync iterations, NaN otherwise.
    pub s_k: f64,
    pub period: usize,
    pub sync_count_cum: u64,
    /// Per-worker bytes sent so far.
    pub bytes_cum: u64,
    pub comm_time_modeled_cum: f64,
    /// `‖∇f(w̄)‖²` on the full training set (eval iterations only).
    pub grad_sq_norm: f64,
}

pub const CSV_HEADER: [&str; 12] = [
    "k",
    "epoch",
    "lr",
    "train_loss",
    "eval_accuracy",
    "var_wk",
    "s_k",
    "period",
    "sync_count_cum",
    "bytes_cum",
    "comm_time_modeled_cum",
    "grad_sq_norm",
];

/// `(1/n) Σ ‖W_k(1/n)𝟙 − w_{k,i}‖²`.
pub fn variance_of_workers(workers: &[ParamVector]) -> Result<f64> {
    mean_sq_deviation(workers)
}

/// Mean of `var_wk` over each window `(previous sync, sync]`, keyed by the
/// sync iteration. Records after the last sync form no window.
pub fn vt_series(records: &[MetricsRecord], sync_iterations: &[usize]) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(sync_iterations.len());
    let mut start = 0usize;
    let mut idx = 0usize;
    for &sync_k in sync_iterations {
        let mut sum = 0.0;
        let mut count = 0usize;
        while idx < records.len() && records[idx].k <= sync_k {
            if records[idx].k >= start {
                sum += records[idx].var_wk;
                count += 1;
            }
            idx += 1;
        }
        if count > 0 {
            out.push((sync_k, sum / count as f64));
        }
        start = sync_k + 1;
    }
    out
}

/// Sync iterations recovered from a record series.
pub fn sync_iterations(records: &[MetricsRecord]) -> Vec<usize> {
    let mut prev = 0;
    let mut out = Vec::new();
    for r in records {
        if r.sync_count_cum > prev {
            out.push(r.k);
        }
        prev = r.sync_count_cum;
    }
    out
}

/// `Σ γ_k ‖∇f(w_k)‖² / Σ γ_k`, skipping pairs where the norm was not measured.
pub fn weighted_grad_norm_metric(grad_sq_norms: &[f64], lrs: &[f64]) -> Result<f64> {
    if grad_sq_norms.len() != lrs.len() {
        return Err(Error::Dimension {
            expected: lrs.len(),
            found: grad_sq_norms.len(),
        });
    }
    let (num, den) = grad_sq_norms
        .iter()
        .zip(lrs)
        .filter(|(g, _)| !g.is_nan())
        .fold((0.0, 0.0), |(n, d), (g, l)| (n + l * g, d + l));
    if den == 0.0 {
        return Err(Error::usage("no measured gradient norms"));
    }
    Ok(num / den)
}

pub fn weighted_grad_norm_of_records(records: &[MetricsRecord]) -> Result<f64> {
    let g: Vec<f64> = records.iter().map(|r| r.grad_sq_norm).collect();
    let l: Vec<f64> = records.iter().map(|r| r.lr).collect();
    weighted_grad_norm_metric(&g, &l)
}

/// Ring-allreduce cost model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    pub n: usize,
    pub bandwidth_bytes_per_s: f64,
    pub latency_s: f64,
    pub bytes_per_scalar: u64,
}

impl CostModel {
    /// 10 Gbit/s links with 50 µs latency.
    pub fn ethernet_10g(n: usize) -> Self {
        CostModel {
            n,
            bandwidth_bytes_per_s: 1.25e9,
            latency_s: 50e-6,
            bytes_per_scalar: 4,
        }
    }

    /// 100 Gbit/s InfiniBand with 2 µs latency.
    pub fn infiniband_100g(n: usize) -> Self {
        CostModel {
            n,
            bandwidth_bytes_per_s: 12.5e9,
            latency_s: 2e-6,
            bytes_per_scalar: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n_workers", "must be positive"));
        }
        if !(self.bandwidth_bytes_per_s > 0.0 && self.bandwidth_bytes_per_s.is_finite()) {
            return Err(Error::config("cost.bandwidth_bytes_per_s", "must be positive"));
        }
        if !(self.latency_s >= 0.0 && self.latency_s.is_finite()) {
            return Err(Error::config("cost.latency_s", "must be nonnegative"));
        }
        if self.bytes_per_scalar == 0 {
            return Err(Error::config("cost.bytes_per_scalar", "must be positive"));
        }
        Ok(())
    }

    pub fn event_time(&self, event: &SyncEvent) -> f64 {
        event
            .allreduce_payloads
            .iter()
            .map(|&b| allreduce_time(self, b))
            .sum()
    }
}

/// `2(n−1)·latency + 2·((n−1)/n)·bytes/bandwidth`; zero for one node.
pub fn allreduce_time(model: &CostModel, payload_bytes: u64) -> f64 {
    if model.n <= 1 {
        return 0.0;
    }
    let n = model.n as f64;
    2.0 * (n - 1.0) * model.latency_s + 2.0 * ((n - 1.0) / n) * payload_bytes as f64 / model.bandwidth_bytes_per_s
}

fn fmt_real(out: &mut String, v: f64) {
    if !v.is_nan() {
        let _ = write!(out, "{v:.16e}");
    }
}

/// Serializes records; reals carry 17 significant digits and NaN is an empty cell.
pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{},", r.k, r.epoch);
        fmt_real(&mut out, r.lr);
        out.push(',');
        fmt_real(&mut out, r.train_loss);
        out.push(',');
        fmt_real(&mut out, r.eval_accuracy);
        out.push(',');
        fmt_real(&mut out, r.var_wk);
        out.push(',');
        fmt_real(&mut out, r.s_k);
        let _ = write!(out, ",{},{},{},", r.period, r.sync_count_cum, r.bytes_cum);
        fmt_real(&mut out, r.comm_time_modeled_cum);
        out.push(',');
        fmt_real(&mut out, r.grad_sq_norm);
        out.push('\n');
    }
    out
}

pub fn write_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(records_to_csv(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let format_err = |row: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        row,
        message,
    };
    let headers = reader.headers().map_err(|e| format_err(1, e.to_string()))?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(format_err(1, "unexpected metrics header".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| format_err(row, e.to_string()))?;
        let real = |j: usize| -> Result<f64> {
            let cell = &rec[j];
            if cell.is_empty() {
                Ok(f64::NAN)
            } else {
                cell.parse()
                    .map_err(|_| format_err(row, format!("bad value `{cell}` in `{}`", CSV_HEADER[j])))
            }
        };
        let int = |j: usize| -> Result<u64> {
            rec[j]
                .parse()
                .map_err(|_| format_err(row, format!("bad value `{}` in `{}`", &rec[j], CSV_HEADER[j])))
        };
        out.push(MetricsRecord {
            k: int(0)? as usize,
            epoch: int(1)? as usize,
            lr: real(2)?,
            train_loss: real(3)?,
            eval_accuracy: real(4)?,
            var_wk: real(5)?,
            s_k: real(6)?,
            period: int(7)? as usize,
            sync_count_cum: int(8)?,
            bytes_cum: int(9)?,
            comm_time_modeled_cum: real(10)?,
            grad_sq_norm: real(11)?,
        });
    }
    Ok(out)
}
