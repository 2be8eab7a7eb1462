//! Per-strategy aggregation over seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{read_csv, MetricsRecord};
use crate::numkit::Spread;

/// Final numbers of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub iterations: usize,
    /// Last evaluated training loss.
    pub final_train_loss: f64,
    /// Best evaluated accuracy (NaN for regression).
    pub best_eval_accuracy: f64,
    pub sync_count: u64,
    pub bytes: u64,
    pub comm_time: f64,
}

impl RunSummary {
    pub fn from_records(strategy: &str, seed: u64, records: &[MetricsRecord]) -> Self {
        let final_train_loss = records
            .iter()
            .rev()
            .map(|r| r.train_loss)
            .find(|v| !v.is_nan())
            .unwrap_or(f64::NAN);
        let best_eval_accuracy = records
            .iter()
            .map(|r| r.eval_accuracy)
            .filter(|v| !v.is_nan())
            .fold(f64::NAN, f64::max);
        let last = records.last();
        RunSummary {
            strategy: strategy.to_string(),
            seed,
            iterations: records.len(),
            final_train_loss,
            best_eval_accuracy,
            sync_count: last.map_or(0, |r| r.sync_count_cum),
            bytes: last.map_or(0, |r| r.bytes_cum),
            comm_time: last.map_or(0.0, |r| r.comm_time_modeled_cum),
        }
    }
}

/// One row per strategy; medians over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    pub iterations: usize,
    pub final_train_loss: Spread,
    pub best_eval_accuracy: f64,
    pub sync_count: f64,
    /// `K / sync_count`; infinite without syncs.
    pub effective_period: f64,
    pub bytes: f64,
    pub comm_time: f64,
}

const SUMMARY_HEADER: [&str; 11] = [
    "strategy",
    "runs",
    "iterations",
    "final_train_loss_median",
    "final_train_loss_min",
    "final_train_loss_max",
    "best_eval_accuracy",
    "sync_count",
    "effective_period",
    "bytes_per_worker",
    "comm_time_modeled_s",
];

/// Groups by strategy; rows follow `order`, then any remaining names sorted.
pub fn summarize_runs(runs: &[RunSummary], order: &[String]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry(&r.strategy).or_default().push(r);
    }
    let mut names: Vec<&str> = order.iter().map(String::as_str).filter(|n| groups.contains_key(n)).collect();
    for n in groups.keys() {
        if !names.contains(n) {
            names.push(n);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mut g = groups[name].clone();
            g.sort_by_key(|r| r.seed);
            let col = |f: fn(&RunSummary) -> f64| -> Vec<f64> { g.iter().map(|r| f(r)).collect() };
            let iterations = g[0].iterations;
            let sync_count = Spread::of(&col(|r| r.sync_count as f64)).median;
            SummaryRow {
                strategy: name.to_string(),
                runs: g.len(),
                iterations,
                final_train_loss: Spread::of(&col(|r| r.final_train_loss)),
                best_eval_accuracy: Spread::of(&col(|r| r.best_eval_accuracy)).median,
                sync_count,
                effective_period: if sync_count > 0.0 {
                    iterations as f64 / sync_count
                } else {
                    f64::INFINITY
                },
                bytes: Spread::of(&col(|r| r.bytes as f64)).median,
                comm_time: Spread::of(&col(|r| r.comm_time)).median,
            }
        })
        .collect()
}

fn real(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = SUMMARY_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.runs,
            r.iterations,
            real(r.final_train_loss.median),
            real(r.final_train_loss.min),
            real(r.final_train_loss.max),
            real(r.best_eval_accuracy),
            real(r.sync_count),
            real(r.effective_period),
            real(r.bytes),
            real(r.comm_time),
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Four significant digits; `-` for NaN.
fn sig4(v: f64) -> String {
    if v.is_nan() {
        return "-".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{v:.3e}");
    }
    let decimals = (3 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Human-readable table.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let header = [
        "strategy",
        "runs",
        "K",
        "final_loss",
        "loss[min,max]",
        "best_acc",
        "syncs",
        "eff_period",
        "bytes",
        "comm_s",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.strategy.clone(),
                r.runs.to_string(),
                r.iterations.to_string(),
                sig4(r.final_train_loss.median),
                format!("[{}, {}]", sig4(r.final_train_loss.min), sig4(r.final_train_loss.max)),
                sig4(r.best_eval_accuracy),
                sig4(r.sync_count),
                sig4(r.effective_period),
                sig4(r.bytes),
                sig4(r.comm_time),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, header.to_vec());
    for row in &body {
        line(&mut out, row.iter().map(String::as_str).collect());
    }
    out
}

/// Rebuilds the summary from the `<name>_seed<seed>.csv` files in `dir`.
/// Strategies come out sorted by name.
pub fn summarize_dir(dir: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut runs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let file = entry.file_name();
        let Some(stem) = file.to_str().and_then(|f| f.strip_suffix(".csv")) else {
            continue;
        };
        let Some((name, seed)) = stem.rsplit_once("_seed") else {
            continue;
        };
        let Ok(seed) = seed.parse::<u64>() else {
            continue;
        };
        let records = read_csv(entry.path())?;
        runs.push(RunSummary::from_records(name, seed, &records));
    }
    if runs.is_empty() {
        return Err(Error::usage(format!("no run CSVs found in {}", dir.display())));
    }
    Ok(summarize_runs(&runs, &[]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs(name: &str, seed: u64, loss: f64, syncs: u64) -> RunSummary {
        RunSummary {
            strategy: name.into(),
            seed,
            iterations: 4000,
            final_train_loss: loss,
            best_eval_accuracy: 0.9,
            sync_count: syncs,
            bytes: syncs * 10,
            comm_time: syncs as f64 * 1e-3,
        }
    }

    #[test]
    fn effective_period_and_four_digits() {
        let rows = summarize_runs(&[rs("adpsgd", 1, 0.5, 498)], &[]);
        assert_eq!(rows[0].effective_period, 4000.0 / 498.0);
        assert_eq!(sig4(rows[0].effective_period), "8.032");
        let table = format_summary(&rows);
        assert!(table.contains("8.032"), "{table}");
    }

    #[test]
    fn medians_and_order() {
        let runs = vec![
            rs("b", 1, 0.3, 10),
            rs("a", 1, 0.1, 10),
            rs("b", 2, 0.1, 20),
            rs("b", 3, 0.2, 30),
        ];
        let rows = summarize_runs(&runs, &["b".into(), "a".into()]);
        assert_eq!(rows[0].strategy, "b");
        assert_eq!(rows[0].runs, 3);
        assert_eq!(rows[0].final_train_loss, Spread { min: 0.1, median: 0.2, max: 0.3 });
        assert_eq!(rows[0].sync_count, 20.0);
        assert_eq!(rows[1].strategy, "a");
        assert_eq!(summarize_runs(&runs, &[])[0].strategy, "a");
    }

    #[test]
    fn no_syncs_is_infinite_period() {
        let rows = summarize_runs(&[rs("x", 1, 0.1, 0)], &[]);
        assert!(rows[0].effective_period.is_infinite());
        assert_eq!(sig4(rows[0].effective_period), "inf");
    }

    #[test]
    fn sig4_examples() {
        assert_eq!(sig4(0.123456), "0.1235");
        assert_eq!(sig4(12.0), "12.00");
        assert_eq!(sig4(1234.6), "1235");
        assert_eq!(sig4(1.5e9), "1.500e9");
        assert_eq!(sig4(f64::NAN), "-");
    }
}
