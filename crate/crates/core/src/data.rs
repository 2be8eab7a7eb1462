//! Datasets, epoch shuffling and per-worker mini-batch extraction.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::numkit::{dot, ParamVector, RngStream};

/// Stream id reserved for synthetic data generation.
const DATA_STREAM: u64 = u64::MAX - 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    LinregGaussian,
    TwoGaussians,
    RingClasses,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linreg_gaussian" => Ok(SyntheticKind::LinregGaussian),
            "two_gaussians" => Ok(SyntheticKind::TwoGaussians),
            "ring_classes" => Ok(SyntheticKind::RingClasses),
            other => Err(Error::usage(format!("unsupported synthetic dataset kind `{other}`"))),
        }
    }
}

/// Immutable table of `N` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: Batch,
    task: TaskKind,
    classes: usize,
    true_weights: Option<ParamVector>,
}

impl Dataset {
    pub fn new(rows: Batch, task: TaskKind) -> Result<Self> {
        let classes = match task {
            TaskKind::Regression => 0,
            TaskKind::Classification => {
                let mut max = 0usize;
                for &t in rows.targets() {
                    if !(t >= 0.0 && t.fract() == 0.0) {
                        return Err(Error::usage(format!("class label {t} is not a nonnegative integer")));
                    }
                    max = max.max(t as usize);
                }
                (max + 1).max(2)
            }
        };
        Ok(Dataset {
            rows,
            task,
            classes,
            true_weights: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.rows.input_dim()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Number of classes (0 for regression).
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Ground-truth weights for `linreg_gaussian` data.
    pub fn true_weights(&self) -> Option<&ParamVector> {
        self.true_weights.as_ref()
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> &Batch {
        &self.rows
    }

    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        let dim = self.input_dim();
        let mut features = Vec::with_capacity(indices.len() * dim);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.rows.row(i));
            targets.push(self.rows.target(i));
        }
        Batch::new(features, targets, dim)
    }
}

/// Deterministic synthetic data.
///
/// - `linreg_gaussian`: `x ~ N(0, I)`, `w* ~ N(0, I)`, `y = w*·x + noise·ε`.
/// - `two_gaussians`: balanced labels, class means `±3·e₀`, isotropic std `noise`.
/// - `ring_classes`: three classes on circles of radius 1, 2, 3 in the first
///   two coordinates, isotropic std `noise` on every coordinate.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, input_dim: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::usage("synthetic dataset needs at least one row"));
    }
    if input_dim == 0 {
        return Err(Error::usage("input_dim must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::usage("noise must be nonnegative"));
    }
    if kind == SyntheticKind::RingClasses && input_dim < 2 {
        return Err(Error::usage("ring_classes needs input_dim >= 2"));
    }
    let mut rng = RngStream::new(seed, DATA_STREAM);
    let mut features = Vec::with_capacity(n * input_dim);
    let mut targets = Vec::with_capacity(n);
    let mut true_weights = None;
    match kind {
        SyntheticKind::LinregGaussian => {
            let w: Vec<f64> = (0..input_dim).map(|_| rng.normal()).collect();
            for _ in 0..n {
                let x: Vec<f64> = (0..input_dim).map(|_| rng.normal()).collect();
                let y = if noise > 0.0 {
                    dot(&w, &x) + noise * rng.normal()
                } else {
                    dot(&w, &x)
                };
                features.extend_from_slice(&x);
                targets.push(y);
            }
            true_weights = Some(ParamVector::new(w)?);
        }
        SyntheticKind::TwoGaussians => {
            for _ in 0..n {
                let label = usize::from(rng.bernoulli(0.5));
                let sign = if label == 1 { 1.0 } else { -1.0 };
                for j in 0..input_dim {
                    let mean = if j == 0 { 3.0 * sign } else { 0.0 };
                    features.push(mean + noise * rng.normal());
                }
                targets.push(label as f64);
            }
        }
        SyntheticKind::RingClasses => {
            for _ in 0..n {
                let label = rng.below(3);
                let radius = (label + 1) as f64;
                let angle = rng.uniform_in(0.0, std::f64::consts::TAU);
                for j in 0..input_dim {
                    let centre = match j {
                        0 => radius * angle.cos(),
                        1 => radius * angle.sin(),
                        _ => 0.0,
                    };
                    features.push(centre + noise * rng.normal());
                }
                targets.push(label as f64);
            }
        }
    }
    let task = if kind == SyntheticKind::LinregGaussian {
        TaskKind::Regression
    } else {
        TaskKind::Classification
    };
    let mut ds = Dataset::new(Batch::new(features, targets, input_dim)?, task)?;
    if kind == SyntheticKind::RingClasses {
        ds.classes = 3;
    }
    ds.true_weights = true_weights;
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub target_column: String,
    pub task: TaskKind,
}

/// Loads a headed numeric CSV. Every column except the target is a feature;
/// row order is kept. Reported row numbers are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, 1, e))?
        .clone();
    let target_idx = headers
        .iter()
        .position(|h| h.trim() == schema.target_column)
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            row: 1,
            message: format!("no column named `{}`", schema.target_column),
        })?;
    let input_dim = headers.len() - 1;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, line, e))?;
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                row: line,
                message: format!("non-numeric value `{cell}` in column `{}`", &headers[j]),
            })?;
            if !value.is_finite() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    row: line,
                    message: format!("non-finite value in column `{}`", &headers[j]),
                });
            }
            if j == target_idx {
                targets.push(value);
            } else {
                features.push(value);
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            row: 1,
            message: "no data rows".into(),
        });
    }
    Dataset::new(Batch::new(features, targets, input_dim)?, schema.task)
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    let row = e.position().map_or(line, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            row,
            message: format!("{other:?}"),
        },
    }
}

/// Epoch-level random reshuffling with drop-last batching.
#[derive(Clone, Debug)]
pub struct SamplerState {
    permutation: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: RngStream,
}

impl SamplerState {
    pub fn new(n_rows: usize, mut rng: RngStream) -> Self {
        let mut permutation: Vec<usize> = (0..n_rows).collect();
        permutation.shuffle(&mut rng);
        SamplerState {
            permutation,
            cursor: 0,
            epoch: 0,
            rng,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Row indices for the next `n_workers` batches of `m` rows each.
    /// Starts a freshly shuffled epoch when fewer than `n_workers·m` rows remain.
    pub fn next_indices(&mut self, n_workers: usize, m: usize) -> Result<Vec<Vec<usize>>> {
        let need = n_workers * m;
        if need == 0 || need > self.permutation.len() {
            return Err(Error::usage(format!(
                "global batch of {need} rows does not fit a dataset of {}",
                self.permutation.len()
            )));
        }
        if self.cursor + need > self.permutation.len() {
            self.permutation.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let window = &self.permutation[self.cursor..self.cursor + need];
        self.cursor += need;
        Ok(window.chunks(m).map(<[usize]>::to_vec).collect())
    }

    pub fn next_global_batch(&mut self, dataset: &Dataset, n_workers: usize, m: usize) -> Result<Vec<Batch>> {
        self.next_indices(n_workers, m)?
            .iter()
            .map(|idx| dataset.gather(idx))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{loss, ModelSpec};
    use proptest::prelude::*;
    use std::collections::HashSet;
    use std::io::Write;

    #[test]
    fn noiseless_linreg_fits_exactly() {
        let ds = gen_synthetic(SyntheticKind::LinregGaussian, 200, 5, 0.0, 3).unwrap();
        let spec = ModelSpec::linear_regression(5);
        let l = loss(&spec, ds.true_weights().unwrap(), ds.as_batch()).unwrap();
        assert!(l <= 1e-20, "loss = {l:e}");
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [SyntheticKind::LinregGaussian, SyntheticKind::TwoGaussians, SyntheticKind::RingClasses] {
            let a = gen_synthetic(kind, 50, 3, 0.5, 11).unwrap();
            let b = gen_synthetic(kind, 50, 3, 0.5, 11).unwrap();
            assert_eq!(a, b);
        }
        assert!("spiral".parse::<SyntheticKind>().is_err());
    }

    #[test]
    fn ring_classes_has_three_classes() {
        let ds = gen_synthetic(SyntheticKind::RingClasses, 300, 2, 0.1, 1).unwrap();
        assert_eq!(ds.classes(), 3);
    }

    #[test]
    fn exact_partition_then_new_epoch() {
        let mut s = SamplerState::new(8, RngStream::new(1, 2));
        let first = s.next_indices(2, 4).unwrap();
        let all: HashSet<usize> = first.iter().flatten().copied().collect();
        assert_eq!(all.len(), 8);
        assert_eq!(s.epoch(), 0);
        s.next_indices(2, 4).unwrap();
        assert_eq!(s.epoch(), 1);
    }

    #[test]
    fn single_worker_full_batch() {
        let mut s = SamplerState::new(6, RngStream::new(1, 2));
        let perm = s.permutation().to_vec();
        let b = s.next_indices(1, 6).unwrap();
        assert_eq!(b, vec![perm]);
    }

    #[test]
    fn leftover_rows_are_dropped() {
        let mut s = SamplerState::new(10, RngStream::new(4, 2));
        let perm = s.permutation().to_vec();
        let b = s.next_indices(2, 4).unwrap();
        assert_eq!(b, vec![perm[0..4].to_vec(), perm[4..8].to_vec()]);
        assert_eq!(s.cursor(), 8);
        s.next_indices(2, 4).unwrap();
        assert_eq!((s.epoch(), s.cursor()), (1, 8));
    }

    #[test]
    fn oversize_global_batch_is_rejected() {
        let mut s = SamplerState::new(4, RngStream::new(1, 2));
        assert!(s.next_indices(2, 4).is_err());
    }

    proptest! {
        #[test]
        fn epochs_partition_retained_rows(n in 4usize..60, workers in 1usize..4, m in 1usize..5, seed in 0u64..1000) {
            prop_assume!(workers * m <= n);
            let mut s = SamplerState::new(n, RngStream::new(seed, 0));
            let per_epoch = n / (workers * m);
            for epoch in 0..3 {
                let mut seen = HashSet::new();
                for _ in 0..per_epoch {
                    let batches = s.next_indices(workers, m)?;
                    prop_assert_eq!(s.epoch(), epoch);
                    for b in &batches {
                        prop_assert_eq!(b.len(), m);
                        for &i in b {
                            prop_assert!(seen.insert(i), "index {} repeated within epoch", i);
                        }
                    }
                }
                prop_assert_eq!(seen.len(), per_epoch * workers * m);
                let mut perm = s.permutation().to_vec();
                perm.sort_unstable();
                prop_assert_eq!(perm, (0..n).collect::<Vec<_>>());
            }
        }
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema(task: TaskKind) -> CsvSchema {
        CsvSchema {
            target_column: "y".into(),
            task,
        }
    }

    #[test]
    fn csv_reads_exact_values() {
        let f = write_tmp("a,y,b\n1.5,0,2\n-3,1,4e-1\n0,1,7\n");
        let ds = load_csv(f.path(), &schema(TaskKind::Classification)).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.as_batch().features(), &[1.5, 2.0, -3.0, 0.4, 0.0, 7.0]);
        assert_eq!(ds.as_batch().targets(), &[0.0, 1.0, 1.0]);
        assert_eq!(ds.classes(), 2);
    }

    #[test]
    fn csv_header_only_is_an_error() {
        let f = write_tmp("a,y\n");
        let err = load_csv(f.path(), &schema(TaskKind::Regression)).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
    }

    #[test]
    fn csv_non_numeric_names_row() {
        let f = write_tmp("a,y\n1,2\nabc,3\n");
        match load_csv(f.path(), &schema(TaskKind::Regression)).unwrap_err() {
            Error::Format { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_row_is_format_error() {
        let f = write_tmp("a,y\n1,2\n3\n");
        assert!(matches!(load_csv(f.path(), &schema(TaskKind::Regression)), Err(Error::Format { row: 3, .. })));
    }

    #[test]
    fn csv_missing_file_is_io_error() {
        assert!(matches!(
            load_csv("/nonexistent/data.csv", &schema(TaskKind::Regression)),
            Err(Error::Io { .. })
        ));
    }
}
