//! Differentiable models with closed-form mini-batch gradients.
//!
//! Parameter layout:
//! - linear regression: `input_dim` weights, no bias.
//! - logistic regression (binary): `input_dim` weights followed by one bias.
//! - mlp: for each layer, an `out × in` row-major weight block followed by
//!   `out` biases. Hidden layers use ReLU, the output is softmax
//!   cross-entropy over `classes` logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{check_dim, check_finite, dot, sq_l2_norm, ParamVector, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegressionMse,
    LogisticRegression,
    Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Hidden layer widths (mlp only).
    pub hidden: Vec<usize>,
    /// Output classes (mlp only; logistic regression is always 2).
    pub classes: usize,
    pub l2_reg: f64,
}

impl ModelSpec {
    pub fn linear_regression(input_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LinearRegressionMse,
            input_dim,
            hidden: Vec::new(),
            classes: 0,
            l2_reg: 0.0,
        }
    }

    pub fn logistic_regression(input_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LogisticRegression,
            input_dim,
            hidden: Vec::new(),
            classes: 2,
            l2_reg: 0.0,
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim,
            hidden,
            classes,
            l2_reg: 0.0,
        }
    }

    pub fn with_l2(mut self, l2_reg: f64) -> Self {
        self.l2_reg = l2_reg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::usage("input_dim must be positive"));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::usage("l2_reg must be a nonnegative finite number"));
        }
        if self.kind == ModelKind::Mlp {
            if self.classes < 2 {
                return Err(Error::usage("mlp needs at least 2 output classes"));
            }
            if self.hidden.contains(&0) {
                return Err(Error::usage("mlp layer widths must be positive"));
            }
        }
        Ok(())
    }

    pub fn is_classifier(&self) -> bool {
        self.kind != ModelKind::LinearRegressionMse
    }

    /// Layer sizes from input to output (mlp only).
    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.classes);
        sizes
    }

    /// Parameter dimension `d`.
    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::LinearRegressionMse => self.input_dim,
            ModelKind::LogisticRegression => self.input_dim + 1,
            ModelKind::Mlp => self
                .layer_sizes()
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum(),
        }
    }

    /// Initial parameters: zeros for the linear models, Glorot-uniform
    /// weights with zero biases for the mlp.
    pub fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut w = vec![0.0; self.dim()];
        if self.kind == ModelKind::Mlp {
            let mut offset = 0;
            for pair in self.layer_sizes().windows(2) {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut w[offset..offset + fan_in * fan_out] {
                    *v = rng.uniform_in(-bound, bound);
                }
                offset += fan_in * fan_out + fan_out;
            }
        }
        ParamVector::from_raw(w)
    }
}

/// Mini-batch of rows. Classification targets are class indices stored as reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    features: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
}

impl Batch {
    pub fn new(features: Vec<f64>, targets: Vec<f64>, input_dim: usize) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::usage("batch needs at least one row"));
        }
        check_dim(targets.len() * input_dim, features.len())?;
        Ok(Batch {
            features,
            targets,
            input_dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let input_dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != input_dim) {
            return Err(Error::usage("ragged batch rows"));
        }
        Batch::new(rows.concat(), targets.to_vec(), input_dim)
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows of every batch, in order.
    pub fn concat(batches: &[Batch]) -> Result<Batch> {
        let first = batches.first().ok_or_else(|| Error::usage("no batches to concatenate"))?;
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for b in batches {
            check_dim(first.input_dim, b.input_dim)?;
            features.extend_from_slice(&b.features);
            targets.extend_from_slice(&b.targets);
        }
        Batch::new(features, targets, first.input_dim)
    }
}

fn check_inputs(spec: &ModelSpec, w: &ParamVector, batch: &Batch) -> Result<()> {
    check_dim(spec.dim(), w.len())?;
    check_dim(spec.input_dim, batch.input_dim())?;
    if spec.is_classifier() {
        let classes = spec.classes;
        if let Some(t) = batch
            .targets()
            .iter()
            .find(|&&t| !(t >= 0.0 && t.fract() == 0.0 && (t as usize) < classes))
        {
            return Err(Error::usage(format!(
                "target {t} is not a class index below {classes}"
            )));
        }
    }
    Ok(())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scratch space for one mlp forward/backward pass.
struct MlpPass {
    sizes: Vec<usize>,
    /// Pre-activations per layer (index 0 unused).
    z: Vec<Vec<f64>>,
    /// Activations per layer (index 0 is the input).
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl MlpPass {
    fn new(spec: &ModelSpec) -> Self {
        let sizes = spec.layer_sizes();
        let bufs = || sizes.iter().map(|&s| vec![0.0; s]).collect::<Vec<_>>();
        MlpPass {
            z: bufs(),
            a: bufs(),
            delta: bufs(),
            sizes,
        }
    }

    /// Returns logits (the last pre-activation).
    fn forward(&mut self, w: &[f64], x: &[f64]) -> &[f64] {
        self.a[0].copy_from_slice(x);
        let layers = self.sizes.len() - 1;
        let mut offset = 0;
        for l in 1..=layers {
            let (fan_in, fan_out) = (self.sizes[l - 1], self.sizes[l]);
            let weights = &w[offset..offset + fan_in * fan_out];
            let bias = &w[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let (prev, rest) = self.a.split_at_mut(l);
            let input = &prev[l - 1];
            for o in 0..fan_out {
                let z = dot(&weights[o * fan_in..(o + 1) * fan_in], input) + bias[o];
                self.z[l][o] = z;
                rest[0][o] = if l < layers { z.max(0.0) } else { z };
            }
            offset += fan_in * fan_out + fan_out;
        }
        &self.z[layers]
    }

    /// Accumulates `scale * dLoss/dw` for the last forward pass into `grad`,
    /// given the output-layer error already stored in `delta[last]`.
    fn backward(&mut self, w: &[f64], grad: &mut [f64], scale: f64) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 1..=layers {
            offsets.push(offset);
            offset += self.sizes[l - 1] * self.sizes[l] + self.sizes[l];
        }
        for l in (1..=layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l - 1], self.sizes[l]);
            let off = offsets[l - 1];
            let (lower, upper) = self.delta.split_at_mut(l);
            let delta = &upper[0];
            let input = &self.a[l - 1];
            for o in 0..fan_out {
                let d = scale * delta[o];
                if d != 0.0 {
                    let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if l > 1 {
                let weights = &w[off..off + fan_in * fan_out];
                let prev = &mut lower[l - 1];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for o in 0..fan_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (p, wv) in prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                            *p += d * wv;
                        }
                    }
                }
                for (p, z) in prev.iter_mut().zip(&self.z[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
    }
}

/// Softmax cross-entropy for one row; writes `softmax − onehot` into `err`.
fn softmax_xent(logits: &[f64], target: usize, err: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (e, &z) in err.iter_mut().zip(logits) {
        *e = (z - max).exp();
        sum += *e;
    }
    for e in err.iter_mut() {
        *e /= sum;
    }
    err[target] -= 1.0;
    max + sum.ln() - logits[target]
}

fn data_loss_grad(
    spec: &ModelSpec,
    w: &[f64],
    batch: &Batch,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let rows = batch.rows();
    let inv = 1.0 / rows as f64;
    let mut total = 0.0;
    match spec.kind {
        ModelKind::LinearRegressionMse => {
            for i in 0..rows {
                let x = batch.row(i);
                let r = dot(w, x) - batch.target(i);
                total += 0.5 * r * r;
                if let Some(g) = grad.as_deref_mut() {
                    for (gj, xj) in g.iter_mut().zip(x) {
                        *gj += inv * r * xj;
                    }
                }
            }
        }
        ModelKind::LogisticRegression => {
            let d = spec.input_dim;
            for i in 0..rows {
                let x = batch.row(i);
                let y = batch.target(i);
                let z = dot(&w[..d], x) + w[d];
                total += softplus(z) - y * z;
                if let Some(g) = grad.as_deref_mut() {
                    let r = sigmoid(z) - y;
                    for (gj, xj) in g[..d].iter_mut().zip(x) {
                        *gj += inv * r * xj;
                    }
                    g[d] += inv * r;
                }
            }
        }
        ModelKind::Mlp => {
            let mut pass = MlpPass::new(spec);
            let last = pass.sizes.len() - 1;
            let mut err = vec![0.0; spec.classes];
            for i in 0..rows {
                let logits = pass.forward(w, batch.row(i));
                total += softmax_xent(logits, batch.target(i) as usize, &mut err);
                if let Some(g) = grad.as_deref_mut() {
                    pass.delta[last].copy_from_slice(&err);
                    pass.backward(w, g, inv);
                }
            }
        }
    }
    total * inv
}

fn regularized(spec: &ModelSpec, w: &ParamVector, data_loss: f64) -> f64 {
    if spec.l2_reg > 0.0 {
        data_loss + 0.5 * spec.l2_reg * sq_l2_norm(w.as_slice())
    } else {
        data_loss
    }
}

/// Mean per-sample loss plus `(l2_reg/2)‖w‖²`.
pub fn loss(spec: &ModelSpec, w: &ParamVector, batch: &Batch) -> Result<f64> {
    check_inputs(spec, w, batch)?;
    let value = regularized(spec, w, data_loss_grad(spec, w.as_slice(), batch, None));
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
            iteration: None,
        });
    }
    Ok(value)
}

/// Loss and gradient from one pass over the batch.
pub fn loss_and_grad(spec: &ModelSpec, w: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)> {
    check_inputs(spec, w, batch)?;
    let mut g = vec![0.0; w.len()];
    let data_loss = data_loss_grad(spec, w.as_slice(), batch, Some(&mut g));
    if spec.l2_reg > 0.0 {
        for (gj, wj) in g.iter_mut().zip(w.iter()) {
            *gj += spec.l2_reg * wj;
        }
    }
    let value = regularized(spec, w, data_loss);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
            iteration: None,
        });
    }
    check_finite(&g, "gradient")?;
    Ok((value, ParamVector::from_raw(g)))
}

/// `(1/M) Σ ∇F_i(w) + l2_reg·w`.
pub fn grad(spec: &ModelSpec, w: &ParamVector, batch: &Batch) -> Result<ParamVector> {
    loss_and_grad(spec, w, batch).map(|(_, g)| g)
}

/// Central finite differences of [`loss`] with step `h`.
pub fn finite_diff_grad(spec: &ModelSpec, w: &ParamVector, batch: &Batch, h: f64) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::usage("finite-difference step must be positive"));
    }
    let mut probe = w.clone();
    let mut out = Vec::with_capacity(w.len());
    for j in 0..w.len() {
        let orig = w[j];
        probe.as_mut_slice()[j] = orig + h;
        let up = loss(spec, &probe, batch)?;
        probe.as_mut_slice()[j] = orig - h;
        let down = loss(spec, &probe, batch)?;
        probe.as_mut_slice()[j] = orig;
        out.push((up - down) / (2.0 * h));
    }
    ParamVector::new(out)
}

/// Predicted class for one row; ties go to the lowest class index.
pub fn predict_class(spec: &ModelSpec, w: &ParamVector, x: &[f64]) -> Result<usize> {
    match spec.kind {
        ModelKind::LinearRegressionMse => Err(Error::usage("accuracy is undefined for regression")),
        ModelKind::LogisticRegression => {
            let d = spec.input_dim;
            Ok(usize::from(dot(&w.as_slice()[..d], x) + w[d] > 0.0))
        }
        ModelKind::Mlp => {
            let mut pass = MlpPass::new(spec);
            Ok(argmax(pass.forward(w.as_slice(), x)))
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose predicted class equals the target.
pub fn accuracy(spec: &ModelSpec, w: &ParamVector, batch: &Batch) -> Result<f64> {
    if !spec.is_classifier() {
        return Err(Error::usage("accuracy is undefined for regression"));
    }
    check_inputs(spec, w, batch)?;
    let mut correct = 0usize;
    match spec.kind {
        ModelKind::Mlp => {
            let mut pass = MlpPass::new(spec);
            for i in 0..batch.rows() {
                if argmax(pass.forward(w.as_slice(), batch.row(i))) == batch.target(i) as usize {
                    correct += 1;
                }
            }
        }
        _ => {
            for i in 0..batch.rows() {
                if predict_class(spec, w, batch.row(i))? == batch.target(i) as usize {
                    correct += 1;
                }
            }
        }
    }
    Ok(correct as f64 / batch.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn random_batch(rng: &mut RngStream, rows: usize, dim: usize, classes: usize) -> Batch {
        let features = (0..rows * dim).map(|_| rng.normal()).collect();
        let targets = (0..rows)
            .map(|_| if classes == 0 { rng.normal() } else { rng.below(classes) as f64 })
            .collect();
        Batch::new(features, targets, dim).unwrap()
    }

    fn random_params(rng: &mut RngStream, d: usize) -> ParamVector {
        pv(&(0..d).map(|_| 0.5 * rng.normal()).collect::<Vec<_>>())
    }

    #[test]
    fn dims() {
        assert_eq!(ModelSpec::linear_regression(3).dim(), 3);
        assert_eq!(ModelSpec::logistic_regression(4).dim(), 5);
        assert_eq!(ModelSpec::mlp(20, vec![32], 2).dim(), 20 * 32 + 32 + 32 * 2 + 2);
        assert_eq!(ModelSpec::mlp(2, vec![], 3).dim(), 9);
    }

    #[test]
    fn linreg_loss_and_grad_examples() {
        let spec = ModelSpec::linear_regression(1);
        let b = Batch::from_rows(&[vec![1.0]], &[2.0]).unwrap();
        assert_eq!(loss(&spec, &pv(&[0.0]), &b).unwrap(), 2.0);
        assert_eq!(grad(&spec, &pv(&[0.0]), &b).unwrap(), pv(&[-2.0]));
    }

    #[test]
    fn uniform_predictors_give_log_classes() {
        let spec = ModelSpec::logistic_regression(1);
        let b = Batch::from_rows(&[vec![3.7]], &[1.0]).unwrap();
        assert!((loss(&spec, &pv(&[0.0, 0.0]), &b).unwrap() - 2f64.ln()).abs() < 1e-15);

        let spec = ModelSpec::mlp(2, vec![4], 3);
        let b = Batch::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.5], vec![-1.0, 3.0]], &[0.0, 1.0, 2.0]).unwrap();
        let w = ParamVector::zeros(spec.dim());
        assert!((loss(&spec, &w, &b).unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let spec = ModelSpec::linear_regression(2);
        let w = pv(&[1.5, -2.0]);
        let b = Batch::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.5]], &[-0.5, 2.0]).unwrap();
        assert_eq!(grad(&spec, &w, &b).unwrap(), ParamVector::zeros(2));
    }

    #[test]
    fn l2_only_gradient_is_exact() {
        let spec = ModelSpec::linear_regression(2).with_l2(0.3);
        let w = pv(&[1.5, -2.0]);
        let b = Batch::from_rows(&[vec![1.0, 1.0]], &[-0.5]).unwrap();
        let g = grad(&spec, &w, &b).unwrap();
        assert_eq!(g, pv(&[0.3 * 1.5, 0.3 * -2.0]));
    }

    #[test]
    fn dimension_errors() {
        let spec = ModelSpec::linear_regression(2);
        let b = Batch::from_rows(&[vec![1.0, 1.0]], &[0.0]).unwrap();
        assert!(matches!(loss(&spec, &pv(&[1.0]), &b), Err(Error::Dimension { .. })));
        let b3 = Batch::from_rows(&[vec![1.0, 1.0, 1.0]], &[0.0]).unwrap();
        assert!(matches!(grad(&spec, &pv(&[1.0, 1.0]), &b3), Err(Error::Dimension { .. })));
    }

    #[test]
    fn bad_class_target_rejected() {
        let spec = ModelSpec::logistic_regression(1);
        let b = Batch::from_rows(&[vec![1.0]], &[2.0]).unwrap();
        assert!(matches!(loss(&spec, &pv(&[0.0, 0.0]), &b), Err(Error::Usage(_))));
    }

    #[test]
    fn finite_diff_on_quadratic() {
        // ½(w·1 − 0)² = ½w²
        let spec = ModelSpec::linear_regression(1);
        let b = Batch::from_rows(&[vec![1.0]], &[0.0]).unwrap();
        for h in [1e-2, 1e-4, 1e-6] {
            let g = finite_diff_grad(&spec, &pv(&[3.0]), &b, h).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-8, "h={h}: {}", g[0]);
        }
        let g = finite_diff_grad(&spec, &pv(&[0.0]), &b, 1e-4).unwrap();
        assert!(g[0].abs() < 1e-12);
        assert!(finite_diff_grad(&spec, &pv(&[0.0]), &b, 0.0).is_err());
    }

    fn max_rel_err(a: &ParamVector, b: &ParamVector) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-2))
            .fold(0.0, f64::max)
    }

    #[test]
    fn logistic_grad_matches_finite_differences_seed_42() {
        let mut rng = RngStream::new(42, 0);
        let spec = ModelSpec::logistic_regression(4);
        let w = random_params(&mut rng, spec.dim());
        let b = random_batch(&mut rng, 16, 4, 2);
        let err = max_rel_err(&grad(&spec, &w, &b).unwrap(), &finite_diff_grad(&spec, &w, &b, 1e-6).unwrap());
        assert!(err < 1e-6, "err = {err:e}");
    }

    #[test]
    fn mlp_grad_matches_finite_differences() {
        let mut rng = RngStream::new(9, 0);
        let spec = ModelSpec::mlp(3, vec![5, 4], 3).with_l2(0.01);
        for _ in 0..10 {
            let w = random_params(&mut rng, spec.dim());
            let b = random_batch(&mut rng, 6, 3, 3);
            let err = max_rel_err(&grad(&spec, &w, &b).unwrap(), &finite_diff_grad(&spec, &w, &b, 1e-6).unwrap());
            assert!(err < 1e-6, "err = {err:e}");
        }
    }

    #[test]
    fn batch_grad_is_mean_of_sample_grads() {
        let mut rng = RngStream::new(5, 0);
        for spec in [
            ModelSpec::linear_regression(3),
            ModelSpec::logistic_regression(3),
            ModelSpec::mlp(3, vec![6], 4),
        ] {
            let classes = if spec.is_classifier() { spec.classes } else { 0 };
            let w = random_params(&mut rng, spec.dim());
            let b = random_batch(&mut rng, 7, 3, classes);
            let full = grad(&spec, &w, &b).unwrap();
            let mut acc = vec![0.0; spec.dim()];
            for i in 0..b.rows() {
                let single = Batch::new(b.row(i).to_vec(), vec![b.target(i)], 3).unwrap();
                for (a, g) in acc.iter_mut().zip(grad(&spec, &w, &single).unwrap().iter()) {
                    *a += g / b.rows() as f64;
                }
            }
            for (a, g) in acc.iter().zip(full.iter()) {
                assert!((a - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_permutation_invariance() {
        let mut rng = RngStream::new(6, 0);
        let spec = ModelSpec::mlp(2, vec![5], 3);
        let w = random_params(&mut rng, spec.dim());
        let b = random_batch(&mut rng, 5, 2, 3);
        let order = [3, 0, 4, 1, 2];
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| b.row(i).to_vec()).collect();
        let targets: Vec<f64> = order.iter().map(|&i| b.target(i)).collect();
        let p = Batch::from_rows(&rows, &targets).unwrap();
        assert!((loss(&spec, &w, &b).unwrap() - loss(&spec, &w, &p).unwrap()).abs() < 1e-14);
        for (x, y) in grad(&spec, &w, &b).unwrap().iter().zip(grad(&spec, &w, &p).unwrap().iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn accuracy_examples() {
        let spec = ModelSpec::logistic_regression(1);
        let b = Batch::from_rows(&[vec![1.0], vec![-1.0], vec![2.0], vec![-2.0]], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(accuracy(&spec, &pv(&[1.0, 0.0]), &b).unwrap(), 1.0);
        // zero weights predict class 0 everywhere by the tie rule
        assert_eq!(accuracy(&spec, &pv(&[0.0, 0.0]), &b).unwrap(), 0.5);
        // w=[1, -1.5]: z = -0.5, -2.5, 0.5, -3.5 → predictions 0,0,1,0 → rows 1,2,3 correct
        assert_eq!(accuracy(&spec, &pv(&[1.0, -1.5]), &b).unwrap(), 0.75);
        // w=[-1, 0]: every prediction flipped → 0
        assert_eq!(accuracy(&spec, &pv(&[-1.0, 0.0]), &b).unwrap(), 0.0);
    }

    #[test]
    fn mlp_ties_go_to_lowest_class() {
        let spec = ModelSpec::mlp(1, vec![2], 3);
        let w = ParamVector::zeros(spec.dim());
        assert_eq!(predict_class(&spec, &w, &[5.0]).unwrap(), 0);
    }

    #[test]
    fn accuracy_on_regression_is_usage_error() {
        let spec = ModelSpec::linear_regression(1);
        let b = Batch::from_rows(&[vec![1.0]], &[1.0]).unwrap();
        assert!(matches!(accuracy(&spec, &pv(&[0.0]), &b), Err(Error::Usage(_))));
    }

    #[test]
    fn glorot_init_is_bounded_and_deterministic() {
        let spec = ModelSpec::mlp(20, vec![32], 2);
        let a = spec.init_params(&mut RngStream::new(1, 99));
        let b = spec.init_params(&mut RngStream::new(1, 99));
        assert_eq!(a, b);
        let bound = (6.0f64 / 52.0).sqrt();
        assert!(a.as_slice()[..640].iter().all(|v| v.abs() <= bound));
        assert!(a.as_slice()[640..672].iter().all(|&v| v == 0.0));
    }
}
