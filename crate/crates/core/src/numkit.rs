//! Dense vector arithmetic, seeded random streams and small summary statistics.
//!
//! Every reduction over workers runs in ascending worker order so results do
//! not depend on thread scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Flat parameter vector `w`. Entries are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "parameter vector")?;
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    /// Wraps values that the caller has already checked.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        ParamVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
            iteration: None,
        })
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

/// `alpha * x + y`.
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    check_dim(x.len(), y.len())?;
    let out: Vec<f64> = x.iter().zip(y.iter()).map(|(xi, yi)| alpha * xi + yi).collect();
    check_finite(&out, "axpy")?;
    Ok(ParamVector(out))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Elementwise mean, accumulated in ascending index order.
///
/// Deviations from the first vector are summed and the mean offset is added
/// back, so `n` copies of one vector average to that vector bit-exactly.
pub fn mean_of<'a, I>(xs: I) -> Result<ParamVector>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut iter = xs.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::usage("cannot average an empty list of vectors"))?;
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    let mut n = 1usize;
    for x in iter {
        check_dim(dim, x.len())?;
        for ((a, xi), x0) in acc.iter_mut().zip(x.iter()).zip(first.iter()) {
            *a += xi - x0;
        }
        n += 1;
    }
    let nf = n as f64;
    let out: Vec<f64> = acc
        .iter()
        .zip(first.iter())
        .map(|(&a, &x0)| if a == 0.0 { x0 } else { x0 + a / nf })
        .collect();
    check_finite(&out, "mean of vectors")?;
    Ok(ParamVector(out))
}

pub fn mean_vectors(xs: &[ParamVector]) -> Result<ParamVector> {
    mean_of(xs)
}

/// `(1/n) Σ_j ‖mean − x_j‖²` over the given vectors, in ascending order.
pub fn mean_sq_deviation<'a, I>(xs: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a ParamVector> + Clone,
{
    let mean = mean_of(xs.clone())?;
    let mut total = 0.0;
    let mut n = 0usize;
    for x in xs {
        total += x
            .iter()
            .zip(mean.iter())
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>();
        n += 1;
    }
    Ok(total / n as f64)
}

/// Seeded random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id selecting an independent keystream,
/// so worker streams need no shared state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Min / median / max of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    /// NaN entries are ignored; an all-NaN or empty sample yields NaNs.
    pub fn of(values: &[f64]) -> Spread {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Spread {
                min: f64::NAN,
                median: f64::NAN,
                max: f64::NAN,
            };
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Spread {
            min: v[0],
            median,
            max: v[n - 1],
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    Spread::of(values).median
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(0.0, &pv(&[5.0, 5.0]), &pv(&[1.0, 2.0])).unwrap(), pv(&[1.0, 2.0]));
        assert_eq!(axpy(1.0, &pv(&[1.0, 1.0]), &pv(&[0.0, 0.0])).unwrap(), pv(&[1.0, 1.0]));
        let r = axpy(-0.1, &pv(&[10.0, 20.0]), &pv(&[3.0, 4.0])).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-15 && (r[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn axpy_rejects_length_mismatch() {
        let err = axpy(1.0, &pv(&[1.0]), &pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 1, found: 2 }));
    }

    #[test]
    fn axpy_rejects_overflow() {
        let err = axpy(f64::MAX, &pv(&[f64::MAX]), &pv(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn non_finite_vectors_are_rejected() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn sq_norm_examples() {
        assert_eq!(sq_l2_norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(sq_l2_norm(&[3.0, 4.0]), 25.0);
        assert_eq!(sq_l2_norm(&[1.0; 4]), 4.0);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_vectors(&[pv(&[1.0, 3.0]), pv(&[3.0, 5.0])]).unwrap(), pv(&[2.0, 4.0]));
        assert_eq!(mean_vectors(&[pv(&[7.0])]).unwrap(), pv(&[7.0]));
        let xs = [pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[1.0, 1.0]), pv(&[2.0, 2.0])];
        assert_eq!(mean_vectors(&xs).unwrap(), pv(&[1.0, 1.0]));
    }

    #[test]
    fn mean_of_empty_is_usage_error() {
        assert!(matches!(mean_vectors(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn rng_streams_reproduce_first_million_draws() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_streams_differ_by_id() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let same = (0..1000).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
        // weak independence check on uniforms
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let n = 100_000;
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n).map(|_| (a.uniform() - 0.5, b.uniform() - 0.5)).unzip();
        let corr = dot(&xs, &ys) / (sq_l2_norm(&xs).sqrt() * sq_l2_norm(&ys).sqrt());
        assert!(corr.abs() < 0.02, "corr = {corr}");
    }

    #[test]
    fn spread_handles_even_and_nan() {
        let s = Spread::of(&[4.0, f64::NAN, 1.0, 3.0, 2.0]);
        assert_eq!((s.min, s.median, s.max), (1.0, 2.5, 4.0));
        assert!(Spread::of(&[]).median.is_nan());
    }

    proptest! {
        #[test]
        fn mean_of_copies_is_bit_exact(v in prop::collection::vec(-1e6f64..1e6, 1..8), n in 1usize..17) {
            let x = pv(&v);
            let xs = vec![x.clone(); n];
            let m = mean_vectors(&xs).unwrap();
            for (a, b) in m.iter().zip(x.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn mean_is_repeatable(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..10)) {
            let xs: Vec<ParamVector> = rows.iter().map(|r| pv(r)).collect();
            let a = mean_vectors(&xs).unwrap();
            let b = mean_vectors(&xs).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
