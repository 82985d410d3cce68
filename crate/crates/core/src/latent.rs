//! Latent-space arithmetic and the seeded randomness every stochastic
//! operation draws from.
//!
//! A [`LatentVector`] is the genotype fed to the generator. All values are
//! immutable once built; the combinators here return fresh vectors.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default latent width, matching the input of the common pre-trained
/// progressive-growing face generators.
pub const DEFAULT_DIM: usize = 512;

/// A point in the generator's input space.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    /// Builds a latent, rejecting empty or non-finite input.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDimension);
        }
        if let Some(index) = components.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension);
        }
        Ok(Self(vec![0.0; dim]))
    }

    /// Internal constructor for results of arithmetic on already-valid
    /// vectors.
    pub(crate) fn from_raw(components: Vec<f64>) -> Self {
        debug_assert!(!components.is_empty());
        Self(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &LatentVector) -> Result<f64> {
        other.check_dim(self.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &LatentVector) -> Result<f64> {
        other.check_dim(self.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// `self + scale * direction`.
    pub fn add_scaled(&self, direction: &[f64], scale: f64) -> Result<LatentVector> {
        if direction.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: direction.len(),
            });
        }
        let out: Vec<f64> = self
            .0
            .iter()
            .zip(direction)
            .map(|(x, d)| x + scale * d)
            .collect();
        LatentVector::new(out)
    }

    /// Componentwise difference `self - other`.
    pub fn sub(&self, other: &LatentVector) -> Result<Vec<f64>> {
        other.check_dim(self.dim())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Little-endian bytes of every component, used for content addressing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.0.iter().flat_map(|c| c.to_le_bytes()).collect()
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LatentVector::new(v)
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(v: LatentVector) -> Self {
        v.0
    }
}

impl fmt::Debug for LatentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() <= 8 {
            f.debug_tuple("LatentVector").field(&self.0).finish()
        } else {
            write!(
                f,
                "LatentVector(dim={}, norm={:.4}, head={:?})",
                self.0.len(),
                self.norm(),
                &self.0[..4]
            )
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Serializable snapshot of a [`RandomStream`]: the seed plus the number of
/// 32-bit words consumed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomState {
    pub seed: u64,
    pub position: u128,
}

/// Seeded, platform-independent randomness. One owner at a time.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn from_state(state: RandomState) -> Self {
        let mut stream = Self::new(state.seed);
        stream.rng.set_word_pos(state.position);
        stream
    }

    pub fn state(&self) -> RandomState {
        RandomState {
            seed: self.seed,
            position: self.rng.get_word_pos(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words drawn since seeding.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random()
    }

    /// `+1.0` or `-1.0` with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }

    /// Fisher-Yates shuffle of `items` in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Draws a latent with independent standard-normal components.
pub fn sample_standard(rng: &mut RandomStream, dim: usize) -> Result<LatentVector> {
    if dim == 0 {
        return Err(Error::InvalidDimension);
    }
    Ok(LatentVector::from_raw(
        (0..dim).map(|_| rng.standard_normal()).collect(),
    ))
}

/// Componentwise arithmetic mean, summed left to right.
pub fn average(vectors: &[LatentVector]) -> Result<LatentVector> {
    let first = vectors.first().ok_or(Error::EmptySelection)?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        v.check_dim(dim)?;
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    LatentVector::new(acc)
}

/// `Σ wᵢ vᵢ / Σ wᵢ` with nonnegative weights.
pub fn weighted_average(vectors: &[LatentVector], weights: &[f64]) -> Result<LatentVector> {
    if vectors.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: vectors.len(),
            right: weights.len(),
        });
    }
    let first = vectors.first().ok_or(Error::EmptySelection)?;
    if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::OutOfRange {
            what: "weight",
            value: w,
        });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for (v, w) in vectors.iter().zip(weights) {
        v.check_dim(dim)?;
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += w * x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    LatentVector::new(acc)
}

/// Linear interpolation `(1 - t)·a + t·b`; endpoints are exact copies.
pub fn interpolate(a: &LatentVector, b: &LatentVector, t: f64) -> Result<LatentVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange {
            what: "interpolation parameter",
            value: t,
        });
    }
    b.check_dim(a.dim())?;
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    Ok(LatentVector::from_raw(
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| (1.0 - t) * x + t * y)
            .collect(),
    ))
}

/// Perturbs every component by an independent `N(0, sigma²)` draw.
pub fn add_gaussian_noise(
    v: &LatentVector,
    sigma: f64,
    rng: &mut RandomStream,
) -> Result<LatentVector> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::OutOfRange {
            what: "noise sigma",
            value: sigma,
        });
    }
    LatentVector::new(
        v.0.iter()
            .map(|x| x + sigma * rng.standard_normal())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(v: &[f64]) -> LatentVector {
        LatentVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sample_is_deterministic() {
        let a = sample_standard(&mut RandomStream::new(7), 512).unwrap();
        let b = sample_standard(&mut RandomStream::new(7), 512).unwrap();
        assert_eq!(a, b);
        let c = sample_standard(&mut RandomStream::new(8), 512).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_shape_and_errors() {
        let v = sample_standard(&mut RandomStream::new(1), 4).unwrap();
        assert_eq!(v.dim(), 4);
        assert!(v.as_slice().iter().all(|c| c.is_finite()));
        assert!(matches!(
            sample_standard(&mut RandomStream::new(1), 0),
            Err(Error::InvalidDimension)
        ));
    }

    #[test]
    fn sample_moments() {
        // 100,000 draws of dim 512, pooled per component.
        let mut rng = RandomStream::new(2024);
        let dim = 512;
        let n = 100_000;
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for _ in 0..n {
            let v = sample_standard(&mut rng, dim).unwrap();
            for (i, x) in v.as_slice().iter().enumerate() {
                sum[i] += x;
                sum_sq[i] += x * x;
            }
        }
        for i in 0..dim {
            let mean = sum[i] / n as f64;
            let var = sum_sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "component {i} mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "component {i} var {var}");
        }
    }

    #[test]
    fn average_examples() {
        let got = average(&[lv(&[1.0, 1.0, 1.0]), lv(&[3.0, 5.0, 7.0])]).unwrap();
        assert_eq!(got, lv(&[2.0, 3.0, 4.0]));
        let v = lv(&[0.3, -1.7]);
        assert_eq!(average(std::slice::from_ref(&v)).unwrap(), v);
        assert!(matches!(average(&[]), Err(Error::EmptySelection)));
        assert!(matches!(
            average(&[lv(&[1.0]), lv(&[1.0, 2.0])]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weighted_average_examples() {
        let u = lv(&[0.25, -3.0]);
        assert_eq!(weighted_average(&[u.clone(), u.clone()], &[1.0, 1.0]).unwrap(), u);
        let got = weighted_average(&[lv(&[0.0, 0.0]), lv(&[3.0, 0.0])], &[2.0, 1.0]).unwrap();
        assert_eq!(got, lv(&[1.0, 0.0]));
        assert!(matches!(
            weighted_average(std::slice::from_ref(&u), &[0.0]),
            Err(Error::DegenerateWeights)
        ));
        assert!(matches!(
            weighted_average(std::slice::from_ref(&u), &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(weighted_average(&[u], &[-1.0]).is_err());
    }

    #[test]
    fn interpolate_examples() {
        let a = lv(&[0.1, 0.2, 0.3]);
        let b = lv(&[-4.0, 5.5, 1e-3]);
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        let zero = LatentVector::zeros(3).unwrap();
        assert_eq!(
            interpolate(&zero, &b, 0.5).unwrap(),
            lv(&[-2.0, 2.75, 5e-4])
        );
        assert!(interpolate(&a, &b, 1.5).is_err());
        assert!(interpolate(&a, &b, -0.1).is_err());
    }

    #[test]
    fn noise_limit_and_determinism() {
        let v = sample_standard(&mut RandomStream::new(3), 64).unwrap();
        let tiny = add_gaussian_noise(&v, 1e-12, &mut RandomStream::new(4)).unwrap();
        let max_delta = v
            .as_slice()
            .iter()
            .zip(tiny.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_delta < 1e-9);
        let a = add_gaussian_noise(&v, 0.4, &mut RandomStream::new(9)).unwrap();
        let b = add_gaussian_noise(&v, 0.4, &mut RandomStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(add_gaussian_noise(&v, 0.0, &mut RandomStream::new(9)).is_err());
        assert!(add_gaussian_noise(&v, -1.0, &mut RandomStream::new(9)).is_err());
    }

    #[test]
    fn noise_std_matches_sigma() {
        let v = LatentVector::zeros(1).unwrap();
        let mut rng = RandomStream::new(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| add_gaussian_noise(&v, 0.4, &mut rng).unwrap().as_slice()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.4).abs() <= 0.4 * 0.02, "std {std}");
    }

    #[test]
    fn stream_state_round_trips() {
        let mut rng = RandomStream::new(77);
        for _ in 0..13 {
            rng.standard_normal();
        }
        let state = rng.state();
        let mut resumed = RandomStream::from_state(state);
        for _ in 0..50 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            LatentVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(serde_json::from_str::<LatentVector>("[]").is_err());
    }

    fn vectors(dim: usize, count: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), 1..=count)
    }

    proptest! {
        #[test]
        fn average_is_permutation_invariant(vs in vectors(5, 6), seed in any::<u64>()) {
            let latents: Vec<_> = vs.into_iter().map(|v| lv(&v)).collect();
            let mut shuffled = latents.clone();
            RandomStream::new(seed).shuffle(&mut shuffled);
            let a = average(&latents).unwrap();
            let b = average(&shuffled).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn uniform_weights_reduce_to_mean(vs in vectors(4, 5)) {
            let latents: Vec<_> = vs.into_iter().map(|v| lv(&v)).collect();
            let w = vec![1.0; latents.len()];
            let a = average(&latents).unwrap();
            let b = weighted_average(&latents, &w).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn interpolation_is_symmetric(
            a in prop::collection::vec(-10.0f64..10.0, 3),
            b in prop::collection::vec(-10.0f64..10.0, 3),
            t in 0.0f64..=1.0,
        ) {
            let (a, b) = (lv(&a), lv(&b));
            let x = interpolate(&a, &b, t).unwrap();
            let y = interpolate(&b, &a, 1.0 - t).unwrap();
            for (p, q) in x.as_slice().iter().zip(y.as_slice()) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
    }
}
