//! Feature axes: fitting, similarity, locking, and orthogonalization.
//!
//! An [`AxisRegistry`] holds the raw fitted directions plus, for the current
//! lock set, an *effective* direction per unlocked axis. Effective
//! directions are the raw ones with their projection onto the span of the
//! locked axes removed, so moving along them leaves every locked projection
//! unchanged. Locked axes are orthonormalized in the order they were
//! acquired; an unlocked axis that falls inside the locked span is flagged
//! degenerate rather than dropped.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{dot, LatentVector};

/// Residual norm below which a vector counts as lying inside a span.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

/// Absolute cosine similarity above which smart locks pull a neighbour in.
pub const SMART_LOCK_THRESHOLD: f64 = 0.5;

pub const AXIS_FILE_VERSION: u32 = 1;

/// A named unit direction in latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAxis {
    name: String,
    direction: LatentVector,
    fitted_from: usize,
}

impl FeatureAxis {
    /// Normalizes `direction` to unit length. Fails on a (near-)zero vector.
    pub fn new(name: impl Into<String>, direction: LatentVector, fitted_from: usize) -> Result<Self> {
        let name = name.into();
        let norm = direction.norm();
        if norm < DEGENERACY_TOLERANCE {
            return Err(Error::DegenerateAxis(name));
        }
        let unit = direction.as_slice().iter().map(|x| x / norm).collect();
        Ok(Self {
            name,
            direction: LatentVector::new(unit)?,
            fitted_from,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn direction(&self) -> &LatentVector {
        &self.direction
    }

    pub fn fitted_from(&self) -> usize {
        self.fitted_from
    }

    pub fn dim(&self) -> usize {
        self.direction.dim()
    }
}

/// A latent paired with a binary attribute label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub latent: LatentVector,
    pub label: bool,
}

/// Fits an axis as the normalized difference between the class means,
/// oriented toward the positive class.
pub fn fit_axis(name: impl Into<String>, samples: &[LabeledSample]) -> Result<FeatureAxis> {
    let name = name.into();
    let dim = samples.first().ok_or(Error::InsufficientClasses)?.latent.dim();
    let mut pos = vec![0.0; dim];
    let mut neg = vec![0.0; dim];
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for s in samples {
        s.latent.check_dim(dim)?;
        let (acc, n) = if s.label {
            (&mut pos, &mut n_pos)
        } else {
            (&mut neg, &mut n_neg)
        };
        for (a, x) in acc.iter_mut().zip(s.latent.as_slice()) {
            *a += x;
        }
        *n += 1;
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientClasses);
    }
    let diff: Vec<f64> = pos
        .iter()
        .zip(&neg)
        .map(|(p, q)| p / n_pos as f64 - q / n_neg as f64)
        .collect();
    FeatureAxis::new(name, LatentVector::new(diff)?, samples.len())
}

pub fn cosine_similarity(a: &FeatureAxis, b: &FeatureAxis) -> Result<f64> {
    a.direction.dot(&b.direction)
}

/// Orthonormalizes `directions` in order (modified Gram-Schmidt with one
/// reorthogonalization pass), dropping any whose residual falls below
/// [`DEGENERACY_TOLERANCE`].
pub fn orthonormal_basis<'a, I>(directions: I) -> Vec<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for d in directions {
        if let Some(q) = residual_direction(d, &basis) {
            basis.push(q);
        }
    }
    basis
}

/// Removes the projection of `v` onto the orthonormal `basis` and
/// renormalizes; `None` if the residual is degenerate.
fn residual_direction(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let scale = dot(v, v).sqrt();
    let mut r = v.to_vec();
    for pass in 0..2 {
        for q in basis {
            let c = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
        if pass == 0 && dot(&r, &r).sqrt() < DEGENERACY_TOLERANCE * scale {
            return None;
        }
    }
    let norm = dot(&r, &r).sqrt();
    r.iter_mut().for_each(|x| *x /= norm);
    Some(r)
}

/// Returns `axis` with its projection onto the span of `locked` removed,
/// renormalized.
pub fn orthogonalize(axis: &FeatureAxis, locked: &[FeatureAxis]) -> Result<FeatureAxis> {
    for l in locked {
        l.direction.check_dim(axis.dim())?;
    }
    if locked.is_empty() {
        return Ok(axis.clone());
    }
    let basis = orthonormal_basis(locked.iter().map(|l| l.direction.as_slice()));
    let r = residual_direction(axis.direction.as_slice(), &basis)
        .ok_or_else(|| Error::DegenerateAxis(axis.name.clone()))?;
    Ok(FeatureAxis {
        name: axis.name.clone(),
        direction: LatentVector::new(r)?,
        fitted_from: axis.fitted_from,
    })
}

/// Effective state of an unlocked axis under the current locks.
#[derive(Debug, Clone, PartialEq)]
pub enum Effective {
    Available(Vec<f64>),
    Degenerate,
}

/// Fitted axes plus lock state and cached orthogonalized directions.
#[derive(Debug, Clone)]
pub struct AxisRegistry {
    dim: usize,
    axes: IndexMap<String, FeatureAxis>,
    similarity: Vec<Vec<f64>>,
    locked: Vec<String>,
    effective: IndexMap<String, Effective>,
}

impl AxisRegistry {
    pub fn new(dim: usize, axes: Vec<FeatureAxis>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension);
        }
        let mut map = IndexMap::with_capacity(axes.len());
        for axis in axes {
            axis.direction.check_dim(dim)?;
            if map.contains_key(&axis.name) {
                return Err(Error::Configuration(format!(
                    "duplicate axis name '{}'",
                    axis.name
                )));
            }
            map.insert(axis.name.clone(), axis);
        }
        let list: Vec<&FeatureAxis> = map.values().collect();
        let n = list.len();
        let mut similarity = vec![vec![0.0; n]; n];
        for i in 0..n {
            similarity[i][i] = 1.0;
            for j in (i + 1)..n {
                let s = dot(list[i].direction.as_slice(), list[j].direction.as_slice());
                similarity[i][j] = s;
                similarity[j][i] = s;
            }
        }
        let mut registry = Self {
            dim,
            axes: map,
            similarity,
            locked: Vec::new(),
            effective: IndexMap::new(),
        };
        registry.recompute_effective();
        Ok(registry)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn axes(&self) -> impl Iterator<Item = &FeatureAxis> {
        self.axes.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.axes.keys().map(String::as_str)
    }

    pub fn axis(&self, name: &str) -> Result<&FeatureAxis> {
        self.axes
            .get(name)
            .ok_or_else(|| Error::UnknownAxis(name.to_owned()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.axes.contains_key(name)
    }

    /// Pairwise cosine similarity matrix in registry order.
    pub fn similarity_matrix(&self) -> &[Vec<f64>] {
        &self.similarity
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let i = self.index_of(a)?;
        let j = self.index_of(b)?;
        Ok(self.similarity[i][j])
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.axes
            .get_index_of(name)
            .ok_or_else(|| Error::UnknownAxis(name.to_owned()))
    }

    /// Locked axis names in acquisition order.
    pub fn locked(&self) -> &[String] {
        &self.locked
    }

    pub fn is_locked(&self, name: &str) -> bool {
        self.locked.iter().any(|l| l == name)
    }

    /// Replaces the lock set. Axes already locked keep their acquisition
    /// position; newly locked ones are appended in the order given.
    pub fn set_locks<S: AsRef<str>>(&self, names: &[S]) -> Result<AxisRegistry> {
        let mut wanted: Vec<&str> = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            self.index_of(n)?;
            if !wanted.contains(&n) {
                wanted.push(n);
            }
        }
        let mut order: Vec<String> = self
            .locked
            .iter()
            .filter(|l| wanted.contains(&l.as_str()))
            .cloned()
            .collect();
        for n in wanted {
            if !order.iter().any(|l| l == n) {
                order.push(n.to_owned());
            }
        }
        let mut next = self.clone();
        next.locked = order;
        next.recompute_effective();
        Ok(next)
    }

    fn recompute_effective(&mut self) {
        let basis = orthonormal_basis(
            self.locked
                .iter()
                .map(|n| self.axes[n.as_str()].direction.as_slice()),
        );
        let locked: HashSet<&str> = self.locked.iter().map(String::as_str).collect();
        self.effective = self
            .axes
            .iter()
            .filter(|(name, _)| !locked.contains(name.as_str()))
            .map(|(name, axis)| {
                let eff = if basis.is_empty() {
                    Effective::Available(axis.direction.as_slice().to_vec())
                } else {
                    match residual_direction(axis.direction.as_slice(), &basis) {
                        Some(r) => Effective::Available(r),
                        None => Effective::Degenerate,
                    }
                };
                (name.clone(), eff)
            })
            .collect();
    }

    /// Effective direction of an unlocked, non-degenerate axis.
    pub fn effective(&self, name: &str) -> Result<&[f64]> {
        self.index_of(name)?;
        match self.effective.get(name) {
            None => Err(Error::LockedFeature(name.to_owned())),
            Some(Effective::Degenerate) => Err(Error::FeatureUnavailable {
                feature: name.to_owned(),
                locks: self.locked.clone(),
            }),
            Some(Effective::Available(d)) => Ok(d),
        }
    }

    /// Effective state of every unlocked axis, in registry order.
    pub fn effective_states(&self) -> impl Iterator<Item = (&str, &Effective)> {
        self.effective.iter().map(|(n, e)| (n.as_str(), e))
    }

    /// Unlocked, non-degenerate axes with their effective directions.
    pub fn available(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.effective.iter().filter_map(|(n, e)| match e {
            Effective::Available(d) => Some((n.as_str(), d.as_slice())),
            Effective::Degenerate => None,
        })
    }

    pub fn is_degenerate(&self, name: &str) -> bool {
        matches!(self.effective.get(name), Some(Effective::Degenerate))
    }

    /// Count of unlocked axes, degenerate ones included.
    pub fn unlocked_count(&self) -> usize {
        self.effective.len()
    }

    /// The feature plus every axis whose absolute similarity to it exceeds
    /// [`SMART_LOCK_THRESHOLD`]. Direct neighbours only, in registry order.
    pub fn smart_lock_set(&self, feature: &str) -> Result<Vec<String>> {
        let i = self.index_of(feature)?;
        Ok(self
            .axes
            .keys()
            .enumerate()
            .filter(|&(j, _)| j == i || self.similarity[i][j].abs() > SMART_LOCK_THRESHOLD)
            .map(|(_, n)| n.clone())
            .collect())
    }

    pub fn to_file(&self) -> AxisFile {
        AxisFile {
            version: AXIS_FILE_VERSION,
            dim: self.dim,
            axes: self
                .axes
                .values()
                .map(|a| AxisRecord {
                    name: a.name.clone(),
                    direction: a.direction.as_slice().to_vec(),
                    fitted_from: a.fitted_from,
                })
                .collect(),
        }
    }

    /// Builds an unlocked registry from a parsed axis file.
    pub fn from_file(file: &AxisFile) -> Result<Self> {
        if file.version != AXIS_FILE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: file.version,
                supported: AXIS_FILE_VERSION,
            });
        }
        let axes = file
            .axes
            .iter()
            .map(|rec| {
                let norm = dot(&rec.direction, &rec.direction).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::Validation(format!(
                        "axis '{}' has norm {norm}, expected unit length",
                        rec.name
                    )));
                }
                let direction = LatentVector::new(rec.direction.clone())?;
                if (norm - 1.0).abs() <= 1e-12 {
                    // Already unit up to rounding; keep the stored bits.
                    Ok(FeatureAxis {
                        name: rec.name.clone(),
                        direction,
                        fitted_from: rec.fitted_from,
                    })
                } else {
                    FeatureAxis::new(rec.name.clone(), direction, rec.fitted_from)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        AxisRegistry::new(file.dim, axes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: AxisFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Versioned on-disk axis set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFile {
    pub version: u32,
    pub dim: usize,
    pub axes: Vec<AxisRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRecord {
    pub name: String,
    pub direction: Vec<f64>,
    #[serde(default)]
    pub fitted_from: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{sample_standard, RandomStream};
    use proptest::prelude::*;

    fn axis(name: &str, d: &[f64]) -> FeatureAxis {
        FeatureAxis::new(name, LatentVector::new(d.to_vec()).unwrap(), 0).unwrap()
    }

    #[test]
    fn two_point_fit() {
        let samples = vec![
            LabeledSample {
                latent: LatentVector::new(vec![1.0, 0.0]).unwrap(),
                label: true,
            },
            LabeledSample {
                latent: LatentVector::new(vec![-1.0, 0.0]).unwrap(),
                label: false,
            },
        ];
        let a = fit_axis("x", &samples).unwrap();
        assert_eq!(a.direction().as_slice(), &[1.0, 0.0]);
        assert_eq!(a.fitted_from(), 2);
    }

    #[test]
    fn single_class_is_rejected() {
        let samples = vec![LabeledSample {
            latent: LatentVector::new(vec![1.0, 0.0]).unwrap(),
            label: true,
        }];
        assert!(matches!(fit_axis("x", &samples), Err(Error::InsufficientClasses)));
        assert!(matches!(fit_axis("x", &[]), Err(Error::InsufficientClasses)));
    }

    #[test]
    fn fit_recovers_coordinate_axis() {
        // Label iff component 0 is positive; the mean-difference probe's
        // expected cosine at n samples in d dimensions is
        // sqrt(2n/(πd)) / sqrt(1 + 2n/(πd)) ≈ 0.97 for n=2000, d=64.
        let mut rng = RandomStream::new(5);
        let samples: Vec<_> = (0..2000)
            .map(|_| {
                let latent = sample_standard(&mut rng, 64).unwrap();
                let label = latent.as_slice()[0] > 0.0;
                LabeledSample { latent, label }
            })
            .collect();
        let a = fit_axis("e0", &samples).unwrap();
        assert!(a.direction().as_slice()[0].abs() >= 0.95);
        assert!(a.direction().as_slice()[0] > 0.0);
    }

    #[test]
    fn fit_is_invariant_to_duplication() {
        let mut rng = RandomStream::new(6);
        let samples: Vec<_> = (0..300)
            .map(|_| {
                let latent = sample_standard(&mut rng, 16).unwrap();
                let label = latent.as_slice()[3] - latent.as_slice()[1] > 0.2;
                LabeledSample { latent, label }
            })
            .collect();
        let mut doubled = samples.clone();
        doubled.extend(samples.iter().cloned());
        let a = fit_axis("a", &samples).unwrap();
        let b = fit_axis("a", &doubled).unwrap();
        for (x, y) in a.direction().as_slice().iter().zip(b.direction().as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_examples() {
        let a = axis("a", &[1.0, 0.0]);
        let b = axis("b", &[0.0, 1.0]);
        let c = axis("c", &[0.6, 0.8]);
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        assert!((cosine_similarity(&a, &c).unwrap() - 0.6).abs() < 1e-15);
        assert!(cosine_similarity(&a, &axis("d", &[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn orthogonalize_examples() {
        let a = axis("a", &[1.0, 0.0]);
        assert_eq!(orthogonalize(&a, &[]).unwrap(), a);
        let got = orthogonalize(&a, &[axis("l", &[0.6, 0.8])]).unwrap();
        let d = got.direction().as_slice();
        assert!((d[0] - 0.8).abs() < 1e-12 && (d[1] + 0.6).abs() < 1e-12, "{d:?}");
        assert!(matches!(
            orthogonalize(&a, std::slice::from_ref(&a)),
            Err(Error::DegenerateAxis(_))
        ));
    }

    #[test]
    fn orthogonalize_uses_span_of_correlated_locks() {
        // Two correlated locked axes span the xy-plane; z survives intact.
        let locked = [axis("p", &[1.0, 0.0, 0.0]), axis("q", &[0.9, 0.1, 0.0])];
        let a = axis("a", &[0.3, 0.4, 0.5]);
        let got = orthogonalize(&a, &locked).unwrap();
        let d = got.direction().as_slice();
        assert!(d[0].abs() < 1e-12 && d[1].abs() < 1e-12);
        assert!((d[2] - 1.0).abs() < 1e-12);
    }

    fn demo_registry() -> AxisRegistry {
        AxisRegistry::new(
            3,
            vec![
                axis("a", &[1.0, 0.0, 0.0]),
                axis("b", &[0.7, (1.0f64 - 0.49).sqrt(), 0.0]),
                axis("c", &[0.1, 0.0, (1.0f64 - 0.01).sqrt()]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn smart_lock_examples() {
        let r = demo_registry();
        assert!((r.similarity("a", "b").unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(r.smart_lock_set("a").unwrap(), vec!["a", "b"]);
        assert_eq!(r.smart_lock_set("c").unwrap(), vec!["c"]);
        assert!(r.smart_lock_set("zzz").is_err());

        let neg = AxisRegistry::new(
            2,
            vec![axis("a", &[1.0, 0.0]), axis("b", &[-0.6, 0.8])],
        )
        .unwrap();
        assert_eq!(neg.smart_lock_set("a").unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn set_locks_examples() {
        let r = demo_registry();
        for (name, dir) in r.available() {
            assert_eq!(dir, r.axis(name).unwrap().direction().as_slice());
        }
        let all = r.set_locks(&["a", "b", "c"]).unwrap();
        assert_eq!(all.available().count(), 0);
        assert_eq!(all.unlocked_count(), 0);
        let one = r.set_locks(&["a"]).unwrap();
        let b = one.effective("b").unwrap();
        assert!(b[0].abs() <= 1e-12);
        assert!(matches!(one.effective("a"), Err(Error::LockedFeature(_))));
        assert!(r.set_locks(&["nope"]).is_err());
    }

    #[test]
    fn degenerate_axes_are_flagged() {
        let r = AxisRegistry::new(
            2,
            vec![
                axis("x", &[1.0, 0.0]),
                axis("y", &[0.0, 1.0]),
                axis("xy", &[1.0, 1.0]),
            ],
        )
        .unwrap();
        let locked = r.set_locks(&["x", "y"]).unwrap();
        assert!(locked.is_degenerate("xy"));
        assert_eq!(locked.unlocked_count(), 1);
        assert!(matches!(
            locked.effective("xy"),
            Err(Error::FeatureUnavailable { .. })
        ));
    }

    #[test]
    fn lock_order_follows_acquisition() {
        let r = demo_registry();
        let r = r.set_locks(&["c"]).unwrap();
        let r = r.set_locks(&["a", "c"]).unwrap();
        assert_eq!(r.locked(), &["c".to_owned(), "a".to_owned()]);
    }

    #[test]
    fn axis_file_round_trip_and_renormalization() {
        let r = demo_registry();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("axes.json");
        r.save(&path).unwrap();
        let back = AxisRegistry::load(&path).unwrap();
        assert_eq!(back.names().collect::<Vec<_>>(), vec!["a", "b", "c"]);

        let mut file = r.to_file();
        file.axes[0].direction = vec![1.0 + 5e-7, 0.0, 0.0];
        let fixed = AxisRegistry::from_file(&file).unwrap();
        assert_eq!(fixed.axis("a").unwrap().direction().as_slice()[0], 1.0);
        file.axes[0].direction = vec![2.0, 0.0, 0.0];
        assert!(AxisRegistry::from_file(&file).is_err());
        file.version = 9;
        assert!(matches!(
            AxisRegistry::from_file(&file),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    fn random_registry(seed: u64, n_axes: usize, dim: usize) -> AxisRegistry {
        let mut rng = RandomStream::new(seed);
        let axes = (0..n_axes)
            .map(|i| {
                let v = sample_standard(&mut rng, dim).unwrap();
                FeatureAxis::new(format!("f{i}"), v, 0).unwrap()
            })
            .collect();
        AxisRegistry::new(dim, axes).unwrap()
    }

    proptest! {
        #[test]
        fn effective_axes_are_unit_and_orthogonal_to_locks(
            seed in any::<u64>(),
            mask in 0u32..(1 << 6),
        ) {
            let r = random_registry(seed, 6, 12);
            let names: Vec<String> = (0..6).filter(|i| mask & (1 << i) != 0).map(|i| format!("f{i}")).collect();
            let locked = r.set_locks(&names).unwrap();
            for (_, d) in locked.available() {
                prop_assert!((dot(d, d).sqrt() - 1.0).abs() <= 1e-9);
                for l in &names {
                    let ld = locked.axis(l).unwrap().direction().as_slice();
                    prop_assert!(dot(d, ld).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn smart_lock_relation_is_symmetric(seed in any::<u64>()) {
            let r = random_registry(seed, 6, 3);
            let names: Vec<String> = r.names().map(str::to_owned).collect();
            for a in &names {
                let sa = r.smart_lock_set(a).unwrap();
                for b in &names {
                    if a == b { continue; }
                    let sb = r.smart_lock_set(b).unwrap();
                    prop_assert_eq!(sa.contains(b), sb.contains(a));
                }
            }
        }
    }
}
