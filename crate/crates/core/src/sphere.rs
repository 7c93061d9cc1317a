//! Geometry of the unit hypersphere: normalization, the rescaled cosine
//! distance, class prototypes, the self-paced threshold and open-set
//! nearest-prototype classification.
//!
//! Everything here is a pure function over immutable inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector counts as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// A vector of unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Project `v` onto the unit sphere.
    pub fn normalize(v: &[f64]) -> Result<UnitVector> {
        let norm = l2_norm(v);
        if norm < ZERO_NORM_EPS {
            return Err(Error::ZeroVector);
        }
        Ok(UnitVector(v.iter().map(|x| x / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Dot product; for unit vectors this is the cosine similarity.
    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine distance rescaled linearly to [0, 1]: (1 - cos) / 2.
///
/// Antipodal vectors are at distance 1, identical ones at 0.
pub fn distance(a: &UnitVector, b: &UnitVector) -> f64 {
    let cos = a.dot(b).clamp(-1.0, 1.0);
    (1.0 - cos) / 2.0
}

/// Normalized per-class mean embeddings, one per known class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeSet {
    classes: Vec<usize>,
    prototypes: Vec<UnitVector>,
    class_counts: Vec<usize>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class indices in ascending order.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn get(&self, class: usize) -> Option<&UnitVector> {
        self.classes
            .binary_search(&class)
            .ok()
            .map(|i| &self.prototypes[i])
    }

    pub fn count(&self, class: usize) -> Option<usize> {
        self.classes
            .binary_search(&class)
            .ok()
            .map(|i| self.class_counts[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &UnitVector)> {
        self.classes.iter().copied().zip(self.prototypes.iter())
    }
}

/// Normalized mean embedding per class present in the input.
pub fn compute_prototypes(embeddings: &[(UnitVector, usize)]) -> Result<PrototypeSet> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut classes: Vec<usize> = embeddings.iter().map(|(_, y)| *y).collect();
    classes.sort_unstable();
    classes.dedup();

    let dim = embeddings[0].0.dim();
    let mut prototypes = Vec::with_capacity(classes.len());
    let mut class_counts = Vec::with_capacity(classes.len());
    for &y in &classes {
        let mut mean = vec![0.0; dim];
        let mut n = 0usize;
        for (z, label) in embeddings {
            if *label == y {
                for (m, v) in mean.iter_mut().zip(z.as_slice()) {
                    *m += v;
                }
                n += 1;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        prototypes.push(UnitVector::normalize(&mean)?);
        class_counts.push(n);
    }
    Ok(PrototypeSet {
        classes,
        prototypes,
        class_counts,
    })
}

/// Class sparsity: mean distance from each prototype to its nearest *other*
/// prototype.
pub fn class_sparsity(p: &PrototypeSet) -> Result<f64> {
    let n = p.len();
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut min_d = f64::INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = distance(&p.prototypes[i], &p.prototypes[j]);
            if d < min_d {
                min_d = d;
            }
        }
        total += min_d;
    }
    Ok(total / n as f64)
}

/// Class compactness: mean over classes of the mean member-to-prototype
/// distance.
pub fn class_compactness(embeddings: &[(UnitVector, usize)], p: &PrototypeSet) -> Result<f64> {
    let mut sums = vec![0.0; p.len()];
    let mut counts = vec![0usize; p.len()];
    for (z, y) in embeddings {
        let idx = p
            .classes
            .binary_search(y)
            .map_err(|_| Error::MissingPrototype(*y))?;
        sums[idx] += distance(z, &p.prototypes[idx]);
        counts[idx] += 1;
    }
    let mut total = 0.0;
    let mut classes_seen = 0usize;
    for (s, c) in sums.iter().zip(&counts) {
        if *c > 0 {
            total += s / *c as f64;
            classes_seen += 1;
        }
    }
    if classes_seen == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(total / classes_seen as f64)
}

/// Floor applied to compactness before the log in the threshold formula.
pub const COMPACTNESS_EPS: f64 = 1e-6;

/// Self-paced rejection threshold alpha = phi * (ln(theta / 2 phi) + 1),
/// with phi floored at 1e-6 and the result clamped to [0, 1].
pub fn self_paced_threshold(theta: f64, phi: f64) -> f64 {
    let phi = phi.max(COMPACTNESS_EPS);
    let alpha = phi * ((theta / (2.0 * phi)).ln() + 1.0);
    alpha.clamp(0.0, 1.0)
}

/// Threshold bookkeeping recorded at each break-point and at final eval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdState {
    pub theta: f64,
    pub phi: f64,
    pub alpha: f64,
    pub alpha_m: f64,
    pub alpha_c: f64,
}

impl ThresholdState {
    pub fn new(theta: f64, phi: f64, alpha_m: f64) -> ThresholdState {
        let alpha = self_paced_threshold(theta, phi);
        ThresholdState {
            theta,
            phi,
            alpha,
            alpha_m,
            alpha_c: alpha_m * alpha,
        }
    }
}

/// Outcome of nearest-prototype classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictedLabel {
    Known(usize),
    Unknown,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Prediction {
    pub label: PredictedLabel,
    pub min_distance: f64,
    pub nearest_class: usize,
}

/// Nearest-prototype classification with rejection: a sample at distance
/// >= alpha from every prototype is unknown. Ties go to the lowest class
/// index.
pub fn classify(z: &UnitVector, p: &PrototypeSet, alpha: f64) -> Result<Prediction> {
    if p.is_empty() {
        return Err(Error::EmptyPrototypes);
    }
    let mut min_distance = f64::INFINITY;
    let mut nearest_class = 0usize;
    for (y, h) in p.iter() {
        let d = distance(z, h);
        if d < min_distance {
            min_distance = d;
            nearest_class = y;
        }
    }
    let label = if min_distance < alpha {
        PredictedLabel::Known(nearest_class)
    } else {
        PredictedLabel::Unknown
    };
    Ok(Prediction {
        label,
        min_distance,
        nearest_class,
    })
}
