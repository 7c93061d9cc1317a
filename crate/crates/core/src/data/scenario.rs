//! Synthetic multi-domain scenario generation: class means on a latent unit
//! sphere, Gaussian spread per sample, and a per-domain affine style map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Label, Sample};
use crate::error::{Error, Result};
use crate::sphere::UnitVector;

/// Per-dimension affine style map: x -> scale .* x + shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl StyleMap {
    pub fn identity(dim: usize) -> StyleMap {
        StyleMap {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.scale)
            .zip(&self.shift)
            .map(|((x, a), b)| a * x + b)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_sources: usize,
    pub known_classes: usize,
    pub target_private: usize,
    pub source_private: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub cluster_spread: f64,
    /// Per-dimension style scale drawn uniformly from this range.
    pub style_scale_range: (f64, f64),
    /// Per-dimension style shift drawn from N(0, style_shift_std^2).
    pub style_shift_std: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> ScenarioConfig {
        ScenarioConfig {
            num_sources: 3,
            known_classes: 5,
            target_private: 3,
            source_private: 0,
            samples_per_class: 60,
            feature_dim: 16,
            cluster_spread: 0.08,
            style_scale_range: (0.7, 1.3),
            style_shift_std: 0.2,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sources == 0 {
            return Err(Error::InvalidConfig("need at least one source domain".into()));
        }
        if self.known_classes == 0 {
            return Err(Error::InvalidConfig("need at least one known class".into()));
        }
        if self.source_private >= self.known_classes {
            return Err(Error::InvalidConfig(
                "source_private must leave at least one shared class".into(),
            ));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("samples_per_class must be > 0".into()));
        }
        if self.feature_dim < 2 {
            return Err(Error::InvalidConfig("feature_dim must be >= 2".into()));
        }
        if self.style_scale_range.0 > self.style_scale_range.1 || self.style_scale_range.0 <= 0.0 {
            return Err(Error::InvalidConfig("bad style_scale_range".into()));
        }
        Ok(())
    }

    /// Number of distinct target classes: shared + target-private.
    pub fn target_class_count(&self) -> usize {
        self.known_classes - self.source_private + self.target_private
    }

    /// Openness O = 1 - |C_s| / |C_t|.
    pub fn openness(&self) -> f64 {
        1.0 - self.known_classes as f64 / self.target_class_count() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioMetadata {
    pub feature_dim: usize,
    pub num_sources: usize,
    pub source_classes: Vec<usize>,
    pub target_classes: Vec<usize>,
    pub target_private_classes: Vec<usize>,
    pub openness: f64,
    pub seed: u64,
    /// Styles for domains 0..L-1 (sources) and L (target).
    pub styles: Vec<StyleMap>,
}

fn gauss_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    // Box-Muller, two draws per pair
    let mut v = Vec::with_capacity(dim);
    while v.len() < dim {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        v.push(r * t.cos());
        if v.len() < dim {
            v.push(r * t.sin());
        }
    }
    v
}

/// Generate source datasets S_1..S_L and a target dataset T, reproducibly
/// from the seed. Target labels are stored hidden.
pub fn generate_scenario(
    cfg: &ScenarioConfig,
) -> Result<(Vec<Dataset>, Dataset, ScenarioMetadata)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.feature_dim;
    let total_classes = cfg.known_classes + cfg.target_private;

    // latent class means on the unit sphere, rejection-sampled so no two
    // classes are nearly collinear; target-private classes keep extra
    // distance from the known classes so the open-set task is well-posed
    const MEAN_MAX_COS: f64 = 0.3;
    const PRIVATE_VS_KNOWN_MAX_COS: f64 = 0.1;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(total_classes);
    for idx in 0..total_classes {
        let mut attempts = 0;
        let m = loop {
            let m = UnitVector::normalize(&gauss_vec(&mut rng, d))?;
            let separated = means.iter().enumerate().all(|(j, other)| {
                let cap = if idx >= cfg.known_classes && j < cfg.known_classes {
                    PRIVATE_VS_KNOWN_MAX_COS
                } else {
                    MEAN_MAX_COS
                };
                crate::sphere::dot(m.as_slice(), other) < cap
            });
            // after many failures accept the best-effort draw rather than
            // loop forever on crowded configurations
            if separated || attempts > 1000 {
                break m;
            }
            attempts += 1;
        };
        means.push(m.as_slice().to_vec());
    }

    // style maps: L sources + target
    let (lo, hi) = cfg.style_scale_range;
    let mut styles = Vec::with_capacity(cfg.num_sources + 1);
    for _ in 0..=cfg.num_sources {
        let scale: Vec<f64> = (0..d)
            .map(|_| if lo < hi { rng.gen_range(lo..hi) } else { lo })
            .collect();
        let shift: Vec<f64> = gauss_vec(&mut rng, d)
            .into_iter()
            .map(|g| g * cfg.style_shift_std)
            .collect();
        styles.push(StyleMap { scale, shift });
    }

    let draw = |rng: &mut ChaCha8Rng, class: usize, style: &StyleMap| -> Vec<f64> {
        let noise = gauss_vec(rng, d);
        let latent: Vec<f64> = means[class]
            .iter()
            .zip(&noise)
            .map(|(m, n)| m + cfg.cluster_spread * n)
            .collect();
        style.apply(&latent)
    };

    let mut sources = Vec::with_capacity(cfg.num_sources);
    for i in 0..cfg.num_sources {
        let mut samples = Vec::new();
        for y in 0..cfg.known_classes {
            for _ in 0..cfg.samples_per_class {
                samples.push(Sample {
                    features: draw(&mut rng, y, &styles[i]),
                    label: Label::Known(y),
                    domain_id: i,
                });
            }
        }
        sources.push(Dataset { samples });
    }

    let shared = cfg.known_classes - cfg.source_private;
    let target_classes: Vec<usize> = (0..shared)
        .chain(cfg.known_classes..cfg.known_classes + cfg.target_private)
        .collect();
    let mut samples = Vec::new();
    for &y in &target_classes {
        for _ in 0..cfg.samples_per_class {
            samples.push(Sample {
                features: draw(&mut rng, y, &styles[cfg.num_sources]),
                label: Label::Hidden(y),
                domain_id: cfg.num_sources,
            });
        }
    }
    let target = Dataset { samples };

    let metadata = ScenarioMetadata {
        feature_dim: d,
        num_sources: cfg.num_sources,
        source_classes: (0..cfg.known_classes).collect(),
        target_private_classes: (cfg.known_classes..cfg.known_classes + cfg.target_private)
            .collect(),
        target_classes,
        openness: cfg.openness(),
        seed: cfg.seed,
        styles,
    };
    Ok((sources, target, metadata))
}
