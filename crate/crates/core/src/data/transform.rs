//! Two-view instance transforms: coordinate masking, feature-level style
//! transfer (instance-norm statistic swap against a target sample), Gaussian
//! jitter and mean-collapse.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewTransformConfig {
    pub style_prob: f64,
    pub jitter_prob: f64,
    pub collapse_prob: f64,
    pub keep_ratio_range: (f64, f64),
    pub jitter_scale: f64,
}

impl Default for ViewTransformConfig {
    fn default() -> ViewTransformConfig {
        ViewTransformConfig {
            style_prob: 0.5,
            jitter_prob: 0.8,
            collapse_prob: 0.2,
            keep_ratio_range: (0.5, 1.0),
            jitter_scale: 0.1,
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Swap whole-vector mean/std: content is standardized, then rescaled to the
/// style's statistics. A near-constant content vector is returned unchanged.
pub fn adain_transform(content: &[f64], style: &[f64]) -> Vec<f64> {
    let (c_mean, c_std) = mean_std(content);
    if c_std <= 1e-8 {
        return content.to_vec();
    }
    let (s_mean, s_std) = mean_std(style);
    content
        .iter()
        .map(|x| s_std * (x - c_mean) / c_std + s_mean)
        .collect()
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One augmented view: always mask-crop, then either style transfer against
/// a random target sample or jitter + mean-collapse.
pub fn view_transform<R: Rng>(
    x: &[f64],
    cfg: &ViewTransformConfig,
    style_pool: &[&[f64]],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if style_pool.is_empty() {
        return Err(Error::EmptyStylePool);
    }
    let d = x.len();
    let (lo, hi) = cfg.keep_ratio_range;
    let keep_ratio = if lo < hi { rng.gen_range(lo..hi) } else { lo };
    let keep = ((keep_ratio * d as f64).round() as usize).clamp(1, d);

    let mut out = x.to_vec();
    if keep < d {
        let mut idx: Vec<usize> = (0..d).collect();
        idx.shuffle(rng);
        for &i in &idx[keep..] {
            out[i] = 0.0;
        }
    }

    if rng.gen::<f64>() < cfg.style_prob {
        let style = style_pool[rng.gen_range(0..style_pool.len())];
        out = adain_transform(&out, style);
    } else {
        if rng.gen::<f64>() < cfg.jitter_prob {
            for v in out.iter_mut() {
                *v += cfg.jitter_scale * gauss(rng);
            }
        }
        if rng.gen::<f64>() < cfg.collapse_prob {
            let mean = out.iter().sum::<f64>() / d as f64;
            out.iter_mut().for_each(|v| *v = mean);
        }
    }
    Ok(out)
}
