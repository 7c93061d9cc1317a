//! Class x domain balanced batch creation: one instance per (known class,
//! domain), two views each. A pseudo-labeled target pool may join as an
//! extra domain and is allowed to miss classes.

use rand::Rng;
use std::collections::BTreeMap;

use crate::data::transform::{view_transform, ViewTransformConfig};
use crate::error::{Error, Result};
use crate::model::loss::RawBatch;

/// One domain's samples grouped by visible class label.
#[derive(Debug, Clone)]
pub struct ClassPool<'a> {
    pub domain_id: usize,
    pub by_class: BTreeMap<usize, Vec<&'a [f64]>>,
    /// Sources must cover every known class; a pseudo-labeled target pool
    /// may not, and its missing (class, domain) slots are skipped.
    pub is_source: bool,
}

impl<'a> ClassPool<'a> {
    pub fn from_labeled(
        domain_id: usize,
        samples: impl Iterator<Item = (&'a [f64], usize)>,
        is_source: bool,
    ) -> ClassPool<'a> {
        let mut by_class: BTreeMap<usize, Vec<&'a [f64]>> = BTreeMap::new();
        for (x, y) in samples {
            by_class.entry(y).or_default().push(x);
        }
        ClassPool {
            domain_id,
            by_class,
            is_source,
        }
    }
}

/// Options shared by balanced and unbalanced batch creation.
pub struct BatchOptions<'a> {
    pub view_cfg: &'a ViewTransformConfig,
    /// Transform config for non-source pools; defaults to `view_cfg`.
    pub pseudo_view_cfg: Option<&'a ViewTransformConfig>,
    pub style_pool: &'a [&'a [f64]],
    /// Transform both views instead of only the second.
    pub two_view_aug: bool,
}

fn make_pair<R: Rng>(
    x: &[f64],
    label: usize,
    is_source: bool,
    opts: &BatchOptions,
    rng: &mut R,
    batch: &mut RawBatch,
) -> Result<()> {
    let cfg = if is_source {
        opts.view_cfg
    } else {
        opts.pseudo_view_cfg.unwrap_or(opts.view_cfg)
    };
    let first = if opts.two_view_aug {
        view_transform(x, cfg, opts.style_pool, rng)?
    } else {
        x.to_vec()
    };
    let second = view_transform(x, cfg, opts.style_pool, rng)?;
    batch.inputs.push(first);
    batch.labels.push(label);
    batch.inputs.push(second);
    batch.labels.push(label);
    Ok(())
}

/// Balanced batch: for each known class and each domain, one instance and
/// two views. Size is |C_s| * |D| * 2 when every pool covers every class.
pub fn create_batch<R: Rng>(
    pools: &[ClassPool],
    known_classes: usize,
    opts: &BatchOptions,
    rng: &mut R,
) -> Result<RawBatch> {
    let mut batch = RawBatch {
        inputs: Vec::new(),
        labels: Vec::new(),
    };
    for y in 0..known_classes {
        for pool in pools {
            match pool.by_class.get(&y) {
                Some(candidates) if !candidates.is_empty() => {
                    let x = candidates[rng.gen_range(0..candidates.len())];
                    make_pair(x, y, pool.is_source, opts, rng, &mut batch)?;
                }
                _ if pool.is_source => {
                    return Err(Error::EmptyClass {
                        domain: pool.domain_id,
                        class: y,
                    });
                }
                _ => {} // pseudo-target pool missing this class: skip
            }
        }
    }
    Ok(batch)
}

/// Unbalanced batch of `instances` draws from the pooled samples, ignoring
/// class and domain structure. Used by the no-source-balance ablation.
pub fn create_batch_unbalanced<R: Rng>(
    pools: &[ClassPool],
    instances: usize,
    opts: &BatchOptions,
    rng: &mut R,
) -> Result<RawBatch> {
    let mut all: Vec<(&[f64], usize)> = Vec::new();
    for pool in pools {
        for (&y, xs) in &pool.by_class {
            for &x in xs {
                all.push((x, y));
            }
        }
    }
    if all.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut batch = RawBatch {
        inputs: Vec::new(),
        labels: Vec::new(),
    };
    for _ in 0..instances {
        let (x, y) = all[rng.gen_range(0..all.len())];
        make_pair(x, y, true, opts, rng, &mut batch)?;
    }
    Ok(batch)
}
