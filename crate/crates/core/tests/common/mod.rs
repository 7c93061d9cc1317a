//! Shared helpers for the integration suites: naive reference
//! implementations and the finite-difference gradient check.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hymos_core::eval::PredictionRecord;
use hymos_core::model::{
    supclr_backward, supclr_loss, ContrastiveBatch, Dense, ModelDims, ModelParams, RawBatch,
};
use hymos_core::sphere::{distance, UnitVector};

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> UnitVector {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Ok(u) = UnitVector::normalize(&v) {
            return u;
        }
    }
}

/// Labeled embedding set where every class has at least two members (so
/// every anchor has a positive) and there are at least two classes.
pub fn random_embedding_set(rng: &mut ChaCha8Rng) -> Vec<(UnitVector, usize)> {
    let d = rng.gen_range(3..=8);
    let classes = rng.gen_range(2..=5);
    let mut out = Vec::new();
    for y in 0..classes {
        let members = rng.gen_range(2..=5);
        for _ in 0..members {
            out.push((random_unit(rng, d), y));
        }
    }
    out
}

/// Direct transcription of the loss definition: explicit per-anchor sums
/// over positives and over all other samples, no shared work.
pub fn naive_supclr(z: &[UnitVector], labels: &[usize], tau: f64) -> f64 {
    let n = z.len();
    let mut total = 0.0;
    for k in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&j| j != k && labels[j] == labels[k])
            .collect();
        let mut anchor = 0.0;
        for &p in &positives {
            let mut denom = 0.0;
            for j in 0..n {
                if j != k {
                    denom += (z[k].dot(&z[j]) / tau).exp();
                }
            }
            anchor += (z[k].dot(&z[p]) / tau).exp().ln() - denom.ln();
        }
        total += -anchor / positives.len() as f64;
    }
    total
}

pub fn naive_sparsity(protos: &[(usize, UnitVector)]) -> f64 {
    let mut total = 0.0;
    for (i, (_, p)) in protos.iter().enumerate() {
        let mut nearest = f64::INFINITY;
        for (j, (_, q)) in protos.iter().enumerate() {
            if i != j {
                nearest = nearest.min(distance(p, q));
            }
        }
        total += nearest;
    }
    total / protos.len() as f64
}

pub fn naive_compactness(
    embeddings: &[(UnitVector, usize)],
    protos: &[(usize, UnitVector)],
) -> f64 {
    let mut total = 0.0;
    for (y, p) in protos {
        let members: Vec<&UnitVector> = embeddings
            .iter()
            .filter(|(_, l)| l == y)
            .map(|(z, _)| z)
            .collect();
        let within: f64 = members.iter().map(|z| distance(z, p)).sum();
        total += within / members.len() as f64;
    }
    total / protos.len() as f64
}

/// O(n^2) pairwise comparison: P(score_unknown > score_known) + 0.5 ties.
pub fn naive_auroc(records: &[PredictionRecord]) -> f64 {
    let pos: Vec<f64> = records
        .iter()
        .filter(|r| r.true_label.is_none())
        .map(|r| r.score)
        .collect();
    let neg: Vec<f64> = records
        .iter()
        .filter(|r| r.true_label.is_some())
        .map(|r| r.score)
        .collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub const FD_STEP: f64 = 1e-5;

pub fn batch_loss(params: &ModelParams, batch: &RawBatch, tau: f64) -> f64 {
    let embeddings = batch
        .inputs
        .iter()
        .map(|x| params.forward(x).unwrap())
        .collect();
    supclr_loss(
        &ContrastiveBatch {
            embeddings,
            labels: batch.labels.clone(),
        },
        tau,
    )
    .unwrap()
}

pub fn random_batch(
    rng: &mut ChaCha8Rng,
    params: &ModelParams,
    classes: usize,
    domains: usize,
    d_x: usize,
) -> RawBatch {
    let mut batch = RawBatch {
        inputs: Vec::new(),
        labels: Vec::new(),
    };
    for y in 0..classes {
        for _ in 0..domains {
            for _ in 0..2 {
                // reroll inputs that land exactly on the dead-ReLU zero
                // embedding, where the loss is undefined
                let x = loop {
                    let x: Vec<f64> = (0..d_x).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if params.forward(&x).is_ok() {
                        break x;
                    }
                };
                batch.inputs.push(x);
                batch.labels.push(y);
            }
        }
    }
    batch
}

fn layer_ref(p: &ModelParams, li: usize) -> &Dense {
    if li < p.encoder.len() {
        &p.encoder[li]
    } else {
        &p.head[li - p.encoder.len()]
    }
}

fn get(p: &ModelParams, li: usize, tensor: usize, i: usize) -> f64 {
    let layer = layer_ref(p, li);
    if tensor == 0 {
        layer.w[i]
    } else {
        layer.b[i]
    }
}

fn set(p: &mut ModelParams, li: usize, tensor: usize, i: usize, v: f64) {
    let layer = if li < p.encoder.len() {
        &mut p.encoder[li]
    } else {
        let n = p.encoder.len();
        &mut p.head[li - n]
    };
    if tensor == 0 {
        layer.w[i] = v;
    } else {
        layer.b[i] = v;
    }
}

/// Central finite difference over every scalar parameter, compared to the
/// analytic gradient by relative error against the larger magnitude.
pub fn fd_max_rel_error(seed: u64, classes: usize, domains: usize, d_x: usize, d_z: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims {
        d_x,
        encoder: vec![6],
        head: vec![d_z],
    };
    let mut params = ModelParams::init(&dims, &mut rng);
    let batch = random_batch(&mut rng, &params, classes, domains, d_x);
    let tau = 0.5;
    let (_, grads) = supclr_backward(&params, &batch, tau).unwrap();

    let mut max_rel = 0.0_f64;
    for li in 0..params.encoder.len() + params.head.len() {
        for tensor in 0..2 {
            let len = {
                let layer = layer_ref(&params, li);
                if tensor == 0 {
                    layer.w.len()
                } else {
                    layer.b.len()
                }
            };
            for i in 0..len {
                let orig = get(&params, li, tensor, i);
                set(&mut params, li, tensor, i, orig + FD_STEP);
                let plus = batch_loss(&params, &batch, tau);
                set(&mut params, li, tensor, i, orig - FD_STEP);
                let minus = batch_loss(&params, &batch, tau);
                set(&mut params, li, tensor, i, orig);
                let fd = (plus - minus) / (2.0 * FD_STEP);
                let analytic = get(&grads, li, tensor, i);
                let scale = fd.abs().max(analytic.abs()).max(1.0);
                max_rel = max_rel.max((fd - analytic).abs() / scale);
            }
        }
    }
    max_rel
}

/// Grid of ≥20 seeded configurations; returns (configs checked, worst
/// relative error).
pub fn fd_grid_check() -> (usize, f64) {
    let mut worst = 0.0_f64;
    let mut count = 0;
    let mut seed = 100;
    for &classes in &[3, 4, 5] {
        for &domains in &[2, 3] {
            for &d_x in &[4, 8] {
                for &d_z in &[3, 8] {
                    seed += 1;
                    worst = worst.max(fd_max_rel_error(seed, classes, domains, d_x, d_z));
                    count += 1;
                }
            }
        }
    }
    (count, worst)
}
