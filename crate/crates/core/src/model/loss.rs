//! Supervised contrastive loss over the double batch, with exact analytic
//! gradients through normalization, projection head and encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::mlp::ModelParams;
use crate::sphere::UnitVector;

/// 2K unit embeddings with labels; views 2i and 2i+1 come from the same
/// instance and share a label.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub embeddings: Vec<UnitVector>,
    pub labels: Vec<usize>,
}

/// Inputs + labels for a batch before the forward pass, as produced by batch
/// creation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawBatch {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl RawBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Loss value and gradient with respect to each unit embedding.
///
/// For anchor k with positives pi(k) and others nu(k):
///   L_k = (-1/|pi(k)|) sum_{k' in pi(k)} [ s_kk'/tau - logsumexp_{n in nu(k)} s_kn/tau ]
/// where s is the cosine similarity (dot product of unit vectors). Logits are
/// max-shifted before exponentiation.
fn loss_and_embedding_grad(
    z: &[UnitVector],
    labels: &[usize],
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = z.len();
    let d = z.first().map(|v| v.dim()).unwrap_or(0);
    let mut loss = 0.0;
    let mut grad = if want_grad {
        vec![vec![0.0; d]; n]
    } else {
        Vec::new()
    };

    // cosine matrix (dot of unit vectors)
    let mut sim = vec![0.0; n * n];
    for k in 0..n {
        for m in (k + 1)..n {
            let s = z[k].dot(&z[m]);
            sim[k * n + m] = s;
            sim[m * n + k] = s;
        }
    }

    for k in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&m| m != k && labels[m] == labels[k]).collect();
        if positives.is_empty() {
            return Err(Error::EmptyPositives(k));
        }
        let inv_pi = 1.0 / positives.len() as f64;

        let mut max_logit = f64::NEG_INFINITY;
        for m in 0..n {
            if m != k {
                max_logit = max_logit.max(sim[k * n + m] / tau);
            }
        }
        let mut denom = 0.0;
        for m in 0..n {
            if m != k {
                denom += ((sim[k * n + m] / tau) - max_logit).exp();
            }
        }
        let log_z = max_logit + denom.ln();

        for &p in &positives {
            loss += -inv_pi * (sim[k * n + p] / tau - log_z);
        }

        if want_grad {
            for m in 0..n {
                if m == k {
                    continue;
                }
                let softmax = ((sim[k * n + m] / tau) - log_z).exp();
                let is_pos = if labels[m] == labels[k] { inv_pi } else { 0.0 };
                let g = (softmax - is_pos) / tau;
                // s_km depends on both z_k and z_m
                for i in 0..d {
                    grad[k][i] += g * z[m].as_slice()[i];
                    grad[m][i] += g * z[k].as_slice()[i];
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Supervised contrastive loss over a batch of unit embeddings.
pub fn supclr_loss(batch: &ContrastiveBatch, tau: f64) -> Result<f64> {
    loss_and_embedding_grad(&batch.embeddings, &batch.labels, tau, false).map(|(l, _)| l)
}

/// Forward + loss + exact parameter gradients for a raw batch.
pub fn supclr_backward(
    params: &ModelParams,
    batch: &RawBatch,
    tau: f64,
) -> Result<(f64, ModelParams)> {
    let mut caches = Vec::with_capacity(batch.len());
    for x in &batch.inputs {
        caches.push(params.forward_cached(x)?);
    }
    let z: Vec<UnitVector> = caches.iter().map(|c| c.z.clone()).collect();
    let (loss, d_z) = loss_and_embedding_grad(&z, &batch.labels, tau, true)?;

    let mut grads = params.zeros_like();
    for ((x, cache), g) in batch.inputs.iter().zip(&caches).zip(&d_z) {
        params.backward_into(x, cache, g, &mut grads);
    }
    Ok((loss, grads))
}
