//! Encoder + projection head as a small fully connected network with exact
//! analytic backpropagation. No autodiff; the architecture family is fixed:
//! affine layers with ReLU in between, final L2 normalization onto the
//! hypersphere.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{l2_norm, UnitVector, ZERO_NORM_EPS};

/// One affine layer. Weights are row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Dense {
        Dense {
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Dense {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Dense {
            w,
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            out[o] += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        out
    }
}

/// Layer widths of the network. `encoder` and `head` list output dims; the
/// last head dim is the embedding dimension d_z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_x: usize,
    pub encoder: Vec<usize>,
    pub head: Vec<usize>,
}

impl ModelDims {
    /// Desk-scale default: encoder d_x -> 64 -> 32, head 32 -> 32 -> 16.
    pub fn desk_default(d_x: usize) -> ModelDims {
        ModelDims {
            d_x,
            encoder: vec![64, 32],
            head: vec![32, 16],
        }
    }

    pub fn d_z(&self) -> usize {
        *self.head.last().expect("head has at least one layer")
    }

    pub fn d_enc(&self) -> usize {
        *self.encoder.last().unwrap_or(&self.d_x)
    }
}

/// All trainable parameters. ReLU follows every encoder layer and every head
/// layer except the last; the head output is L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: Vec<Dense>,
    pub head: Vec<Dense>,
}

impl ModelParams {
    pub fn init<R: Rng>(dims: &ModelDims, rng: &mut R) -> ModelParams {
        let mut encoder = Vec::new();
        let mut prev = dims.d_x;
        for &d in &dims.encoder {
            encoder.push(Dense::init(prev, d, rng));
            prev = d;
        }
        let mut head = Vec::new();
        for &d in &dims.head {
            head.push(Dense::init(prev, d, rng));
            prev = d;
        }
        ModelParams { encoder, head }
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            encoder: self
                .encoder
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
            head: self
                .head
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn d_x(&self) -> usize {
        self.encoder
            .first()
            .or(self.head.first())
            .map(|l| l.in_dim)
            .unwrap_or(0)
    }

    pub fn d_z(&self) -> usize {
        self.head.last().map(|l| l.out_dim).unwrap_or(0)
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(self.head.iter())
    }

    /// ReLU flags aligned with `layers()`: all but the final head layer.
    fn relu_flags(&self) -> Vec<bool> {
        let n = self.encoder.len() + self.head.len();
        (0..n).map(|i| i + 1 < n).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers()
            .all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }

    /// Check that `other` has the same layer shapes.
    pub fn shape_matches(&self, other: &ModelParams) -> bool {
        self.encoder.len() == other.encoder.len()
            && self.head.len() == other.head.len()
            && self
                .layers()
                .zip(other.layers())
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    /// Forward pass producing a unit-norm embedding.
    pub fn forward(&self, x: &[f64]) -> Result<UnitVector> {
        Ok(self.forward_cached(x)?.z)
    }

    /// Forward pass through the encoder only (post-ReLU output).
    pub fn forward_encoder(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in &self.encoder {
            a = layer.affine(&a);
            for v in a.iter_mut() {
                *v = v.max(0.0);
            }
        }
        a
    }
}

/// Per-sample activations kept for the backward pass.
pub struct ForwardCache {
    /// Pre-activation output of every layer, in order.
    preacts: Vec<Vec<f64>>,
    /// Norm of the pre-normalization head output.
    prenorm: f64,
    pub z: UnitVector,
}

/// Activations of a forward pass without the final normalization; used by
/// the cross-entropy baseline where the last layer emits logits.
pub struct LinearCache {
    preacts: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

impl ModelParams {
    fn run_layers(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if x.len() != self.d_x() {
            return Err(Error::ShapeMismatch(format!(
                "input dim {} != model d_x {}",
                x.len(),
                self.d_x()
            )));
        }
        let flags = self.relu_flags();
        let mut preacts = Vec::with_capacity(flags.len());
        let mut a = x.to_vec();
        for (layer, &relu) in self.layers().zip(&flags) {
            let pre = layer.affine(&a);
            a = if relu {
                pre.iter().map(|v| v.max(0.0)).collect()
            } else {
                pre.clone()
            };
            preacts.push(pre);
        }
        Ok((preacts, a))
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        let (preacts, a) = self.run_layers(x)?;
        let prenorm = l2_norm(&a);
        if prenorm < ZERO_NORM_EPS {
            return Err(Error::ZeroVector);
        }
        let z = UnitVector::normalize(&a)?;
        Ok(ForwardCache {
            preacts,
            prenorm,
            z,
        })
    }

    /// Forward without the final normalization.
    pub fn forward_linear_cached(&self, x: &[f64]) -> Result<LinearCache> {
        let (preacts, out) = self.run_layers(x)?;
        Ok(LinearCache { preacts, out })
    }

    /// Backpropagate `d_z` (gradient at the unit-norm output) for one sample,
    /// accumulating parameter gradients into `grads`.
    pub fn backward_into(&self, x: &[f64], cache: &ForwardCache, d_z: &[f64], grads: &mut ModelParams) {
        let z = cache.z.as_slice();
        // through L2 normalization: d_u = (d_z - (d_z . z) z) / ||u||
        let proj: f64 = d_z.iter().zip(z).map(|(g, z)| g * z).sum();
        let d_out: Vec<f64> = d_z
            .iter()
            .zip(z)
            .map(|(g, z)| (g - proj * z) / cache.prenorm)
            .collect();
        self.backprop_layers(x, &cache.preacts, d_out, grads);
    }

    /// Backpropagate a gradient at the un-normalized output.
    pub fn backward_linear_into(
        &self,
        x: &[f64],
        cache: &LinearCache,
        d_out: &[f64],
        grads: &mut ModelParams,
    ) {
        self.backprop_layers(x, &cache.preacts, d_out.to_vec(), grads);
    }

    fn backprop_layers(
        &self,
        x: &[f64],
        preacts: &[Vec<f64>],
        mut d_out: Vec<f64>,
        grads: &mut ModelParams,
    ) {
        let flags = self.relu_flags();
        let layers: Vec<&Dense> = self.layers().collect();
        let grad_layers: Vec<&mut Dense> = grads
            .encoder
            .iter_mut()
            .chain(grads.head.iter_mut())
            .collect();
        debug_assert_eq!(layers.len(), grad_layers.len());

        // post-activation inputs to each layer
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        inputs.push(x.to_vec());
        for (i, pre) in preacts.iter().enumerate().take(layers.len() - 1) {
            let post = if flags[i] {
                pre.iter().map(|v| v.max(0.0)).collect()
            } else {
                pre.clone()
            };
            inputs.push(post);
        }

        for (idx, grad_layer) in grad_layers.into_iter().enumerate().rev() {
            let layer = layers[idx];
            let pre = &preacts[idx];
            let d_pre: Vec<f64> = if flags[idx] {
                d_out
                    .iter()
                    .zip(pre)
                    .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
                    .collect()
            } else {
                d_out.clone()
            };
            let a_in = &inputs[idx];
            for o in 0..layer.out_dim {
                let row = &mut grad_layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, a) in row.iter_mut().zip(a_in) {
                    *g += d_pre[o] * a;
                }
                grad_layer.b[o] += d_pre[o];
            }
            if idx > 0 {
                let mut d_in = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (d, w) in d_in.iter_mut().zip(row) {
                        *d += d_pre[o] * w;
                    }
                }
                d_out = d_in;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_last_layer_gives_zero_vector_error() {
        let dims = ModelDims {
            d_x: 2,
            encoder: vec![2],
            head: vec![2],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ModelParams::init(&dims, &mut rng);
        let last = params.head.last_mut().unwrap();
        last.w.iter_mut().for_each(|v| *v = 0.0);
        last.b.iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(params.forward(&[1.0, 2.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn identity_network_normalizes_input() {
        // single encoder layer + single head layer, both identity, input
        // nonnegative so ReLU is inactive
        let eye = |d: usize| {
            let mut l = Dense::zeros(d, d);
            for i in 0..d {
                l.w[i * d + i] = 1.0;
            }
            l
        };
        let params = ModelParams {
            encoder: vec![eye(2)],
            head: vec![eye(2)],
        };
        let z = params.forward(&[3.0, 4.0]).unwrap();
        assert!((z.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((z.as_slice()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_naive_recomputation() {
        let dims = ModelDims {
            d_x: 5,
            encoder: vec![7, 4],
            head: vec![6, 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = ModelParams::init(&dims, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| (i as f64) * 0.3 - 0.7).collect();

        // independent step-by-step recomputation
        let mut a = x.clone();
        let all: Vec<&Dense> = params.encoder.iter().chain(params.head.iter()).collect();
        for (i, l) in all.iter().enumerate() {
            let mut out = vec![0.0; l.out_dim];
            for o in 0..l.out_dim {
                let mut s = l.b[o];
                for j in 0..l.in_dim {
                    s += l.w[o * l.in_dim + j] * a[j];
                }
                out[o] = s;
            }
            if i + 1 < all.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = out;
        }
        let n = l2_norm(&a);
        let expected: Vec<f64> = a.iter().map(|v| v / n).collect();

        let z = params.forward(&x).unwrap();
        for (got, want) in z.as_slice().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_deterministic() {
        let dims = ModelDims::desk_default(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(&dims, &mut rng);
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let a = params.forward(&x).unwrap();
        let b = params.forward(&x).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
