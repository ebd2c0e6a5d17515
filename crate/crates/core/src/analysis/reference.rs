//! Position-by-position forward pass written over a generic scalar type.
//!
//! Shares no code with the batched network pass. Instantiated with `f64`
//! it cross-checks the batched loss; instantiated with [`DD`] it gives
//! loss values accurate far below `f64` rounding, which is what the
//! finite-difference oracle needs.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::dd::DD;
use crate::network::{LayerState, Model, ModelConfig, SequenceCache, Window, PAD};

pub(crate) trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + PartialOrd
    + From<f64>
{
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
}

impl Real for f64 {
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn sigmoid(self) -> f64 {
        if self >= 0.0 {
            1.0 / (1.0 + (-self).exp())
        } else {
            let e = self.exp();
            e / (1.0 + e)
        }
    }
}

impl Real for DD {
    fn exp(self) -> DD {
        DD::exp(self)
    }
    fn ln(self) -> DD {
        DD::ln(self)
    }
    fn tanh(self) -> DD {
        DD::tanh(self)
    }
    fn sigmoid(self) -> DD {
        DD::sigmoid(self)
    }
}

/// Gate noise and dropout masks recorded by one batched forward pass.
#[derive(Clone, Debug)]
pub(crate) struct Frozen {
    noise: Vec<Option<Vec<f64>>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Frozen {
    pub(crate) fn from_cache(cache: &SequenceCache) -> Frozen {
        Frozen {
            noise: cache.layers.iter().map(|l| l.noise.clone()).collect(),
            masks: cache.layers.iter().map(|l| l.dropout_mask.clone()).collect(),
        }
    }
}

/// Parameters as flat tensors in [`Model::tensors`] order.
pub(crate) fn lift<T: Real>(model: &Model) -> Vec<Vec<T>> {
    model
        .tensors()
        .into_iter()
        .map(|(_, t)| t.iter().map(|&v| T::from(v)).collect())
        .collect()
}

/// Mean cross-entropy of the window. With tied embeddings the output
/// projection reads tensor 0, so perturbing the embedding moves both uses.
pub(crate) fn window_loss<T: Real>(
    params: &[Vec<T>],
    cfg: &ModelConfig,
    window: &Window,
    init: &[LayerState],
    frozen: &Frozen,
) -> T {
    let nl = cfg.num_layers;
    let hd = cfg.hidden_dim;
    let tau = T::from(cfg.gate_mode.tau());
    let zero = T::from(0.0);
    let emb = &params[0];
    let out_w = if cfg.tie_embeddings {
        &params[0]
    } else {
        &params[1 + 12 * nl]
    };
    let out_b = &params[2 + 12 * nl];

    let mut h: Vec<Vec<T>> = init
        .iter()
        .map(|s| s.h.as_slice().iter().map(|&v| T::from(v)).collect())
        .collect();
    let mut c: Vec<Vec<T>> = init
        .iter()
        .map(|s| s.c.as_slice().iter().map(|&v| T::from(v)).collect())
        .collect();

    let mut total = zero;
    let mut count = 0usize;
    for t in 0..window.steps {
        for b in 0..window.batch {
            let r = t * window.batch + b;
            let tok = window.inputs[r] as usize;
            let mut x: Vec<T> = emb[tok * cfg.embed_dim..(tok + 1) * cfg.embed_dim].to_vec();
            for l in 0..nl {
                let p = &params[1 + 12 * l..1 + 12 * (l + 1)];
                let n = x.len();
                let h_prev = h[l][b * hd..(b + 1) * hd].to_vec();
                let pre = |gate: usize, j: usize| {
                    let (wx, wh, bias) = (&p[3 * gate], &p[3 * gate + 1], &p[3 * gate + 2]);
                    let mut a = bias[j];
                    for k in 0..n {
                        a = a + wx[j * n + k] * x[k];
                    }
                    for k in 0..hd {
                        a = a + wh[j * hd + k] * h_prev[k];
                    }
                    a
                };
                let mut out = vec![zero; hd];
                for j in 0..hd {
                    let (ai, af) = (pre(0, j), pre(1, j));
                    let (ai, af) = match &frozen.noise[l] {
                        Some(z) => (ai + T::from(z[r * 2 * hd + j]), af + T::from(z[r * 2 * hd + hd + j])),
                        None => (ai, af),
                    };
                    let i = (ai / tau).sigmoid();
                    let f = (af / tau).sigmoid();
                    let o = pre(2, j).sigmoid();
                    let g = pre(3, j).tanh();
                    let cj = f * c[l][b * hd + j] + i * g;
                    c[l][b * hd + j] = cj;
                    out[j] = o * cj.tanh();
                }
                h[l][b * hd..(b + 1) * hd].copy_from_slice(&out);
                x = match &frozen.masks[l] {
                    Some(m) => out
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| v * T::from(m[r * hd + j]))
                        .collect(),
                    None => out,
                };
            }
            let y = window.targets[r];
            if y == PAD {
                continue;
            }
            let logits: Vec<T> = (0..cfg.vocab_size)
                .map(|v| {
                    let mut z = out_b[v];
                    for j in 0..hd {
                        z = z + out_w[v * hd + j] * x[j];
                    }
                    z
                })
                .collect();
            let mut max = logits[0];
            for &z in &logits[1..] {
                if z > max {
                    max = z;
                }
            }
            let mut sum = zero;
            for &z in &logits {
                sum = sum + (z - max).exp();
            }
            total = total + sum.ln() - (logits[y as usize] - max);
            count += 1;
        }
    }
    total / T::from(count.max(1) as f64)
}
