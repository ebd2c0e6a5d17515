//! Stacked LSTM language model: embedding lookup, a stack of layers, an
//! output projection and softmax cross-entropy over time-major windows.

mod batch;
mod sequence;

pub use batch::{BatchStream, Window, PAD};
pub use sequence::{
    backward_sequence, evaluate, forward_sequence, forward_sequence_with, perplexity_eval, EvalOptions, EvalResult,
    ForwardOptions, ForwardOutput, LayerCache, SequenceCache,
};

use crate::cell::{GateMode, LayerParams};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sampling::RngState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub gate_mode: GateMode,
    pub tie_embeddings: bool,
    pub dropout_p: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid("vocab, embedding and hidden sizes must be positive"));
        }
        if self.num_layers == 0 {
            return Err(Error::invalid("a model needs at least one layer"));
        }
        if self.tie_embeddings && self.embed_dim != self.hidden_dim {
            return Err(Error::invalid(format!(
                "tied embeddings need embed_dim == hidden_dim, got {} and {}",
                self.embed_dim, self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        self.gate_mode.validate()
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.hidden_dim
        }
    }

    /// Number of stored scalars (tied output weights counted once).
    pub fn num_params(&self) -> usize {
        let h = self.hidden_dim;
        let layers: usize = (0..self.num_layers)
            .map(|l| 4 * (h * self.layer_input_dim(l) + h * h + h))
            .sum();
        let out_w = if self.tie_embeddings { 0 } else { self.vocab_size * h };
        self.vocab_size * self.embed_dim + layers + out_w + self.vocab_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub embedding: Matrix,
    pub layers: Vec<LayerParams>,
    pub out_w: Matrix,
    pub out_b: Vector,
    pub config: ModelConfig,
}

impl Model {
    /// All-zero parameters: every prediction is uniform over the vocabulary.
    pub fn zeros(config: ModelConfig) -> Result<Model> {
        config.validate()?;
        Ok(Model {
            embedding: Matrix::zeros(config.vocab_size, config.embed_dim),
            layers: (0..config.num_layers)
                .map(|l| LayerParams::zeros(config.layer_input_dim(l), config.hidden_dim))
                .collect(),
            out_w: Matrix::zeros(config.vocab_size, config.hidden_dim),
            out_b: Vector::zeros(config.vocab_size),
            config,
        })
    }

    /// Embedding uniform in ±0.1, layer weights per [`LayerParams::init`],
    /// output weights uniform in ±1/√hidden, output bias 0.
    pub fn init(config: ModelConfig, rng: &mut RngState) -> Result<Model> {
        let mut m = Model::zeros(config)?;
        for v in m.embedding.as_mut_slice() {
            *v = 0.1 * (2.0 * rng.uniform() - 1.0);
        }
        for l in 0..config.num_layers {
            m.layers[l] = LayerParams::init(config.layer_input_dim(l), config.hidden_dim, rng);
        }
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        for v in m.out_w.as_mut_slice() {
            *v = bound * (2.0 * rng.uniform() - 1.0);
        }
        m.sync_tied();
        Ok(m)
    }

    /// Copies the embedding into the output projection when tied.
    pub fn sync_tied(&mut self) {
        if self.config.tie_embeddings {
            self.out_w = self.embedding.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        if self.embedding.shape() != (c.vocab_size, c.embed_dim) {
            return Err(Error::shape(format!(
                "embedding is {}x{}, expected {}x{}",
                self.embedding.rows(),
                self.embedding.cols(),
                c.vocab_size,
                c.embed_dim
            )));
        }
        if self.layers.len() != c.num_layers {
            return Err(Error::shape(format!(
                "model has {} layers, config says {}",
                self.layers.len(),
                c.num_layers
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.input_dim() != c.layer_input_dim(l) || layer.hidden_dim() != c.hidden_dim {
                return Err(Error::shape(format!(
                    "layer {l} is {}->{}, expected {}->{}",
                    layer.input_dim(),
                    layer.hidden_dim(),
                    c.layer_input_dim(l),
                    c.hidden_dim
                )));
            }
        }
        if self.out_w.shape() != (c.vocab_size, c.hidden_dim) || self.out_b.len() != c.vocab_size {
            return Err(Error::shape(format!(
                "output projection is {}x{} + {}, expected {}x{} + {}",
                self.out_w.rows(),
                self.out_w.cols(),
                self.out_b.len(),
                c.vocab_size,
                c.hidden_dim,
                c.vocab_size
            )));
        }
        if c.tie_embeddings && self.out_w != self.embedding {
            return Err(Error::invalid("tied model has out_w different from embedding"));
        }
        Ok(())
    }

    /// Every tensor in checkpoint order with its name.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_slice())];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("layer{l}.{name}"), t));
            }
        }
        out.push(("out_w".to_string(), self.out_w.as_slice()));
        out.push(("out_b".to_string(), self.out_b.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_mut_slice())];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("layer{l}.{name}"), t));
            }
        }
        out.push(("out_w".to_string(), self.out_w.as_mut_slice()));
        out.push(("out_b".to_string(), self.out_b.as_mut_slice()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.config.num_params()
    }

    /// Fresh zero recurrent state for `batch` streams.
    pub fn initial_state(&self, batch: usize) -> Vec<LayerState> {
        (0..self.config.num_layers)
            .map(|_| LayerState::zeros(batch, self.config.hidden_dim))
            .collect()
    }
}

/// Gradients with the same layout as [`Model`]. For tied models the
/// output-projection contribution is folded into `embedding` and `out_w`
/// stays zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub embedding: Matrix,
    pub layers: Vec<LayerParams>,
    pub out_w: Matrix,
    pub out_b: Vector,
}

impl ModelGrads {
    pub fn zeros_like(model: &Model) -> ModelGrads {
        let z = Model::zeros(model.config).expect("config of a live model is valid");
        ModelGrads {
            embedding: z.embedding,
            layers: z.layers,
            out_w: z.out_w,
            out_b: z.out_b,
        }
    }

    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_slice())];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("layer{l}.{name}"), t));
            }
        }
        out.push(("out_w".to_string(), self.out_w.as_slice()));
        out.push(("out_b".to_string(), self.out_b.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_mut_slice())];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("layer{l}.{name}"), t));
            }
        }
        out.push(("out_w".to_string(), self.out_w.as_mut_slice()));
        out.push(("out_b".to_string(), self.out_b.as_mut_slice()));
        out
    }

    /// Euclidean norm over every gradient entry.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Recurrent state of one layer for a batch of streams (`batch × hidden`).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub h: Matrix,
    pub c: Matrix,
}

impl LayerState {
    pub fn zeros(batch: usize, hidden: usize) -> LayerState {
        LayerState {
            h: Matrix::zeros(batch, hidden),
            c: Matrix::zeros(batch, hidden),
        }
    }
}
