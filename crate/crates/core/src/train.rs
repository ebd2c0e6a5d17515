//! Optimisers, global-norm clipping and the epoch loop.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::network::{backward_sequence, evaluate, forward_sequence, BatchStream, EvalOptions, Model, ModelGrads};
use crate::sampling::RngState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    /// Plain SGD; after `patience` validations without improvement the
    /// rate is multiplied by `decay_factor`.
    Sgd {
        lr: f64,
        decay_factor: f64,
        patience: usize,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Optimizer {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Optimizer {
        Optimizer::Sgd {
            lr,
            decay_factor: 0.25,
            patience: 1,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr, .. } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    fn validate(&self) -> Result<()> {
        let lr = self.lr();
        // A zero rate is allowed: it freezes the model, which is useful as a
        // control run.
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and non-negative, got {lr}"
            )));
        }
        match *self {
            Optimizer::Sgd { decay_factor, .. } if !(decay_factor > 0.0 && decay_factor <= 1.0) => Err(Error::invalid(
                format!("decay factor must lie in (0, 1], got {decay_factor}"),
            )),
            Optimizer::Adam { beta1, beta2, eps, .. }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                Err(Error::invalid("Adam needs beta1, beta2 in [0, 1) and eps > 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub clip_norm: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Truncated-BPTT window length.
    pub window: usize,
    pub batch: usize,
    /// Validate every this many steps, and always at the end of an epoch;
    /// 0 means only at epoch ends.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(2e-3),
            clip_norm: 2.0,
            epochs: 20,
            seed: 1,
            window: 35,
            batch: 20,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if self.window == 0 || self.batch == 0 {
            return Err(Error::invalid("window and batch must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ppl: Option<f64>,
    pub grad_norm_preclip: f64,
    pub lr: f64,
    pub wallclock_s: f64,
}

impl TrainLogRow {
    pub const CSV_HEADER: &'static str = "step,epoch,train_loss,val_ppl,grad_norm_preclip,lr,wallclock_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.step,
            self.epoch,
            self.train_loss,
            self.val_ppl.map(|v| v.to_string()).unwrap_or_default(),
            self.grad_norm_preclip,
            self.lr,
            self.wallclock_s
        )
    }
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_global_norm(grads: &mut ModelGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Optimiser state for one model.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    since_best: usize,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, model: &Model) -> OptimizerState {
        let zeros: Vec<Vec<f64>> = match kind {
            Optimizer::Adam { .. } => model.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            Optimizer::Sgd { .. } => Vec::new(),
        };
        OptimizerState {
            kind,
            lr: kind.lr(),
            step: 0,
            m: zeros.clone(),
            v: zeros,
            since_best: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn apply(&mut self, model: &mut Model, grads: &ModelGrads) {
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            Optimizer::Sgd { .. } => {
                for ((_, p), (_, g)) in model.tensors_mut().into_iter().zip(grads.tensors()) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                }
            }
            Optimizer::Adam { beta1, beta2, eps, .. } => {
                let c1 = 1.0 - beta1.powi(self.step.min(i32::MAX as u64) as i32);
                let c2 = 1.0 - beta2.powi(self.step.min(i32::MAX as u64) as i32);
                let params = model.tensors_mut().into_iter().zip(grads.tensors());
                for (((_, p), (_, g)), (m, v)) in params.zip(self.m.iter_mut().zip(self.v.iter_mut())) {
                    for k in 0..p.len() {
                        let gk = g[k];
                        m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                        let mh = m[k] / c1;
                        let vh = v[k] / c2;
                        p[k] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        model.sync_tied();
    }

    /// Plateau schedule for SGD; Adam keeps its rate.
    fn on_validation(&mut self, improved: bool) {
        if let Optimizer::Sgd {
            decay_factor, patience, ..
        } = self.kind
        {
            if improved {
                self.since_best = 0;
            } else {
                self.since_best += 1;
                if self.since_best >= patience.max(1) {
                    self.lr *= decay_factor;
                    self.since_best = 0;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation perplexity seen.
    pub best: Model,
    pub best_val_ppl: f64,
    /// Parameters after the last step.
    pub last: Model,
    pub log: Vec<TrainLogRow>,
}

/// Trains on `train`, validating on `valid`, and returns the best model.
pub fn train_loop(model: Model, train: &[u32], valid: &[u32], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_loop_with(model, train, valid, cfg, |_| {})
}

/// [`train_loop`] with a callback receiving every log row as it is made.
pub fn train_loop_with(
    mut model: Model,
    train: &[u32],
    valid: &[u32],
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    let stream = BatchStream::new(train, cfg.batch, model.config.vocab_size)?;
    let eval_opts = EvalOptions {
        batch: cfg.batch,
        window: cfg.window,
        hard_gates: false,
    };
    let mut rng = RngState::new(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, &model);
    let start = Instant::now();
    let mut log: Vec<TrainLogRow> = Vec::new();
    let mut best: Option<(f64, Model)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut state = model.initial_state(stream.batch_size());
        let n_windows = stream.num_windows(cfg.window);
        for (wi, window) in stream.windows(cfg.window).enumerate() {
            if window.num_targets() == 0 {
                continue;
            }
            let out = forward_sequence(&model, &window, &state, &mut rng, true)?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence {
                    step: step + 1,
                    msg: format!("training loss is {}", out.loss),
                });
            }
            let mut grads = backward_sequence(&model, &out)?;
            if !grads.all_finite() {
                return Err(Error::Divergence {
                    step: step + 1,
                    msg: "non-finite gradient".into(),
                });
            }
            let pre = clip_global_norm(&mut grads, cfg.clip_norm);
            opt.apply(&mut model, &grads);
            step += 1;
            state = out.final_state;

            let epoch_end = wi + 1 == n_windows;
            let due = epoch_end || (cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every));
            let val_ppl = if due {
                let ppl = evaluate(&model, valid, &eval_opts)?.perplexity();
                if !ppl.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        msg: format!("validation perplexity is {ppl}"),
                    });
                }
                let improved = best.as_ref().is_none_or(|(b, _)| ppl < *b);
                if improved {
                    best = Some((ppl, model.clone()));
                }
                opt.on_validation(improved);
                Some(ppl)
            } else {
                None
            };
            let row = TrainLogRow {
                step,
                epoch,
                train_loss: out.loss,
                val_ppl,
                grad_norm_preclip: pre,
                lr: opt.lr(),
                wallclock_s: start.elapsed().as_secs_f64(),
            };
            on_row(&row);
            log.push(row);
        }
    }

    let (best_val_ppl, best) = match best {
        Some(b) => b,
        None => (evaluate(&model, valid, &eval_opts)?.perplexity(), model.clone()),
    };
    Ok(TrainOutcome {
        best,
        best_val_ppl,
        last: model,
        log,
    })
}
