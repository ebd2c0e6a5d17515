//! Finite-difference check of the backpropagated gradients.
//!
//! The numeric side is `(f(θ+h) − f(θ−h)) / 2h` per coordinate, with the
//! gate noise and dropout masks of the analytic pass held fixed. `f` is
//! evaluated by an independent scalar forward in double-double arithmetic:
//! in plain `f64` the difference of two losses near 1.6 carries rounding
//! noise around 1e-11, which at `h = 1e-5` swamps gradient entries below
//! about 1e-5 and makes a 1e-6 relative bound unreachable for reasons that
//! have nothing to do with the gradient code.

use super::dd::DD;
use super::reference::{lift, window_loss, Frozen};
use crate::cell::GateMode;
use crate::error::{Error, Result};
use crate::network::{
    backward_sequence, forward_sequence_with, ForwardOptions, LayerState, Model, ModelConfig, ModelGrads, Window,
};
use crate::sampling::RngState;

/// One model, window and entering state to differentiate at.
#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub model: Model,
    pub window: Window,
    pub init: Vec<LayerState>,
    /// Training mode draws gate noise (Gumbel) and dropout masks.
    pub training: bool,
    /// Seed of the forward pass that fixes noise and masks.
    pub seed: u64,
}

impl GradCheckCase {
    /// One layer, embedding 3 (4 when tied), hidden 4, vocabulary 5, a
    /// window of 3 steps over 2 streams and a random entering state.
    pub fn small(mode: GateMode, tie_embeddings: bool, seed: u64) -> Result<GradCheckCase> {
        let hidden = 4;
        let config = ModelConfig {
            vocab_size: 5,
            embed_dim: if tie_embeddings { hidden } else { 3 },
            hidden_dim: hidden,
            num_layers: 1,
            gate_mode: mode,
            tie_embeddings,
            dropout_p: 0.0,
        };
        GradCheckCase::random(config, 3, 2, seed)
    }

    /// Randomly initialised model with random biases, random tokens and a
    /// random entering state.
    pub fn random(config: ModelConfig, steps: usize, batch: usize, seed: u64) -> Result<GradCheckCase> {
        let mut rng = RngState::new(seed);
        let mut model = Model::init(config, &mut rng)?;
        for layer in &mut model.layers {
            for (name, t) in layer.tensors_mut() {
                if name.starts_with('b') {
                    t.iter_mut().for_each(|v| *v += rng.uniform() - 0.5);
                }
            }
        }
        for v in model.out_b.as_mut_slice() {
            *v = rng.uniform() - 0.5;
        }
        let v = config.vocab_size as f64;
        let rows: Vec<Vec<u32>> = (0..batch)
            .map(|_| (0..=steps).map(|_| (rng.uniform() * v) as u32).collect())
            .collect();
        let window = Window::from_rows(&rows)?;
        let mut init = model.initial_state(batch);
        for s in &mut init {
            s.h.as_mut_slice().iter_mut().for_each(|x| *x = rng.uniform() - 0.5);
            s.c.as_mut_slice()
                .iter_mut()
                .for_each(|x| *x = 2.0 * rng.uniform() - 1.0);
        }
        Ok(GradCheckCase {
            model,
            window,
            init,
            training: true,
            seed: rng.next_u64(),
        })
    }

    fn options(&self) -> ForwardOptions {
        if self.training {
            ForwardOptions::training()
        } else {
            ForwardOptions::eval()
        }
    }
}

/// Worst coordinate of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockError {
    pub block: String,
    pub max_rel_error: f64,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub mode: GateMode,
    pub h: f64,
    pub tol: f64,
    pub blocks: Vec<BlockError>,
    pub max_rel_error: f64,
    /// |batched loss − reference loss| at the unperturbed parameters.
    pub loss_gap: f64,
}

impl GradCheckReport {
    pub const CSV_HEADER: &'static str = "mode,block,max_rel_error,index,analytic,numeric,passed";

    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.blocks
            .iter()
            .map(|b| {
                format!(
                    "{},{},{:e},{},{:e},{:e},{}",
                    self.mode.name(),
                    b.block,
                    b.max_rel_error,
                    b.index,
                    b.analytic,
                    b.numeric,
                    b.max_rel_error < self.tol
                )
            })
            .collect()
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference check of a scalar function of one variable.
pub fn scalar_grad_check(f: impl Fn(f64) -> f64, theta: f64, analytic: f64, h: f64) -> f64 {
    relative_error(analytic, (f(theta + h) - f(theta - h)) / (2.0 * h))
}

/// Builds a case for `mode` and checks its backpropagated gradient.
pub fn grad_check<F>(model_builder: F, mode: GateMode, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(GateMode) -> Result<GradCheckCase>,
{
    grad_check_case(&model_builder(mode)?, h, tol)
}

pub fn grad_check_case(case: &GradCheckCase, h: f64, tol: f64) -> Result<GradCheckReport> {
    check_with(case, &case.options(), h, tol, |_| {})
}

/// Like [`grad_check_case`] but lets `tamper` alter the analytic gradient
/// before comparison; used to confirm the check catches wrong gradients.
pub fn grad_check_tampered(
    case: &GradCheckCase,
    h: f64,
    tol: f64,
    tamper: impl FnOnce(&mut ModelGrads),
) -> Result<GradCheckReport> {
    check_with(case, &case.options(), h, tol, tamper)
}

pub(crate) fn check_with(
    case: &GradCheckCase,
    opts: &ForwardOptions,
    h: f64,
    tol: f64,
    tamper: impl FnOnce(&mut ModelGrads),
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step h must be positive, got {h}")));
    }
    let model = &case.model;
    model.validate()?;
    let out = forward_sequence_with(model, &case.window, &case.init, &mut RngState::new(case.seed), opts)?;
    let mut grads = backward_sequence(model, &out)?;
    tamper(&mut grads);
    let frozen = Frozen::from_cache(&out.caches);
    let cfg = &model.config;
    let (window, init) = (&case.window, &case.init);

    let plain = window_loss(&lift::<f64>(model), cfg, window, init, &frozen);
    let loss_gap = (plain - out.loss).abs();

    let mut params = lift::<DD>(model);
    let hh = DD::new(h);
    let two_h = DD::new(2.0 * h);
    let mut blocks = Vec::new();
    let mut worst = 0.0f64;
    for (ti, (name, analytic)) in grads.tensors().into_iter().enumerate() {
        let mut block = BlockError {
            block: name,
            max_rel_error: 0.0,
            index: 0,
            analytic: analytic.first().copied().unwrap_or(0.0),
            numeric: 0.0,
        };
        for (j, &a) in analytic.iter().enumerate() {
            let base = params[ti][j];
            params[ti][j] = base + hh;
            let up = window_loss(&params, cfg, window, init, &frozen);
            params[ti][j] = base - hh;
            let down = window_loss(&params, cfg, window, init, &frozen);
            params[ti][j] = base;
            let numeric = ((up - down) / two_h).to_f64();
            let e = relative_error(a, numeric);
            // NaN compares false, so test for it explicitly.
            if e > block.max_rel_error || e.is_nan() {
                block.max_rel_error = e;
                block.index = j;
                block.analytic = a;
                block.numeric = numeric;
            }
        }
        worst = if block.max_rel_error.is_nan() {
            f64::NAN
        } else {
            worst.max(block.max_rel_error)
        };
        blocks.push(block);
    }
    Ok(GradCheckReport {
        mode: cfg.gate_mode,
        h,
        tol,
        blocks,
        max_rel_error: worst,
        loss_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODES: [GateMode; 3] = [
        GateMode::Standard,
        GateMode::SharpenedSigmoid(0.2),
        GateMode::GumbelGate(0.9),
    ];

    #[test]
    fn quadratic_sanity() {
        let e = scalar_grad_check(|x| 3.0 * x * x, 0.7, 4.2, 1e-5);
        assert!(e < 1e-10, "{e}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 2e-12) - 1e-4).abs() < 1e-18);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_model_passes_for_every_mode_tied_and_untied() {
        for mode in MODES {
            for tied in [false, true] {
                let r = grad_check(|m| GradCheckCase::small(m, tied, 3), mode, 1e-5, 1e-6).unwrap();
                assert!(r.passed(), "{mode} tied={tied}: {:?}", r.blocks);
                assert!(r.loss_gap < 1e-13, "{}", r.loss_gap);
                assert_eq!(r.blocks.len(), 15);
            }
        }
    }

    #[test]
    fn evaluation_mode_gradients_pass() {
        for mode in MODES {
            let mut case = GradCheckCase::small(mode, false, 8).unwrap();
            case.training = false;
            let r = grad_check_case(&case, 1e-5, 1e-6).unwrap();
            assert!(r.passed(), "{mode}: {:?}", r.blocks);
        }
    }

    #[test]
    fn scaled_block_is_caught() {
        let case = GradCheckCase::small(GateMode::GumbelGate(0.9), false, 4).unwrap();
        let r = grad_check_tampered(&case, 1e-5, 1e-6, |g| {
            g.layers[0].w_hf.as_mut_slice().iter_mut().for_each(|v| *v *= 1.01)
        })
        .unwrap();
        assert!(!r.passed());
        let bad: Vec<&str> = r
            .blocks
            .iter()
            .filter(|b| b.max_rel_error >= 1e-6)
            .map(|b| b.block.as_str())
            .collect();
        assert_eq!(bad, vec!["layer0.w_hf"]);
    }

    #[test]
    fn nan_gradient_fails() {
        let case = GradCheckCase::small(GateMode::Standard, false, 5).unwrap();
        let r = grad_check_tampered(&case, 1e-5, 1e-6, |g| g.out_b.as_mut_slice()[0] = f64::NAN).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn csv_has_one_row_per_block() {
        let r = grad_check(|m| GradCheckCase::small(m, false, 6), GateMode::Standard, 1e-5, 1e-6).unwrap();
        let rows = r.csv_rows();
        assert_eq!(rows.len(), r.blocks.len());
        let cols = GradCheckReport::CSV_HEADER.split(',').count();
        assert!(rows.iter().all(|row| row.split(',').count() == cols));
        assert!(grad_check_case(&GradCheckCase::small(GateMode::Standard, false, 6).unwrap(), 0.0, 1e-6).is_err());
    }
}
