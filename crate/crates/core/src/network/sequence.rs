//! Window-level forward and backward passes.
//!
//! Each layer is processed over the whole window before the next: the
//! input projections of all positions are one matrix product, only the
//! recurrent product runs per step. Gate blocks are fused in the order
//! `[i, f, o, g]`.

use super::{BatchStream, LayerState, Model, ModelGrads, Window, PAD};
use crate::cell::{GateMode, LayerParams};
use crate::error::{Error, Result};
use crate::linalg::{gemm, kernels, Matrix, View};
use crate::sampling::RngState;

const NOISE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub training: bool,
    /// Evaluation only: input/forget gates become `1[σ(a/τ) ≥ 0.5]`.
    pub hard_gates: bool,
    /// Compute layer-0 projections through a per-token table when the
    /// vocabulary is smaller than the window.
    pub(crate) embedding_table: bool,
}

impl ForwardOptions {
    pub fn training() -> Self {
        ForwardOptions {
            training: true,
            hard_gates: false,
            embedding_table: true,
        }
    }

    pub fn eval() -> Self {
        ForwardOptions {
            training: false,
            ..Self::training()
        }
    }
}

/// Activations of one layer over a window, row `t·batch + b`.
#[derive(Clone, Debug)]
pub struct LayerCache {
    /// Layer input (`positions × input_dim`); empty for layer 0 when the
    /// embedding table path was used.
    pub input: Vec<f64>,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
    /// Gate activations `positions × 4H` in `[i, f, o, g]` order.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    /// Layer output before dropout.
    pub h: Vec<f64>,
    /// Logistic noise `positions × 2H` (`[i, f]`), when drawn.
    pub noise: Option<Vec<f64>>,
    /// Inverted-dropout mask applied to `h` before the next layer.
    pub dropout_mask: Option<Vec<f64>>,
    wx: Vec<f64>,
    wh: Vec<f64>,
    pub(crate) table: bool,
}

#[derive(Clone, Debug)]
pub struct SequenceCache {
    pub window: Window,
    pub layers: Vec<LayerCache>,
    /// Softmax outputs `positions × vocab`.
    pub probs: Vec<f64>,
    pub mode: GateMode,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Mean cross-entropy over scored positions.
    pub loss: f64,
    /// Summed cross-entropy over scored positions.
    pub total_nll: f64,
    pub n_targets: usize,
    /// Detached state after the last step, for the next window.
    pub final_state: Vec<LayerState>,
    pub caches: SequenceCache,
}

impl ForwardOutput {
    pub fn perplexity(&self) -> f64 {
        self.loss.exp()
    }
}

/// Packs the four gate blocks of a layer as `(W_x, W_h, b)` with `4H` rows.
fn pack(p: &LayerParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut wx = Vec::with_capacity(4 * p.w_xi.as_slice().len());
    let mut wh = Vec::with_capacity(4 * p.w_hi.as_slice().len());
    let mut b = Vec::with_capacity(4 * p.b_i.len());
    for (x, h, bias) in [
        (&p.w_xi, &p.w_hi, &p.b_i),
        (&p.w_xf, &p.w_hf, &p.b_f),
        (&p.w_xo, &p.w_ho, &p.b_o),
        (&p.w_xg, &p.w_hg, &p.b_g),
    ] {
        wx.extend_from_slice(x.as_slice());
        wh.extend_from_slice(h.as_slice());
        b.extend_from_slice(bias.as_slice());
    }
    (wx, wh, b)
}

fn unpack_into(g: &mut LayerParams, dwx: &[f64], dwh: &[f64], db: &[f64]) {
    let h = g.hidden_dim();
    let n = g.input_dim();
    let blocks = [
        (&mut g.w_xi, &mut g.w_hi, &mut g.b_i),
        (&mut g.w_xf, &mut g.w_hf, &mut g.b_f),
        (&mut g.w_xo, &mut g.w_ho, &mut g.b_o),
        (&mut g.w_xg, &mut g.w_hg, &mut g.b_g),
    ];
    for (k, (x, hh, b)) in blocks.into_iter().enumerate() {
        x.as_mut_slice().copy_from_slice(&dwx[k * h * n..(k + 1) * h * n]);
        hh.as_mut_slice().copy_from_slice(&dwh[k * h * h..(k + 1) * h * h]);
        b.as_mut_slice().copy_from_slice(&db[k * h..(k + 1) * h]);
    }
}

fn check_state(model: &Model, init: &[LayerState], batch: usize) -> Result<()> {
    let h = model.config.hidden_dim;
    if init.len() != model.config.num_layers {
        return Err(Error::shape(format!(
            "initial state has {} layers, model has {}",
            init.len(),
            model.config.num_layers
        )));
    }
    for (l, s) in init.iter().enumerate() {
        if s.h.shape() != (batch, h) || s.c.shape() != (batch, h) {
            return Err(Error::shape(format!(
                "layer {l} state is {}x{}, expected {batch}x{h}",
                s.h.rows(),
                s.h.cols()
            )));
        }
    }
    Ok(())
}

/// Forward pass over one window with default options for `training`.
pub fn forward_sequence(
    model: &Model,
    window: &Window,
    init: &[LayerState],
    rng: &mut RngState,
    training: bool,
) -> Result<ForwardOutput> {
    let opts = if training {
        ForwardOptions::training()
    } else {
        ForwardOptions::eval()
    };
    forward_sequence_with(model, window, init, rng, &opts)
}

/// Forward pass over one window. Training draws a single `u64` from `rng`
/// and derives all gate noise and dropout masks of the window from it.
pub fn forward_sequence_with(
    model: &Model,
    window: &Window,
    init: &[LayerState],
    rng: &mut RngState,
    opts: &ForwardOptions,
) -> Result<ForwardOutput> {
    let cfg = &model.config;
    window.check(cfg.vocab_size)?;
    check_state(model, init, window.batch)?;
    if opts.training && opts.hard_gates {
        return Err(Error::invalid("hard gates are an evaluation-only option"));
    }
    let (steps, batch) = (window.steps, window.batch);
    let n = steps * batch;
    let hd = cfg.hidden_dim;
    let g4 = 4 * hd;
    let mode = cfg.gate_mode;
    let tau = mode.tau();
    let stochastic = mode.is_stochastic(opts.training);
    let dropout = opts.training && cfg.dropout_p > 0.0;
    let streams = if stochastic || dropout {
        Some(RngState::new(rng.next_u64()))
    } else {
        None
    };

    let mut layers: Vec<LayerCache> = Vec::with_capacity(cfg.num_layers);
    let mut final_state = Vec::with_capacity(cfg.num_layers);
    for (l, params) in model.layers.iter().enumerate() {
        let in_dim = params.input_dim();
        let (wx, wh, bias) = pack(params);
        let mut pre = vec![0.0; n * g4];
        let table = l == 0 && opts.embedding_table && cfg.vocab_size < n;
        let input = if l == 0 {
            if table {
                let mut tab = vec![0.0; cfg.vocab_size * g4];
                gemm(
                    1.0,
                    model.embedding.view(),
                    View::new(&wx, g4, in_dim).t(),
                    0.0,
                    &mut tab,
                );
                for row in tab.chunks_exact_mut(g4) {
                    row.iter_mut().zip(&bias).for_each(|(v, b)| *v += b);
                }
                for (r, &tok) in window.inputs.iter().enumerate() {
                    let t = tok as usize;
                    pre[r * g4..(r + 1) * g4].copy_from_slice(&tab[t * g4..(t + 1) * g4]);
                }
                Vec::new()
            } else {
                let mut x = Vec::with_capacity(n * in_dim);
                for &tok in &window.inputs {
                    x.extend_from_slice(model.embedding.row(tok as usize));
                }
                x
            }
        } else {
            let below = &layers[l - 1];
            match &below.dropout_mask {
                Some(mask) => below.h.iter().zip(mask).map(|(h, m)| h * m).collect(),
                None => below.h.clone(),
            }
        };
        if !input.is_empty() {
            for row in pre.chunks_exact_mut(g4) {
                row.copy_from_slice(&bias);
            }
            gemm(
                1.0,
                View::new(&input, n, in_dim),
                View::new(&wx, g4, in_dim).t(),
                1.0,
                &mut pre,
            );
        }

        let h0 = init[l].h.as_slice().to_vec();
        let c0 = init[l].c.as_slice().to_vec();
        let mut gates = vec![0.0; n * g4];
        let mut c = vec![0.0; n * hd];
        let mut tanh_c = vec![0.0; n * hd];
        let mut h = vec![0.0; n * hd];
        let mut noise = stochastic.then(|| vec![0.0; n * 2 * hd]);
        let layer_streams = streams.as_ref().map(|s| s.derive2(NOISE_STREAM, l as u64));

        for t in 0..steps {
            let rows = t * batch..(t + 1) * batch;
            let (h_prev, c_prev): (&[f64], &[f64]) = if t == 0 {
                (&h0, &c0)
            } else {
                let prev = (t - 1) * batch * hd..t * batch * hd;
                (&h[prev.clone()], &c[prev])
            };
            let pre_t = &mut pre[rows.start * g4..rows.end * g4];
            gemm(
                1.0,
                View::new(h_prev, batch, hd),
                View::new(&wh, g4, hd).t(),
                1.0,
                pre_t,
            );
            if let (Some(noise), Some(s)) = (noise.as_mut(), layer_streams.as_ref()) {
                let mut step_rng = s.derive(t as u64);
                step_rng.fill_logistic(&mut noise[rows.start * 2 * hd..rows.end * 2 * hd]);
            }
            let c_prev = c_prev.to_vec();
            for b in 0..batch {
                let r = rows.start + b;
                let p = &pre[r * g4..(r + 1) * g4];
                let gt = &mut gates[r * g4..(r + 1) * g4];
                let (p_if, p_rest) = p.split_at(2 * hd);
                let (gt_if, gt_rest) = gt.split_at_mut(2 * hd);
                match noise.as_ref() {
                    Some(z) => kernels::sigmoid_noisy_into(p_if, &z[r * 2 * hd..(r + 1) * 2 * hd], tau, gt_if),
                    None => kernels::sigmoid_div_into(p_if, tau, gt_if),
                }
                if opts.hard_gates {
                    gt_if.iter_mut().for_each(|v| *v = if *v >= 0.5 { 1.0 } else { 0.0 });
                }
                kernels::sigmoid_into(&p_rest[..hd], &mut gt_rest[..hd]);
                kernels::tanh_into(&p_rest[hd..], &mut gt_rest[hd..]);
                let span = r * hd..(r + 1) * hd;
                kernels::lstm_update(
                    gt,
                    &c_prev[b * hd..(b + 1) * hd],
                    &mut c[span.clone()],
                    &mut tanh_c[span.clone()],
                    &mut h[span],
                );
            }
        }

        let last = (steps - 1) * batch * hd..n * hd;
        final_state.push(LayerState {
            h: Matrix::from_vec(batch, hd, h[last.clone()].to_vec())?,
            c: Matrix::from_vec(batch, hd, c[last].to_vec())?,
        });
        let dropout_mask = (dropout && l + 1 < cfg.num_layers).then(|| {
            let p = cfg.dropout_p;
            let keep = 1.0 / (1.0 - p);
            let mut r = streams
                .as_ref()
                .expect("dropout implies derived streams")
                .derive2(DROPOUT_STREAM, l as u64);
            let mut mask = vec![0.0; n * hd];
            r.fill_uniform(&mut mask);
            mask.iter_mut().for_each(|m| *m = if *m < p { 0.0 } else { keep });
            mask
        });
        layers.push(LayerCache {
            input,
            h0,
            c0,
            gates,
            c,
            tanh_c,
            h,
            noise,
            dropout_mask,
            wx,
            wh,
            table,
        });
    }

    let v = cfg.vocab_size;
    let top = &layers.last().expect("at least one layer").h;
    let mut probs = vec![0.0; n * v];
    for row in probs.chunks_exact_mut(v) {
        row.copy_from_slice(model.out_b.as_slice());
    }
    gemm(1.0, View::new(top, n, hd), model.out_w.view().t(), 1.0, &mut probs);
    let mut total_nll = 0.0;
    let mut n_targets = 0;
    for (r, row) in probs.chunks_exact_mut(v).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y = window.targets[r];
        let z_y = if y == PAD { 0.0 } else { row[y as usize] - max };
        let mut sum = 0.0;
        for z in row.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        if y != PAD {
            total_nll += sum.ln() - z_y;
            n_targets += 1;
        }
        let inv = 1.0 / sum;
        row.iter_mut().for_each(|z| *z *= inv);
    }
    if n_targets == 0 {
        return Err(Error::invalid("window has no scored positions"));
    }
    let loss = total_nll / n_targets as f64;

    Ok(ForwardOutput {
        loss,
        total_nll,
        n_targets,
        final_state,
        caches: SequenceCache {
            window: window.clone(),
            layers,
            probs,
            mode,
        },
    })
}

/// Exact gradients of the mean window loss, with the state entering the
/// window treated as a constant.
pub fn backward_sequence(model: &Model, out: &ForwardOutput) -> Result<ModelGrads> {
    let cfg = &model.config;
    let caches = &out.caches;
    let window = &caches.window;
    let (steps, batch) = (window.steps, window.batch);
    let n = steps * batch;
    let hd = cfg.hidden_dim;
    let g4 = 4 * hd;
    let v = cfg.vocab_size;
    if caches.layers.len() != cfg.num_layers || caches.probs.len() != n * v {
        return Err(Error::shape("forward caches do not match this model"));
    }
    let tau = caches.mode.tau();
    let mut grads = ModelGrads::zeros_like(model);

    let scale = 1.0 / out.n_targets as f64;
    let mut dlogits = caches.probs.clone();
    for (r, row) in dlogits.chunks_exact_mut(v).enumerate() {
        let y = window.targets[r];
        if y == PAD {
            row.fill(0.0);
        } else {
            row[y as usize] -= 1.0;
            row.iter_mut().for_each(|z| *z *= scale);
        }
    }
    let top = &caches.layers[cfg.num_layers - 1].h;
    gemm(
        1.0,
        View::new(&dlogits, n, v).t(),
        View::new(top, n, hd),
        0.0,
        grads.out_w.as_mut_slice(),
    );
    for row in dlogits.chunks_exact(v) {
        grads
            .out_b
            .as_mut_slice()
            .iter_mut()
            .zip(row)
            .for_each(|(g, d)| *g += d);
    }
    let mut d_above = vec![0.0; n * hd];
    gemm(1.0, View::new(&dlogits, n, v), model.out_w.view(), 0.0, &mut d_above);

    for l in (0..cfg.num_layers).rev() {
        let lc = &caches.layers[l];
        let in_dim = model.layers[l].input_dim();
        let dh_out = d_above;
        let mut dpre = vec![0.0; n * g4];
        let mut dh_next = vec![0.0; batch * hd];
        let mut dc_next = vec![0.0; batch * hd];
        for t in (0..steps).rev() {
            for b in 0..batch {
                let r = t * batch + b;
                let gt = &lc.gates[r * g4..(r + 1) * g4];
                let dp = &mut dpre[r * g4..(r + 1) * g4];
                for k in 0..hd {
                    let (i, f, o, g) = (gt[k], gt[hd + k], gt[2 * hd + k], gt[3 * hd + k]);
                    let tc = lc.tanh_c[r * hd + k];
                    let c_prev = if t == 0 {
                        lc.c0[b * hd + k]
                    } else {
                        lc.c[(r - batch) * hd + k]
                    };
                    let dh = dh_out[r * hd + k] + dh_next[b * hd + k];
                    let dc = dc_next[b * hd + k] + dh * o * (1.0 - tc * tc);
                    dp[k] = dc * g * i * (1.0 - i) / tau;
                    dp[hd + k] = dc * c_prev * f * (1.0 - f) / tau;
                    dp[2 * hd + k] = dh * tc * o * (1.0 - o);
                    dp[3 * hd + k] = dc * i * (1.0 - g * g);
                    dc_next[b * hd + k] = dc * f;
                }
            }
            if t > 0 {
                let dp_t = &dpre[t * batch * g4..(t + 1) * batch * g4];
                gemm(
                    1.0,
                    View::new(dp_t, batch, g4),
                    View::new(&lc.wh, g4, hd),
                    0.0,
                    &mut dh_next,
                );
            }
        }

        let mut dwh = vec![0.0; g4 * hd];
        gemm(
            1.0,
            View::new(&dpre[..batch * g4], batch, g4).t(),
            View::new(&lc.h0, batch, hd),
            0.0,
            &mut dwh,
        );
        if steps > 1 {
            gemm(
                1.0,
                View::new(&dpre[batch * g4..], n - batch, g4).t(),
                View::new(&lc.h[..(n - batch) * hd], n - batch, hd),
                1.0,
                &mut dwh,
            );
        }
        let mut db = vec![0.0; g4];
        for row in dpre.chunks_exact(g4) {
            db.iter_mut().zip(row).for_each(|(a, d)| *a += d);
        }
        let mut dwx = vec![0.0; g4 * in_dim];
        let emb = grads.embedding.as_mut_slice();
        if lc.table {
            let mut per_token = vec![0.0; v * g4];
            for (r, &tok) in window.inputs.iter().enumerate() {
                let dst = &mut per_token[tok as usize * g4..(tok as usize + 1) * g4];
                dst.iter_mut()
                    .zip(&dpre[r * g4..(r + 1) * g4])
                    .for_each(|(a, d)| *a += d);
            }
            gemm(
                1.0,
                View::new(&per_token, v, g4).t(),
                model.embedding.view(),
                0.0,
                &mut dwx,
            );
            gemm(
                1.0,
                View::new(&per_token, v, g4),
                View::new(&lc.wx, g4, in_dim),
                1.0,
                emb,
            );
            d_above = Vec::new();
        } else {
            gemm(
                1.0,
                View::new(&dpre, n, g4).t(),
                View::new(&lc.input, n, in_dim),
                0.0,
                &mut dwx,
            );
            let mut dx = vec![0.0; n * in_dim];
            gemm(
                1.0,
                View::new(&dpre, n, g4),
                View::new(&lc.wx, g4, in_dim),
                0.0,
                &mut dx,
            );
            if l == 0 {
                for (r, &tok) in window.inputs.iter().enumerate() {
                    let t = tok as usize;
                    emb[t * in_dim..(t + 1) * in_dim]
                        .iter_mut()
                        .zip(&dx[r * in_dim..(r + 1) * in_dim])
                        .for_each(|(a, d)| *a += d);
                }
                d_above = Vec::new();
            } else {
                if let Some(mask) = &caches.layers[l - 1].dropout_mask {
                    dx.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
                }
                d_above = dx;
            }
        }
        unpack_into(&mut grads.layers[l], &dwx, &dwh, &db);
    }

    if cfg.tie_embeddings {
        let ow = std::mem::replace(&mut grads.out_w, Matrix::zeros(v, hd));
        grads
            .embedding
            .as_mut_slice()
            .iter_mut()
            .zip(ow.as_slice())
            .for_each(|(a, b)| *a += b);
    }
    Ok(grads)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Number of contiguous segments evaluated side by side.
    pub batch: usize,
    /// Steps per window; state carries across windows.
    pub window: usize,
    pub hard_gates: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            batch: 20,
            window: 35,
            hard_gates: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub total_nll: f64,
    pub n_targets: usize,
}

impl EvalResult {
    pub fn mean_nll(&self) -> f64 {
        self.total_nll / self.n_targets as f64
    }

    pub fn perplexity(&self) -> f64 {
        self.mean_nll().exp()
    }
}

/// Deterministic evaluation-mode cross-entropy over every next-token pair
/// of `tokens`.
pub fn evaluate(model: &Model, tokens: &[u32], opts: &EvalOptions) -> Result<EvalResult> {
    if tokens.len() < 2 {
        return Err(Error::invalid("evaluation stream needs at least two tokens"));
    }
    let stream = BatchStream::new(tokens, opts.batch, model.config.vocab_size)?;
    let fopts = ForwardOptions {
        hard_gates: opts.hard_gates,
        ..ForwardOptions::eval()
    };
    let mut state = model.initial_state(stream.batch_size());
    let mut rng = RngState::new(0);
    let mut total_nll = 0.0;
    let mut n_targets = 0;
    for w in stream.windows(opts.window) {
        if w.num_targets() == 0 {
            continue;
        }
        let out = forward_sequence_with(model, &w, &state, &mut rng, &fopts)?;
        total_nll += out.total_nll;
        n_targets += out.n_targets;
        state = out.final_state;
    }
    Ok(EvalResult { total_nll, n_targets })
}

/// `exp` of the mean evaluation cross-entropy over `tokens`.
pub fn perplexity_eval(model: &Model, tokens: &[u32], opts: &EvalOptions) -> Result<f64> {
    evaluate(model, tokens, opts).map(|r| r.perplexity())
}
