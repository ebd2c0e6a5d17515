//! Single-timestep LSTM layer with switchable input/forget gate behaviour.
//!
//! ```text
//! i = γ(W_xi x + W_hi h + b_i)    f = γ(W_xf x + W_hf h + b_f)
//! o = σ(W_xo x + W_ho h + b_o)    g = tanh(W_xg x + W_hg h + b_g)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! where `γ` is `σ(a)`, `σ(a/τ)` or `σ((a + n)/τ)` with logistic noise `n`
//! depending on the [`GateMode`]. The output gate and candidate never see
//! the temperature.

use crate::error::{Error, Result};
use crate::linalg::{sigmoid_scalar, tanh_scalar, Matrix, Vector};
use crate::sampling::RngState;

/// Input/forget gate behaviour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateMode {
    Standard,
    SharpenedSigmoid(f64),
    GumbelGate(f64),
}

impl GateMode {
    /// Temperature applied to input/forget preactivations (1 for `Standard`).
    pub fn tau(&self) -> f64 {
        match *self {
            GateMode::Standard => 1.0,
            GateMode::SharpenedSigmoid(t) | GateMode::GumbelGate(t) => t,
        }
    }

    /// Tag stored in checkpoints.
    pub fn tag(&self) -> u32 {
        match self {
            GateMode::Standard => 0,
            GateMode::SharpenedSigmoid(_) => 1,
            GateMode::GumbelGate(_) => 2,
        }
    }

    pub fn from_tag(tag: u32, tau: f64) -> Result<GateMode> {
        let mode = match tag {
            0 => GateMode::Standard,
            1 => GateMode::SharpenedSigmoid(tau),
            2 => GateMode::GumbelGate(tau),
            _ => return Err(Error::invalid(format!("unknown gate mode tag {tag}"))),
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tau();
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("gate temperature must be positive, got {t}")))
        }
    }

    /// Whether a forward pass in this mode consumes logistic noise.
    pub fn is_stochastic(&self, training: bool) -> bool {
        training && matches!(self, GateMode::GumbelGate(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateMode::Standard => "standard",
            GateMode::SharpenedSigmoid(_) => "sharpened",
            GateMode::GumbelGate(_) => "gumbel",
        }
    }
}

impl std::fmt::Display for GateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GateMode::Standard => write!(f, "standard"),
            GateMode::SharpenedSigmoid(t) => write!(f, "sharpened(tau={t})"),
            GateMode::GumbelGate(t) => write!(f, "gumbel(tau={t})"),
        }
    }
}

/// Input/forget gate value from a preactivation and (possibly zero) noise.
///
/// Without noise this is `σ(a/τ)`, so Gumbel evaluation and the sharpened
/// sigmoid share one code path and agree bit for bit.
#[inline]
pub fn temperature_gate(preact: f64, noise: Option<f64>, tau: f64) -> f64 {
    match noise {
        Some(n) => sigmoid_scalar((preact + n) / tau),
        None => sigmoid_scalar(preact / tau),
    }
}

/// Names of the twelve tensors of a layer, in checkpoint order.
pub const PARAM_NAMES: [&str; 12] = [
    "w_xi", "w_hi", "b_i", "w_xf", "w_hf", "b_f", "w_xo", "w_ho", "b_o", "w_xg", "w_hg", "b_g",
];

/// Weights and biases of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i: Vector,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Vector,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Vector,
    pub w_xg: Matrix,
    pub w_hg: Matrix,
    pub b_g: Vector,
}

impl LayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> LayerParams {
        let wx = || Matrix::zeros(hidden_dim, input_dim);
        let wh = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Vector::zeros(hidden_dim);
        LayerParams {
            w_xi: wx(),
            w_hi: wh(),
            b_i: b(),
            w_xf: wx(),
            w_hf: wh(),
            b_f: b(),
            w_xo: wx(),
            w_ho: wh(),
            b_o: b(),
            w_xg: wx(),
            w_hg: wh(),
            b_g: b(),
        }
    }

    /// Weights uniform in `[-1/√hidden, 1/√hidden]`, forget bias 1, other
    /// biases 0.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut RngState) -> LayerParams {
        let mut p = LayerParams::zeros(input_dim, hidden_dim);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        for (name, t) in p.tensors_mut() {
            if name.starts_with('w') {
                for v in t.iter_mut() {
                    *v = bound * (2.0 * rng.uniform() - 1.0);
                }
            }
        }
        p.b_f = Vector::filled(hidden_dim, 1.0);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xi.rows()
    }

    pub fn num_params(&self) -> usize {
        let (h, n) = (self.hidden_dim(), self.input_dim());
        4 * (h * n + h * h + h)
    }

    /// All tensors in checkpoint order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 12] {
        [
            ("w_xi", self.w_xi.as_slice()),
            ("w_hi", self.w_hi.as_slice()),
            ("b_i", self.b_i.as_slice()),
            ("w_xf", self.w_xf.as_slice()),
            ("w_hf", self.w_hf.as_slice()),
            ("b_f", self.b_f.as_slice()),
            ("w_xo", self.w_xo.as_slice()),
            ("w_ho", self.w_ho.as_slice()),
            ("b_o", self.b_o.as_slice()),
            ("w_xg", self.w_xg.as_slice()),
            ("w_hg", self.w_hg.as_slice()),
            ("b_g", self.b_g.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 12] {
        [
            ("w_xi", self.w_xi.as_mut_slice()),
            ("w_hi", self.w_hi.as_mut_slice()),
            ("b_i", self.b_i.as_mut_slice()),
            ("w_xf", self.w_xf.as_mut_slice()),
            ("w_hf", self.w_hf.as_mut_slice()),
            ("b_f", self.b_f.as_mut_slice()),
            ("w_xo", self.w_xo.as_mut_slice()),
            ("w_ho", self.w_ho.as_mut_slice()),
            ("b_o", self.b_o.as_mut_slice()),
            ("w_xg", self.w_xg.as_mut_slice()),
            ("w_hg", self.w_hg.as_mut_slice()),
            ("b_g", self.b_g.as_mut_slice()),
        ]
    }

    /// Checks every tensor against the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        let (h, n) = (self.hidden_dim(), self.input_dim());
        let mats = [
            ("w_xi", &self.w_xi, n),
            ("w_hi", &self.w_hi, h),
            ("w_xf", &self.w_xf, n),
            ("w_hf", &self.w_hf, h),
            ("w_xo", &self.w_xo, n),
            ("w_ho", &self.w_ho, h),
            ("w_xg", &self.w_xg, n),
            ("w_hg", &self.w_hg, h),
        ];
        for (name, m, cols) in mats {
            if m.shape() != (h, cols) {
                return Err(Error::shape(format!(
                    "{name} is {}x{}, expected {h}x{cols}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        for (name, b) in [
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("b_g", &self.b_g),
        ] {
            if b.len() != h {
                return Err(Error::shape(format!("{name} has length {}, expected {h}", b.len())));
            }
        }
        Ok(())
    }
}

/// Everything one forward step computed, kept for the backward step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    pub x_t: Vector,
    pub h_prev: Vector,
    pub c_prev: Vector,
    pub preact_i: Vector,
    pub preact_f: Vector,
    pub preact_o: Vector,
    pub preact_g: Vector,
    pub i_t: Vector,
    pub f_t: Vector,
    pub o_t: Vector,
    pub g_t: Vector,
    pub c_t: Vector,
    pub h_t: Vector,
    /// Logistic noise used for the input gate; zeros when none was drawn.
    pub noise_i: Vector,
    pub noise_f: Vector,
    /// Whether the noise above was actually applied.
    pub noisy: bool,
}

/// Gradients for one step: parameter gradients in `params` plus the
/// gradients flowing into the step's inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub params: LayerParams,
    pub d_x: Vector,
    pub d_h_prev: Vector,
    pub d_c_prev: Vector,
}

fn check_len(name: &str, v: &Vector, want: usize) -> Result<()> {
    if v.len() == want {
        Ok(())
    } else {
        Err(Error::shape(format!("{name} has length {}, expected {want}", v.len())))
    }
}

fn preact(wx: &Matrix, wh: &Matrix, b: &Vector, x: &Vector, h: &Vector) -> Result<Vector> {
    let a = wx.matvec(x)?;
    let r = wh.matvec(h)?;
    Ok(Vector::from(
        (0..b.len()).map(|k| a[k] + r[k] + b[k]).collect::<Vec<_>>(),
    ))
}

/// One forward step. Gumbel mode in training draws input-gate noise first,
/// then forget-gate noise, from `rng`.
pub fn step_forward(
    params: &LayerParams,
    mode: GateMode,
    x_t: &Vector,
    h_prev: &Vector,
    c_prev: &Vector,
    rng: &mut RngState,
    training: bool,
) -> Result<(Vector, Vector, StepCache)> {
    let h = params.hidden_dim();
    let (noise_i, noise_f, noisy) = if mode.is_stochastic(training) {
        let mut ni = Vector::zeros(h);
        let mut nf = Vector::zeros(h);
        rng.fill_logistic(ni.as_mut_slice());
        rng.fill_logistic(nf.as_mut_slice());
        (ni, nf, true)
    } else {
        (Vector::zeros(h), Vector::zeros(h), false)
    };
    step_forward_with_noise(params, mode, x_t, h_prev, c_prev, &noise_i, &noise_f, noisy)
}

/// Forward step with explicit noise, used to replay a cached step.
/// `noisy == false` ignores the noise vectors.
#[allow(clippy::too_many_arguments)]
pub fn step_forward_with_noise(
    params: &LayerParams,
    mode: GateMode,
    x_t: &Vector,
    h_prev: &Vector,
    c_prev: &Vector,
    noise_i: &Vector,
    noise_f: &Vector,
    noisy: bool,
) -> Result<(Vector, Vector, StepCache)> {
    mode.validate()?;
    params.validate()?;
    let h = params.hidden_dim();
    check_len("x_t", x_t, params.input_dim())?;
    check_len("h_prev", h_prev, h)?;
    check_len("c_prev", c_prev, h)?;
    check_len("noise_i", noise_i, h)?;
    check_len("noise_f", noise_f, h)?;

    let p = params;
    let preact_i = preact(&p.w_xi, &p.w_hi, &p.b_i, x_t, h_prev)?;
    let preact_f = preact(&p.w_xf, &p.w_hf, &p.b_f, x_t, h_prev)?;
    let preact_o = preact(&p.w_xo, &p.w_ho, &p.b_o, x_t, h_prev)?;
    let preact_g = preact(&p.w_xg, &p.w_hg, &p.b_g, x_t, h_prev)?;

    let tau = mode.tau();
    let gate = |a: &Vector, n: &Vector| {
        Vector::from(
            (0..h)
                .map(|k| temperature_gate(a[k], noisy.then(|| n[k]), tau))
                .collect::<Vec<_>>(),
        )
    };
    let i_t = gate(&preact_i, noise_i);
    let f_t = gate(&preact_f, noise_f);
    let o_t = preact_o.map(sigmoid_scalar);
    let g_t = preact_g.map(tanh_scalar);
    let c_t = Vector::from((0..h).map(|k| f_t[k] * c_prev[k] + i_t[k] * g_t[k]).collect::<Vec<_>>());
    let h_t = Vector::from((0..h).map(|k| o_t[k] * tanh_scalar(c_t[k])).collect::<Vec<_>>());

    let cache = StepCache {
        x_t: x_t.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        preact_i,
        preact_f,
        preact_o,
        preact_g,
        i_t,
        f_t,
        o_t,
        g_t,
        c_t: c_t.clone(),
        h_t: h_t.clone(),
        noise_i: if noisy { noise_i.clone() } else { Vector::zeros(h) },
        noise_f: if noisy { noise_f.clone() } else { Vector::zeros(h) },
        noisy,
    };
    Ok((h_t, c_t, cache))
}

/// Recomputes a step from the inputs and noise stored in `cache`.
pub fn replay_step(params: &LayerParams, mode: GateMode, cache: &StepCache) -> Result<StepCache> {
    step_forward_with_noise(
        params,
        mode,
        &cache.x_t,
        &cache.h_prev,
        &cache.c_prev,
        &cache.noise_i,
        &cache.noise_f,
        cache.noisy,
    )
    .map(|(_, _, c)| c)
}

/// Backward step given upstream gradients w.r.t. `h_t` and `c_t`.
pub fn step_backward(
    params: &LayerParams,
    mode: GateMode,
    cache: &StepCache,
    d_h: &Vector,
    d_c: &Vector,
) -> Result<LayerGrads> {
    params.validate()?;
    let h = params.hidden_dim();
    let n = params.input_dim();
    check_len("d_h", d_h, h)?;
    check_len("d_c", d_c, h)?;
    check_len("cache.x_t", &cache.x_t, n)?;
    check_len("cache.c_t", &cache.c_t, h)?;

    let tau = mode.tau();
    let mut dp_i = Vector::zeros(h);
    let mut dp_f = Vector::zeros(h);
    let mut dp_o = Vector::zeros(h);
    let mut dp_g = Vector::zeros(h);
    let mut d_c_prev = Vector::zeros(h);
    for k in 0..h {
        let (i, f, o, g) = (cache.i_t[k], cache.f_t[k], cache.o_t[k], cache.g_t[k]);
        let tc = tanh_scalar(cache.c_t[k]);
        let dc = d_c[k] + d_h[k] * o * (1.0 - tc * tc);
        dp_o[k] = d_h[k] * tc * o * (1.0 - o);
        dp_i[k] = dc * g * i * (1.0 - i) / tau;
        dp_f[k] = dc * cache.c_prev[k] * f * (1.0 - f) / tau;
        dp_g[k] = dc * i * (1.0 - g * g);
        d_c_prev[k] = dc * f;
    }

    let mut grads = LayerParams::zeros(n, h);
    let mut d_x = Vector::zeros(n);
    let mut d_h_prev = Vector::zeros(h);
    let blocks = [
        (&dp_i, &params.w_xi, &params.w_hi),
        (&dp_f, &params.w_xf, &params.w_hf),
        (&dp_o, &params.w_xo, &params.w_ho),
        (&dp_g, &params.w_xg, &params.w_hg),
    ];
    for (dp, wx, wh) in blocks {
        let ax = wx.matvec_t(dp)?;
        let ah = wh.matvec_t(dp)?;
        for j in 0..n {
            d_x[j] += ax[j];
        }
        for j in 0..h {
            d_h_prev[j] += ah[j];
        }
    }
    let g = &mut grads;
    for (dp, gx, gh, gb) in [
        (&dp_i, &mut g.w_xi, &mut g.w_hi, &mut g.b_i),
        (&dp_f, &mut g.w_xf, &mut g.w_hf, &mut g.b_f),
        (&dp_o, &mut g.w_xo, &mut g.w_ho, &mut g.b_o),
        (&dp_g, &mut g.w_xg, &mut g.w_hg, &mut g.b_g),
    ] {
        gx.add_outer(dp, &cache.x_t)?;
        gh.add_outer(dp, &cache.h_prev)?;
        *gb = dp.clone();
    }

    Ok(LayerGrads {
        params: grads,
        d_x,
        d_h_prev,
        d_c_prev,
    })
}
