//! Post-training compression of the input- and forget-gate parameters.
//!
//! Round and RoundClip quantize `w_x*`, `w_h*` and `b_*` of both gates in
//! every layer. LowRank replaces each of the four gate matrices by its best
//! rank-`k` approximation and leaves biases alone. Everything else in the
//! model is never touched.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{svd, truncate_rank, Matrix};
use crate::network::{evaluate, EvalOptions, Model};

/// Gate tensors quantized by Round and RoundClip.
pub const QUANTIZED_BLOCKS: [&str; 6] = ["w_xi", "w_hi", "b_i", "w_xf", "w_hf", "b_f"];
/// Gate matrices replaced by LowRank.
pub const LOW_RANK_BLOCKS: [&str; 4] = ["w_xi", "w_hi", "w_xf", "w_hf"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompressionSpec {
    Round { r: f64 },
    RoundClip { r: f64, c: f64 },
    LowRank { k: usize },
}

impl CompressionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CompressionSpec::Round { r } => check_step(r),
            CompressionSpec::RoundClip { r, c } => {
                check_step(r)?;
                check_clip(r, c)
            }
            CompressionSpec::LowRank { k: 0 } => Err(Error::invalid("rank k must be at least 1")),
            CompressionSpec::LowRank { .. } => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CompressionSpec::Round { .. } => "round",
            CompressionSpec::RoundClip { .. } => "roundclip",
            CompressionSpec::LowRank { .. } => "lowrank",
        }
    }

    /// Parameters as `name=value` pairs separated by `;`.
    pub fn params(&self) -> String {
        match *self {
            CompressionSpec::Round { r } => format!("r={r}"),
            CompressionSpec::RoundClip { r, c } => format!("r={r};c={c}"),
            CompressionSpec::LowRank { k } => format!("k={k}"),
        }
    }

    /// Applies the spec to a copy of `model`.
    pub fn apply(&self, model: &Model) -> Result<Model> {
        match *self {
            CompressionSpec::Round { r } => apply_round_clip(model, r, 0.0, false),
            CompressionSpec::RoundClip { r, c } => apply_round_clip(model, r, c, true),
            CompressionSpec::LowRank { k } => apply_low_rank(model, k),
        }
    }
}

impl fmt::Display for CompressionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind(), self.params().replace(';', ","))
    }
}

fn check_step(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("rounding step r must be positive, got {r}")))
    }
}

fn check_clip(r: f64, c: f64) -> Result<()> {
    let ratio = c / r;
    if !(c > 0.0 && c.is_finite()) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::invalid(format!(
            "clip c = {c} must be a positive multiple of r = {r}"
        )));
    }
    Ok(())
}

/// `round(x / r) · r`, ties away from zero. Never returns `-0.0`.
pub fn round_r(x: f64, r: f64) -> f64 {
    (x / r).round() * r + 0.0
}

/// `x` clamped to `[−c, c]`.
pub fn clip_c(x: f64, c: f64) -> f64 {
    x.clamp(-c, c)
}

/// Rounds every quantized gate tensor to the `r` grid, then clamps to
/// `[−c, c]` when `with_clip` is set.
pub fn apply_round_clip(model: &Model, r: f64, c: f64, with_clip: bool) -> Result<Model> {
    check_step(r)?;
    if with_clip {
        check_clip(r, c)?;
    }
    let mut out = model.clone();
    for layer in &mut out.layers {
        for (name, t) in layer.tensors_mut() {
            if QUANTIZED_BLOCKS.contains(&name) {
                for v in t.iter_mut() {
                    let q = round_r(*v, r);
                    *v = if with_clip { clip_c(q, c) } else { q };
                }
            }
        }
    }
    Ok(out)
}

/// Per-matrix outcome of a rank truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankBlock {
    /// `layer{l}.{name}`.
    pub block: String,
    pub rows: usize,
    pub cols: usize,
    pub rank_before: usize,
    pub rank_after: usize,
    /// Frobenius norm of the change.
    pub error: f64,
    /// `sqrt` of the discarded squared singular values.
    pub tail_energy: f64,
}

impl LowRankBlock {
    /// Stored-value ratio of the factored form, `(m·k + k + k·n)/(m·n)`.
    pub fn rate(&self, k: usize) -> f64 {
        (self.rows * k + k + k * self.cols) as f64 / (self.rows * self.cols) as f64
    }
}

/// Singular values above `max(m, n)·ε·s₀` count toward the rank.
pub fn numerical_rank(m: &Matrix) -> Result<usize> {
    let d = svd(m)?;
    let s = d.s.as_slice();
    let tol = s.first().copied().unwrap_or(0.0) * m.rows().max(m.cols()) as f64 * f64::EPSILON;
    Ok(s.iter().filter(|&&v| v > tol).count())
}

pub fn apply_low_rank(model: &Model, k: usize) -> Result<Model> {
    apply_low_rank_report(model, k).map(|(m, _)| m)
}

/// [`apply_low_rank`] plus per-matrix ranks and errors.
pub fn apply_low_rank_report(model: &Model, k: usize) -> Result<(Model, Vec<LowRankBlock>)> {
    let mut out = model.clone();
    let mut blocks = Vec::new();
    for (l, layer) in out.layers.iter_mut().enumerate() {
        for (name, m) in [
            ("w_xi", &mut layer.w_xi),
            ("w_hi", &mut layer.w_hi),
            ("w_xf", &mut layer.w_xf),
            ("w_hf", &mut layer.w_hf),
        ] {
            let (rows, cols) = m.shape();
            if k == 0 || k > rows.min(cols) {
                return Err(Error::invalid(format!(
                    "rank {k} outside 1..={} for layer{l}.{name} ({rows}x{cols})",
                    rows.min(cols)
                )));
            }
            let d = svd(m)?;
            let s = d.s.as_slice();
            let tol = s.first().copied().unwrap_or(0.0) * rows.max(cols) as f64 * f64::EPSILON;
            let rank_before = s.iter().filter(|&&v| v > tol).count();
            let tail_energy = s[k..].iter().fold(0.0, |acc, v| acc + v * v).sqrt();
            let approx = truncate_rank(&d, k)?;
            let error = m
                .as_slice()
                .iter()
                .zip(approx.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            *m = approx;
            blocks.push(LowRankBlock {
                block: format!("layer{l}.{name}"),
                rows,
                cols,
                rank_before,
                rank_after: rank_before.min(k),
                error,
                tail_energy,
            });
        }
    }
    Ok((out, blocks))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressionReport {
    pub spec: CompressionSpec,
    pub ppl_before: f64,
    pub ppl_after: f64,
    /// `ppl_after − ppl_before`.
    pub delta: f64,
    /// Distinct quantized values across all targeted tensors (Round and
    /// RoundClip only), ascending.
    pub support_values: Option<Vec<f64>>,
    /// Largest numerical rank over the targeted matrices (LowRank only).
    pub rank_before: Option<usize>,
    pub rank_after: Option<usize>,
    /// Stored-value ratio of the factored gate matrices (LowRank only).
    pub rate: Option<f64>,
}

impl CompressionReport {
    pub const CSV_HEADER: &'static str = "kind,params,ppl_before,ppl_after,delta";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.spec.kind(),
            self.spec.params(),
            self.ppl_before,
            self.ppl_after,
            self.delta
        )
    }
}

/// Distinct values of the quantized gate tensors of `model`.
pub fn gate_support(model: &Model) -> Vec<f64> {
    let mut vals: Vec<f64> = model
        .layers
        .iter()
        .flat_map(|layer| {
            layer
                .tensors()
                .into_iter()
                .filter(|(name, _)| QUANTIZED_BLOCKS.contains(name))
                .flat_map(|(_, t)| t.to_vec())
                .collect::<Vec<f64>>()
        })
        .collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    vals
}

/// Compresses `model` and measures evaluation perplexity on `tokens` before
/// and after.
pub fn compress_and_report(
    model: &Model,
    spec: &CompressionSpec,
    tokens: &[u32],
    opts: &EvalOptions,
) -> Result<(Model, CompressionReport)> {
    spec.validate()?;
    let before = evaluate(model, tokens, opts)?.perplexity();
    compress_with_baseline(model, spec, tokens, opts, before)
}

fn compress_with_baseline(
    model: &Model,
    spec: &CompressionSpec,
    tokens: &[u32],
    opts: &EvalOptions,
    ppl_before: f64,
) -> Result<(Model, CompressionReport)> {
    let (compressed, support, ranks, rate) = match *spec {
        CompressionSpec::LowRank { k } => {
            let (m, blocks) = apply_low_rank_report(model, k)?;
            let before = blocks.iter().map(|b| b.rank_before).max();
            let after = blocks.iter().map(|b| b.rank_after).max();
            let stored: f64 = blocks.iter().map(|b| b.rate(k) * (b.rows * b.cols) as f64).sum();
            let dense: usize = blocks.iter().map(|b| b.rows * b.cols).sum();
            (m, None, (before, after), Some(stored / dense as f64))
        }
        _ => {
            let m = spec.apply(model)?;
            let support = gate_support(&m);
            (m, Some(support), (None, None), None)
        }
    };
    let ppl_after = evaluate(&compressed, tokens, opts)?.perplexity();
    Ok((
        compressed,
        CompressionReport {
            spec: *spec,
            ppl_before,
            ppl_after,
            delta: ppl_after - ppl_before,
            support_values: support,
            rank_before: ranks.0,
            rank_after: ranks.1,
            rate,
        },
    ))
}

/// Applies every spec to both models and reports each pair `(a, b)`.
pub fn compare_under_compression(
    model_a: &Model,
    model_b: &Model,
    specs: &[CompressionSpec],
    tokens: &[u32],
    opts: &EvalOptions,
) -> Result<Vec<(CompressionReport, CompressionReport)>> {
    if model_a.config.vocab_size != model_b.config.vocab_size {
        return Err(Error::invalid(format!(
            "models have different vocabularies ({} and {} tokens)",
            model_a.config.vocab_size, model_b.config.vocab_size
        )));
    }
    for s in specs {
        s.validate()?;
    }
    let base_a = evaluate(model_a, tokens, opts)?.perplexity();
    let base_b = evaluate(model_b, tokens, opts)?.perplexity();
    specs
        .iter()
        .map(|s| {
            let (_, ra) = compress_with_baseline(model_a, s, tokens, opts, base_a)?;
            let (_, rb) = compress_with_baseline(model_b, s, tokens, opts, base_b)?;
            Ok((ra, rb))
        })
        .collect()
}

/// CSV for [`compare_under_compression`]: one row per model and spec.
pub fn comparison_csv(labels: (&str, &str), pairs: &[(CompressionReport, CompressionReport)]) -> String {
    let mut out = format!("model,{}\n", CompressionReport::CSV_HEADER);
    for (a, b) in pairs {
        out.push_str(&format!("{},{}\n", labels.0, a.csv_row()));
        out.push_str(&format!("{},{}\n", labels.1, b.csv_row()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::GateMode;
    use crate::network::ModelConfig;
    use crate::sampling::RngState;
    use proptest::prelude::*;

    fn model(seed: u64, scale: f64) -> Model {
        let cfg = ModelConfig {
            vocab_size: 7,
            embed_dim: 6,
            hidden_dim: 6,
            num_layers: 2,
            gate_mode: GateMode::GumbelGate(0.9),
            tie_embeddings: false,
            dropout_p: 0.0,
        };
        let mut m = Model::init(cfg, &mut RngState::new(seed)).unwrap();
        for (_, t) in m.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= scale);
        }
        m
    }

    fn hash_untouched(m: &Model, keep: &[&str]) -> Vec<u64> {
        m.tensors()
            .into_iter()
            .filter(|(name, _)| !keep.iter().any(|k| name.ends_with(&format!(".{k}"))))
            .flat_map(|(_, t)| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(round_r(0.0, 0.2), 0.0);
        assert_eq!(round_r(0.27, 0.2), 0.2);
        assert_eq!(round_r(0.74, 0.5), 0.5);
        assert_eq!(round_r(0.25, 0.5), 0.5);
        assert_eq!(round_r(-0.25, 0.5), -0.5);
        assert_eq!(round_r(-0.01, 0.2).to_bits(), 0.0f64.to_bits());
        assert_eq!(clip_c(0.3, 0.4), 0.3);
        assert_eq!(clip_c(0.7, 0.4), 0.4);
        assert_eq!(clip_c(-3.2, 1.0), -1.0);
    }

    #[test]
    fn supports_match_stated_grids() {
        for (r, c, grid) in [
            (0.2, 0.4, [0.0, 0.2, -0.2, 0.4, -0.4]),
            (0.5, 1.0, [0.0, 0.5, -0.5, 1.0, -1.0]),
        ] {
            let m = model(1, 3.0);
            let q = apply_round_clip(&m, r, c, true).unwrap();
            let support = gate_support(&q);
            assert!(support.iter().all(|v| grid.contains(v)), "{support:?}");
            assert!(support.len() <= (2.0 * c / r) as usize + 1);
            let again = apply_round_clip(&q, r, c, true).unwrap();
            assert_eq!(hash_untouched(&again, &[]), hash_untouched(&q, &[]));
            assert_eq!(
                hash_untouched(&q, &QUANTIZED_BLOCKS),
                hash_untouched(&m, &QUANTIZED_BLOCKS)
            );
            assert_eq!(q.layers[0].w_xo, m.layers[0].w_xo);
        }
    }

    #[test]
    fn clip_must_sit_on_grid() {
        let m = model(2, 1.0);
        assert!(apply_round_clip(&m, 0.2, 0.5, true).is_err());
        assert!(apply_round_clip(&m, 0.0, 0.4, true).is_err());
        assert!(apply_round_clip(&m, 0.2, 0.5, false).is_ok());
        assert!(apply_round_clip(&m, 0.1, 0.3, true).is_ok());
    }

    #[test]
    fn rank_one_blocks() {
        let m = model(3, 1.0);
        let (q, blocks) = apply_low_rank_report(&m, 1).unwrap();
        assert_eq!(blocks.len(), 8);
        for l in &q.layers {
            for mat in [&l.w_xi, &l.w_hi, &l.w_xf, &l.w_hf] {
                assert_eq!(numerical_rank(mat).unwrap(), 1);
            }
        }
        for b in &blocks {
            assert!((b.error - b.tail_energy).abs() <= 1e-9, "{b:?}");
        }
        assert_eq!(
            hash_untouched(&q, &LOW_RANK_BLOCKS),
            hash_untouched(&m, &LOW_RANK_BLOCKS)
        );
        assert!(apply_low_rank(&m, 0).is_err());
        assert!(apply_low_rank(&m, 7).is_err());
    }

    #[test]
    fn low_rank_error_shrinks_with_k() {
        let m = model(4, 1.0);
        let errs: Vec<Vec<f64>> = (1..=6)
            .map(|k| {
                apply_low_rank_report(&m, k)
                    .unwrap()
                    .1
                    .iter()
                    .map(|b| b.error)
                    .collect()
            })
            .collect();
        for w in errs.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(b <= &(a + 1e-12));
            }
        }
    }

    #[test]
    fn full_rank_is_lossless() {
        let m = model(5, 1.0);
        let tokens: Vec<u32> = (0..90).map(|i| (i * 5 % 7) as u32).collect();
        let opts = EvalOptions {
            batch: 3,
            window: 10,
            hard_gates: false,
        };
        let (_, rep) = compress_and_report(&m, &CompressionSpec::LowRank { k: 6 }, &tokens, &opts).unwrap();
        assert!(rep.delta.abs() < 1e-9, "{}", rep.delta);
        assert_eq!(rep.rank_after, rep.rank_before);
        let rate = rep.rate.unwrap();
        assert!(rate > 1.0);
    }

    #[test]
    fn comparison_rows() {
        let (a, b) = (model(6, 1.0), model(7, 1.0));
        let tokens: Vec<u32> = (0..60).map(|i| (i * 3 % 7) as u32).collect();
        let opts = EvalOptions {
            batch: 2,
            window: 8,
            hard_gates: false,
        };
        let specs = [
            CompressionSpec::RoundClip { r: 0.2, c: 0.4 },
            CompressionSpec::LowRank { k: 2 },
            CompressionSpec::Round { r: 0.5 },
        ];
        let pairs = compare_under_compression(&a, &b, &specs, &tokens, &opts).unwrap();
        let csv = comparison_csv(("a", "b"), &pairs);
        assert_eq!(csv.lines().count(), 1 + 2 * specs.len());
        for (ra, rb) in &pairs {
            assert_eq!(ra.delta, ra.ppl_after - ra.ppl_before);
            assert_eq!(rb.delta, rb.ppl_after - rb.ppl_before);
        }
        let mut c = model(8, 1.0);
        c.config.vocab_size = 8;
        assert!(compare_under_compression(&a, &c, &specs, &tokens, &opts).is_err());
    }

    #[test]
    fn rate_formula() {
        let b = LowRankBlock {
            block: String::new(),
            rows: 256,
            cols: 256,
            rank_before: 256,
            rank_after: 64,
            error: 0.0,
            tail_energy: 0.0,
        };
        assert!((b.rate(64) - (256.0 * 64.0 * 2.0 + 64.0) / 65536.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_is_on_grid_and_close(x in -10.0f64..10.0, ri in 1usize..10) {
            let r = ri as f64 / 10.0;
            let q = round_r(x, r);
            prop_assert!((q / r - (q / r).round()).abs() < 1e-9);
            prop_assert!((q - x).abs() <= r / 2.0 + 1e-12);
            prop_assert_eq!(round_r(q, r).to_bits(), q.to_bits());
        }

        #[test]
        fn clip_bounds(x in -10.0f64..10.0, c in 0.01f64..5.0) {
            let y = clip_c(x, c);
            prop_assert!(y.abs() <= c);
            if x.abs() <= c { prop_assert_eq!(y, x); }
        }
    }
}
