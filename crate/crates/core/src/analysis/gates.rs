use std::collections::BTreeMap;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::network::{forward_sequence_with, ForwardOptions, LayerState, Model, Window};
use crate::sampling::RngState;

pub const HISTOGRAM_BINS: usize = 50;
pub const SATURATION_LOW: f64 = 0.1;
pub const SATURATION_HIGH: f64 = 0.9;

/// Positions per forward call; state carries across calls.
const CHUNK: usize = 64;
/// Streams of equal length evaluated side by side.
const MAX_BATCH: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    Input,
    Forget,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Input => "input",
            GateKind::Forget => "forget",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateHistogram {
    pub gate: GateKind,
    /// Tallies of `HISTOGRAM_BINS` equal-width bins over `[0, 1]`; the last
    /// bin is closed on the right.
    pub counts: Vec<u64>,
    pub total: u64,
    /// Fraction of values in `[0, 0.1]`.
    pub saturation_low: f64,
    /// Fraction of values in `[0.9, 1]`.
    pub saturation_high: f64,
    low: u64,
    high: u64,
}

impl GateHistogram {
    pub const CSV_HEADER: &'static str = "bin_lo,bin_hi,count";

    pub fn new(gate: GateKind) -> Self {
        GateHistogram {
            gate,
            counts: vec![0; HISTOGRAM_BINS],
            total: 0,
            saturation_low: 0.0,
            saturation_high: 0.0,
            low: 0,
            high: 0,
        }
    }

    pub fn record(&mut self, v: f64) {
        let bin = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        self.counts[bin] += 1;
        self.total += 1;
        self.low += u64::from(v <= SATURATION_LOW);
        self.high += u64::from(v >= SATURATION_HIGH);
        self.saturation_low = self.low as f64 / self.total as f64;
        self.saturation_high = self.high as f64 / self.total as f64;
    }

    /// Share of values in the two boundary bands.
    pub fn saturation(&self) -> f64 {
        self.saturation_low + self.saturation_high
    }

    pub fn bin_edges(i: usize) -> (f64, f64) {
        let w = 1.0 / HISTOGRAM_BINS as f64;
        (i as f64 * w, (i + 1) as f64 * w)
    }

    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, c) in self.counts.iter().enumerate() {
            let (lo, hi) = Self::bin_edges(i);
            out.push_str(&format!("{lo},{hi},{c}\n"));
        }
        out
    }
}

fn check_layer(model: &Model, layer: usize) -> Result<()> {
    if layer >= model.config.num_layers {
        return Err(Error::invalid(format!(
            "layer {layer} out of range for a {}-layer model",
            model.config.num_layers
        )));
    }
    Ok(())
}

/// Runs equal-length streams side by side in evaluation mode and hands the
/// `[i, f, o, g]` gate rows of `layer` to `visit(stream, position, row)`.
fn visit_gates(
    model: &Model,
    streams: &[&[u32]],
    layer: usize,
    mut visit: impl FnMut(usize, usize, &[f64]),
) -> Result<()> {
    let batch = streams.len();
    let len = streams[0].len();
    let hd = model.config.hidden_dim;
    let mut state: Vec<LayerState> = model.initial_state(batch);
    let mut rng = RngState::new(0);
    let mut start = 0;
    while start < len {
        let steps = CHUNK.min(len - start);
        let mut inputs = Vec::with_capacity(steps * batch);
        for t in start..start + steps {
            inputs.extend(streams.iter().map(|s| s[t]));
        }
        // Every position is an input; the loss is not used.
        let window = Window {
            targets: inputs.clone(),
            inputs,
            steps,
            batch,
        };
        let out = forward_sequence_with(model, &window, &state, &mut rng, &ForwardOptions::eval())?;
        let gates = &out.caches.layers[layer].gates;
        for t in 0..steps {
            for b in 0..batch {
                let r = t * batch + b;
                visit(b, start + t, &gates[r * 4 * hd..(r + 1) * 4 * hd]);
            }
        }
        state = out.final_state;
        start += steps;
    }
    Ok(())
}

/// Input and forget gate histograms of `layer` over every coordinate of
/// every position of every stream, with gates in evaluation mode.
pub fn collect_gate_histograms(
    model: &Model,
    sample: &[Vec<u32>],
    layer: usize,
) -> Result<(GateHistogram, GateHistogram)> {
    check_layer(model, layer)?;
    if sample.iter().all(|s| s.is_empty()) {
        return Err(Error::invalid("gate statistics need a non-empty sample"));
    }
    let hd = model.config.hidden_dim;
    let mut by_len: BTreeMap<usize, Vec<&[u32]>> = BTreeMap::new();
    for s in sample.iter().filter(|s| !s.is_empty()) {
        by_len.entry(s.len()).or_default().push(s);
    }
    let mut input = GateHistogram::new(GateKind::Input);
    let mut forget = GateHistogram::new(GateKind::Forget);
    for group in by_len.values() {
        for streams in group.chunks(MAX_BATCH) {
            visit_gates(model, streams, layer, |_, _, row| {
                row[..hd].iter().for_each(|&v| input.record(v));
                row[hd..2 * hd].iter().for_each(|&v| forget.record(v));
            })?;
        }
    }
    Ok((input, forget))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimestepGateTrace {
    pub tokens: Vec<String>,
    /// Mean input gate over hidden coordinates, per token.
    pub avg_input_gate: Vec<f64>,
    pub avg_forget_gate: Vec<f64>,
}

impl TimestepGateTrace {
    pub const CSV_HEADER: [&'static str; 3] = ["token", "avg_input", "avg_forget"];

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER).expect("in-memory write");
        for ((tok, i), f) in self.tokens.iter().zip(&self.avg_input_gate).zip(&self.avg_forget_gate) {
            w.write_record([tok.as_str(), &i.to_string(), &f.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Per-token mean input and forget gates of `layer` while reading
/// `tokens`. Tokens missing from `vocab` read as the unknown token.
pub fn trace_sentence<S: AsRef<str>>(
    model: &Model,
    vocab: &Vocabulary,
    tokens: &[S],
    layer: usize,
) -> Result<TimestepGateTrace> {
    check_layer(model, layer)?;
    if vocab.len() != model.config.vocab_size {
        return Err(Error::shape(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    let n = tokens.len();
    let mut trace = TimestepGateTrace {
        tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        avg_input_gate: vec![0.0; n],
        avg_forget_gate: vec![0.0; n],
    };
    if n == 0 {
        return Ok(trace);
    }
    let ids: Vec<u32> = tokens.iter().map(|t| vocab.id(t.as_ref())).collect();
    let hd = model.config.hidden_dim;
    visit_gates(model, &[&ids], layer, |_, t, row| {
        trace.avg_input_gate[t] = row[..hd].iter().sum::<f64>() / hd as f64;
        trace.avg_forget_gate[t] = row[hd..2 * hd].iter().sum::<f64>() / hd as f64;
    })?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::GateMode;
    use crate::corpus::{Corpus, TokenizerKind};
    use crate::network::ModelConfig;
    use proptest::prelude::*;

    fn model(mode: GateMode, seed: u64, vocab: usize) -> Model {
        let config = ModelConfig {
            vocab_size: vocab,
            embed_dim: 5,
            hidden_dim: 6,
            num_layers: 2,
            gate_mode: mode,
            tie_embeddings: false,
            dropout_p: 0.3,
        };
        Model::init(config, &mut RngState::new(seed)).unwrap()
    }

    fn streams(vocab: u32, lens: &[usize], seed: u64) -> Vec<Vec<u32>> {
        let mut rng = RngState::new(seed);
        lens.iter()
            .map(|&n| (0..n).map(|_| (rng.next_u64() % vocab as u64) as u32).collect())
            .collect()
    }

    #[test]
    fn zero_model_puts_all_mass_at_one_half() {
        let m = Model::zeros(model(GateMode::GumbelGate(0.9), 1, 7).config).unwrap();
        let s = streams(7, &[5, 9, 1], 2);
        let (i, f) = collect_gate_histograms(&m, &s, 0).unwrap();
        for h in [&i, &f] {
            assert_eq!(h.total, 15 * 6);
            assert_eq!(h.counts[25], h.total);
            assert_eq!(h.saturation(), 0.0);
        }
        let vocab = Vocabulary::build(["a", "b", "c", "d", "e"], 1);
        let t = trace_sentence(&m, &vocab, &["a", "zzz", "c"], 1).unwrap();
        assert_eq!(t.avg_input_gate, vec![0.5; 3]);
        assert_eq!(t.avg_forget_gate, vec![0.5; 3]);
    }

    #[test]
    fn mass_conservation_and_determinism() {
        let m = model(GateMode::SharpenedSigmoid(0.2), 3, 11);
        let s = streams(11, &[70, 70, 3, 130, 70], 4);
        let a = collect_gate_histograms(&m, &s, 1).unwrap();
        let b = collect_gate_histograms(&m, &s, 1).unwrap();
        assert_eq!(a, b);
        let positions: usize = s.iter().map(Vec::len).sum();
        assert_eq!(a.0.total, (positions * 6) as u64);
        assert_eq!(a.0.counts.iter().sum::<u64>(), a.0.total);
        assert_eq!(a.1.counts.iter().sum::<u64>(), a.1.total);
    }

    #[test]
    fn batched_streams_match_one_at_a_time() {
        let m = model(GateMode::GumbelGate(0.9), 5, 9);
        let s = streams(9, &[80, 80, 80], 6);
        let joint = collect_gate_histograms(&m, &s, 0).unwrap();
        let mut parts = (
            GateHistogram::new(GateKind::Input),
            GateHistogram::new(GateKind::Forget),
        );
        for one in &s {
            let (i, f) = collect_gate_histograms(&m, std::slice::from_ref(one), 0).unwrap();
            for (acc, h) in [(&mut parts.0, i), (&mut parts.1, f)] {
                acc.counts.iter_mut().zip(&h.counts).for_each(|(a, b)| *a += b);
                acc.total += h.total;
            }
        }
        assert_eq!(joint.0.counts, parts.0.counts);
        assert_eq!(joint.1.counts, parts.1.counts);
    }

    #[test]
    fn trace_matches_histogram_pass() {
        let text = "the cat sat on the mat\nthe dog sat\n";
        let c = Corpus::from_texts(text, "", "", TokenizerKind::Word, 1).unwrap();
        let m = model(GateMode::GumbelGate(0.9), 8, c.vocab.len());
        let words = ["the", "cat", "sat", ",", "the", "dog"];
        let t = trace_sentence(&m, &c.vocab, &words, 0).unwrap();
        assert_eq!(t.len(), 6);
        let ids: Vec<u32> = words.iter().map(|w| c.vocab.id(w)).collect();
        let (i, _) = collect_gate_histograms(&m, &[ids], 0).unwrap();
        assert_eq!(i.total, 36);
        assert!(t
            .avg_input_gate
            .iter()
            .chain(&t.avg_forget_gate)
            .all(|&v| v > 0.0 && v < 1.0));

        let one = trace_sentence(&m, &c.vocab, &["cat"], 0).unwrap();
        assert_eq!(one.len(), 1);
        let longer = trace_sentence(&m, &c.vocab, &["cat", "the"], 0).unwrap();
        assert_eq!(one.avg_input_gate[0], longer.avg_input_gate[0]);
        assert_eq!(one.avg_forget_gate[0], longer.avg_forget_gate[0]);
        assert!(trace_sentence(&m, &c.vocab, &Vec::<String>::new(), 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn trace_csv_quotes_awkward_tokens() {
        let t = TimestepGateTrace {
            tokens: vec![",".into(), "\n".into(), "a".into()],
            avg_input_gate: vec![0.25, 0.5, 0.75],
            avg_forget_gate: vec![0.5, 0.5, 0.125],
        };
        let csv = t.csv();
        assert!(csv.starts_with("token,avg_input,avg_forget\n"));
        assert!(csv.contains("\",\",0.25,0.5\n"));
        assert!(csv.contains("\"\n\",0.5,0.5\n"));
        assert!(csv.ends_with("a,0.75,0.125\n"));
    }

    #[test]
    fn histogram_csv_and_bands() {
        let mut h = GateHistogram::new(GateKind::Forget);
        for v in [0.0, 0.1, 0.1000001, 0.5, 0.9, 1.0] {
            h.record(v);
        }
        assert_eq!(h.saturation_low, 2.0 / 6.0);
        assert_eq!(h.saturation_high, 2.0 / 6.0);
        assert_eq!((h.counts[45], h.counts[49]), (1, 1));
        let csv = h.csv();
        assert_eq!(csv.lines().count(), 51);
        assert_eq!(csv.lines().nth(1).unwrap(), "0,0.02,1");
    }

    #[test]
    fn errors() {
        let m = model(GateMode::Standard, 1, 5);
        assert!(collect_gate_histograms(&m, &[], 0).is_err());
        assert!(collect_gate_histograms(&m, &[vec![]], 0).is_err());
        assert!(collect_gate_histograms(&m, &[vec![1, 2]], 2).is_err());
        assert!(collect_gate_histograms(&m, &[vec![1, 9]], 0).is_err());
        let v = Vocabulary::build(["a"], 1);
        assert!(trace_sentence(&m, &v, &["a"], 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn counts_sum_to_total_and_values_in_unit_interval(
            lens in prop::collection::vec(1usize..40, 1..5),
            seed in 0u64..1000,
        ) {
            let m = model(GateMode::GumbelGate(0.9), seed, 6);
            let s = streams(6, &lens, seed + 1);
            let (i, f) = collect_gate_histograms(&m, &s, 1).unwrap();
            let expected = lens.iter().sum::<usize>() as u64 * 6;
            for h in [&i, &f] {
                prop_assert_eq!(h.total, expected);
                prop_assert_eq!(h.counts.iter().sum::<u64>(), expected);
                prop_assert!((0.0..=1.0).contains(&h.saturation_low));
                prop_assert!((0.0..=1.0).contains(&h.saturation_high));
            }
        }
    }
}
