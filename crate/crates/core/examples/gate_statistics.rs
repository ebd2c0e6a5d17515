//! Histograms of input- and forget-gate activations of a random model over a
//! few lines of text, with the saturated mass outside `(0.1, 0.9)`.

use g2lstm::analysis::collect_gate_histograms;
use g2lstm::cell::GateMode;
use g2lstm::corpus::{TokenizerKind, Vocabulary};
use g2lstm::network::{Model, ModelConfig};
use g2lstm::sampling::RngState;

fn main() -> g2lstm::Result<()> {
    let text = "In the beginning God created the heaven and the earth.\n\
                And the earth was without form, and void.\n\
                And God said, Let there be light: and there was light.\n";
    let vocab = Vocabulary::build(TokenizerKind::Char.split(text).iter().map(String::as_str), 1);
    let lines: Vec<Vec<u32>> = text
        .split_inclusive('\n')
        .map(|l| vocab.encode(TokenizerKind::Char, l))
        .collect();

    for mode in [GateMode::Standard, GateMode::SharpenedSigmoid(0.2)] {
        let config = ModelConfig {
            vocab_size: vocab.len(),
            embed_dim: 16,
            hidden_dim: 32,
            num_layers: 1,
            gate_mode: mode,
            tie_embeddings: false,
            dropout_p: 0.0,
        };
        let model = Model::init(config, &mut RngState::new(2))?;
        let (input, forget) = collect_gate_histograms(&model, &lines, 0)?;
        for h in [&input, &forget] {
            println!(
                "{mode} {}: {} activations, {:.3} at or below 0.1, {:.3} at or above 0.9",
                h.gate.name(),
                h.total,
                h.saturation_low,
                h.saturation_high
            );
        }
    }
    Ok(())
}
