//! Per-token average gate values for one sentence, printed as CSV.

use g2lstm::analysis::trace_sentence;
use g2lstm::cell::GateMode;
use g2lstm::corpus::{TokenizerKind, Vocabulary};
use g2lstm::network::{Model, ModelConfig};
use g2lstm::sampling::RngState;

fn main() -> g2lstm::Result<()> {
    let sentence = "the cat sat on the mat , said the dog";
    let vocab = Vocabulary::build(TokenizerKind::Word.split(sentence).iter().map(String::as_str), 1);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: 12,
        hidden_dim: 12,
        num_layers: 2,
        gate_mode: GateMode::GumbelGate(0.9),
        tie_embeddings: true,
        dropout_p: 0.0,
    };
    let model = Model::init(config, &mut RngState::new(4))?;
    let tokens = TokenizerKind::Word.split(sentence);
    let trace = trace_sentence(&model, &vocab, &tokens, 1)?;
    print!("{}", trace.csv());
    Ok(())
}
