//! Saves a model, loads it back and confirms the bytes and predictions match.

use g2lstm::cell::GateMode;
use g2lstm::checkpoint::{infer_tokenizer, load_checkpoint, save_checkpoint};
use g2lstm::corpus::{TokenizerKind, Vocabulary};
use g2lstm::network::{evaluate, EvalOptions, Model, ModelConfig};
use g2lstm::sampling::RngState;

fn main() -> g2lstm::Result<()> {
    let text = "And God saw the light, that it was good.\n";
    let vocab = Vocabulary::build(TokenizerKind::Char.split(text).iter().map(String::as_str), 1);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: 10,
        hidden_dim: 10,
        num_layers: 2,
        gate_mode: GateMode::SharpenedSigmoid(0.2),
        tie_embeddings: true,
        dropout_p: 0.0,
    };
    let model = Model::init(config, &mut RngState::new(6))?;

    let bytes = save_checkpoint(&model, &vocab)?;
    let (loaded, loaded_vocab) = load_checkpoint(&bytes)?;
    let again = save_checkpoint(&loaded, &loaded_vocab)?;

    let ids = loaded_vocab.encode(TokenizerKind::Char, text);
    let opts = EvalOptions {
        batch: 1,
        window: 16,
        hard_gates: false,
    };
    println!("checkpoint bytes: {}", bytes.len());
    println!("save/load/save identical: {}", bytes == again);
    println!("tokenizer: {:?}", infer_tokenizer(&loaded_vocab));
    println!(
        "perplexity before {:.6}, after {:.6}",
        evaluate(&model, &ids, &opts)?.perplexity(),
        evaluate(&loaded, &ids, &opts)?.perplexity()
    );
    println!(
        "decode(encode(text)) == text: {}",
        loaded_vocab.decode(TokenizerKind::Char, &ids) == text
    );
    Ok(())
}
