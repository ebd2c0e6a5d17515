//! Trains a small character model on the first 40k characters of the KJV
//! corpus for four epochs and writes the best checkpoint to a temp file.
//!
//!     cargo run --release --example train_char_model

use g2lstm::cell::GateMode;
use g2lstm::checkpoint::write_checkpoint;
use g2lstm::corpus::{Corpus, TokenizerKind};
use g2lstm::network::{Model, ModelConfig};
use g2lstm::sampling::RngState;
use g2lstm::train::{train_loop_with, Optimizer, TrainConfig, TrainLogRow};

fn main() -> g2lstm::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/kjv");
    let text = std::fs::read_to_string(dir.join("train.txt")).expect("data/kjv/train.txt");
    let valid = std::fs::read_to_string(dir.join("valid.txt")).expect("data/kjv/valid.txt");
    let corpus = Corpus::from_texts(&text[..40_000], &valid[..5_000], "", TokenizerKind::Char, 1)?;

    let config = ModelConfig {
        vocab_size: corpus.vocab.len(),
        embed_dim: 64,
        hidden_dim: 64,
        num_layers: 2,
        gate_mode: GateMode::GumbelGate(0.9),
        tie_embeddings: false,
        dropout_p: 0.1,
    };
    let model = Model::init(config, &mut RngState::new(1).derive(0x1_0000))?;
    let train = TrainConfig {
        optimizer: Optimizer::adam(3e-3),
        epochs: 4,
        eval_every: 20,
        ..TrainConfig::default()
    };

    println!("{}", TrainLogRow::CSV_HEADER);
    let outcome = train_loop_with(model, &corpus.train, &corpus.valid, &train, |row| {
        if row.val_ppl.is_some() {
            println!("{}", row.csv_row());
        }
    })?;

    let path = std::env::temp_dir().join("g2lstm_example.g2lm");
    write_checkpoint(&path, &outcome.best, &corpus.vocab)?;
    eprintln!(
        "best validation perplexity {:.3}, saved to {}",
        outcome.best_val_ppl,
        path.display()
    );
    Ok(())
}
