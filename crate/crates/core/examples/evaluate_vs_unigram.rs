//! Compares an untrained model, a briefly trained one and the unigram
//! baseline on held-out text.

use g2lstm::cell::GateMode;
use g2lstm::corpus::{Corpus, TokenizerKind, UnigramModel};
use g2lstm::network::{evaluate, EvalOptions, Model, ModelConfig};
use g2lstm::sampling::RngState;
use g2lstm::train::{train_loop_with, TrainConfig};

fn main() -> g2lstm::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/kjv");
    let train = std::fs::read_to_string(dir.join("train.txt")).expect("train split");
    let test = std::fs::read_to_string(dir.join("test.txt")).expect("test split");
    let corpus = Corpus::from_texts(
        &train[..30_000],
        &test[..3_000],
        &test[3_000..6_000],
        TokenizerKind::Char,
        1,
    )?;

    let config = ModelConfig {
        vocab_size: corpus.vocab.len(),
        embed_dim: 32,
        hidden_dim: 48,
        num_layers: 1,
        gate_mode: GateMode::Standard,
        tie_embeddings: false,
        dropout_p: 0.0,
    };
    let untrained = Model::init(config, &mut RngState::new(3))?;
    let cfg = TrainConfig {
        epochs: 6,
        ..TrainConfig::default()
    };
    let trained = train_loop_with(untrained.clone(), &corpus.train, &corpus.valid, &cfg, |_| {})?.best;

    let opts = EvalOptions {
        batch: 10,
        window: 35,
        hard_gates: false,
    };
    let unigram = UnigramModel::fit(&corpus.train, corpus.vocab.len())?.perplexity(&corpus.test)?;
    println!("model,perplexity");
    println!(
        "untrained,{:.4}",
        evaluate(&untrained, &corpus.test, &opts)?.perplexity()
    );
    println!("trained,{:.4}", evaluate(&trained, &corpus.test, &opts)?.perplexity());
    println!("unigram,{unigram:.4}");
    Ok(())
}
