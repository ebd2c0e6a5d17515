//! Quantizes and rank-truncates the input and forget gates of a random
//! model, showing the value support and the per-matrix truncation error.

use g2lstm::cell::GateMode;
use g2lstm::compress::{apply_low_rank_report, gate_support, CompressionSpec};
use g2lstm::network::{Model, ModelConfig};
use g2lstm::sampling::RngState;

fn main() -> g2lstm::Result<()> {
    let config = ModelConfig {
        vocab_size: 20,
        embed_dim: 16,
        hidden_dim: 16,
        num_layers: 2,
        gate_mode: GateMode::GumbelGate(0.9),
        tie_embeddings: false,
        dropout_p: 0.0,
    };
    let mut model = Model::init(config, &mut RngState::new(8))?;
    for (_, t) in model.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= 6.0);
    }

    for spec in [
        CompressionSpec::Round { r: 0.2 },
        CompressionSpec::RoundClip { r: 0.2, c: 0.4 },
    ] {
        let q = spec.apply(&model)?;
        let support = gate_support(&q);
        println!(
            "{spec}: {} distinct values, e.g. {:?}",
            support.len(),
            &support[..support.len().min(7)]
        );
    }

    let (_, blocks) = apply_low_rank_report(&model, 4)?;
    println!("block,rank_before,rank_after,error,tail_energy,rate");
    for b in &blocks {
        println!(
            "{},{},{},{:.6},{:.6},{:.4}",
            b.block,
            b.rank_before,
            b.rank_after,
            b.error,
            b.tail_energy,
            b.rate(4)
        );
    }
    Ok(())
}
