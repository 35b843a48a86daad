//! Pretrains the small transformer on an imbalanced world and watches tail
//! questions collapse onto their category's head answer.
//!
//! cargo run --release --example head_permeation -- [seed]

use longtail_lab::corpus::{generate_world, render_corpus, TokenizerMode, Vocabulary, WorldSpec};
use longtail_lab::eval::head_permeation_probe;
use longtail_lab::model::{ModelConfig, Parameters};
use longtail_lab::train::{run_pretrain, TrainConfig};

fn main() -> longtail_lab::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let world = generate_world(&WorldSpec::two_level(10, 40, 0.1, 100.0, seed))?;
    let vocab = Vocabulary::for_triples(&world.triples, TokenizerMode::EntityAtomic)?;
    let corpus = render_corpus(&world.triples, &vocab, seed, 1)?;
    let model = ModelConfig::new(vocab.len(), 16, 2, 64, 4).with_seed(seed);

    let untrained = Parameters::<f32>::init(&model)?;
    println!("untrained: permeation {:.3}", head_permeation_probe(&untrained, &vocab, &world)?);

    let mut cfg = TrainConfig::new(1e-3, 32, 30, seed);
    cfg.plateau_tolerance = Some(0.03);
    run_pretrain::<f32>(&corpus, &model, &cfg, None, |epoch, params| {
        let perm = head_permeation_probe(params, &vocab, &world)?;
        println!("epoch {:>2}: loss {:.4} permeation {perm:.3}", epoch.epoch, epoch.mean_loss);
        Ok(true)
    })?;
    Ok(())
}
