//! Mines category candidate pools from beams and checks that a sampled
//! subset of questions recovers the full-population pool.
//!
//! The beams come from a frequency-prior model, which is fast enough to
//! decode thousands of questions per category.
//!
//! cargo run --release --example pool_sampling -- [seed] [sample]

use longtail_lab::corpus::{generate_world, render_example, FrequencyLaw, TokenizerMode, Vocabulary, WorldSpec};
use longtail_lab::decode::{beam_search, BeamDump};
use longtail_lab::model::PriorModel;
use longtail_lab::negsample::{discover_pool, distribution_similarity, PoolConfig};

fn main() -> longtail_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let sample: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let mut spec = WorldSpec::two_level(2, 2000, 0.002, 1000.0, seed);
    spec.frequency_law = FrequencyLaw::Zipf { exponent: 1.0 };
    let world = generate_world(&spec)?;
    let vocab = Vocabulary::for_triples(&world.triples, TokenizerMode::EntityAtomic)?;
    let model = PriorModel::new(&world.triples, &vocab, 1.0, 2.0, 1.0, seed)?;

    let mut dumps = Vec::with_capacity(world.triples.len());
    for t in &world.triples {
        let hyps = beam_search(&model, &vocab, render_example(t, &vocab)?.context(), 10, 3)?;
        dumps.push(BeamDump::new(&t.id, &t.category, &hyps));
    }
    let sampled_cfg = PoolConfig {
        sample_per_category: sample,
        seed,
        ..PoolConfig::default()
    };
    let full_cfg = PoolConfig {
        sample_per_category: usize::MAX,
        ..sampled_cfg.clone()
    };
    let full = discover_pool(&dumps, &world.triples, &full_cfg)?;
    let sampled = discover_pool(&dumps, &world.triples, &sampled_cfg)?;
    for (cat, pool) in &full {
        let sim = distribution_similarity(pool, &sampled[cat])?;
        let top: Vec<&str> = pool.objects().take(5).collect();
        println!("{cat}: cosine {:.3} spearman {:.3}; top answers {top:?}", sim.cosine, sim.spearman);
    }
    Ok(())
}
