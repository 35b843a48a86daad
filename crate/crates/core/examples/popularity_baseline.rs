//! Negatives drawn from globally popular objects, the baseline that ignores
//! what the model itself predicts.
//!
//! cargo run --example popularity_baseline

use longtail_lab::corpus::{generate_world, WorldSpec};
use longtail_lab::negsample::{popularity_pools, popularity_sampler, PoolScope};

fn main() -> longtail_lab::Result<()> {
    let mut spec = WorldSpec::two_level(5, 30, 0.1, 100.0, 3);
    spec.popularity_noise = 0.5;
    let world = generate_world(&spec)?;
    let tails: Vec<_> = world.tail_triples().cloned().collect();

    for scope in [PoolScope::Global, PoolScope::PerCategory] {
        let pools = popularity_pools(&tails, &world.popularity, 0.1, scope)?;
        let (cat, pool) = pools.iter().next().expect("at least one pool");
        let top: Vec<&str> = pool.objects().take(4).collect();
        println!("{scope:?}: {} pools, {cat} starts with {top:?}", pools.len());
    }
    let negatives = popularity_sampler(&tails, &world.popularity, 0.1, 3, 3, PoolScope::Global)?;
    for t in tails.iter().take(4) {
        println!("{} (truth {}) -> {:?}", t.question, t.object, negatives[&t.id]);
    }
    Ok(())
}
