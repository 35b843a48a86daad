//! From a candidate pool to preference-pair rows and their token form.
//!
//! cargo run --example preference_pairs

use longtail_lab::corpus::{KnowledgeTriple, TokenizerMode, Vocabulary};
use longtail_lab::negsample::{build_pairs, sample_negatives, CandidatePool, PoolSource, TruthFilter};
use longtail_lab::train::tokenize_pair;
use std::collections::BTreeSet;

fn main() -> longtail_lab::Result<()> {
    let triple = KnowledgeTriple {
        id: "capital/17".into(),
        subject: "Vardonia".into(),
        predicate: "capital".into(),
        object: "Keltham".into(),
        object_aliases: BTreeSet::from(["Keltham".to_string(), "Keltham City".to_string()]),
        category: "capital".into(),
        frequency: 1,
        question: "What is the capital of Vardonia?".into(),
    };
    // what the base model tends to answer for capitals, truth included
    let pool = CandidatePool::from_weights(
        "capital",
        PoolSource::ModelBeams,
        [("Oslo", 40.0), ("Keltham City", 12.0), ("Lima", 9.0), ("Quito", 7.0), ("Bern", 2.0)],
    );
    let draw = sample_negatives(&pool, &triple, 3, 11, TruthFilter::Aliases)?;
    println!("negatives {:?} (shortfall {})", draw.losers, draw.shortfall);

    let mut decoys: Vec<KnowledgeTriple> = Vec::new();
    for obj in pool.objects() {
        let mut t = triple.clone();
        t.object = obj.to_string();
        t.object_aliases = BTreeSet::from([t.object.clone()]);
        decoys.push(t);
    }
    decoys.push(triple.clone());
    let vocab = Vocabulary::for_triples(&decoys, TokenizerMode::EntityAtomic)?;
    for pair in build_pairs(&triple, &draw.losers)? {
        let tokens = tokenize_pair(&pair, &vocab)?;
        println!("{}   winner ids {:?} loser ids {:?}", pair.to_row(), tokens.winner, tokens.loser);
    }
    Ok(())
}
