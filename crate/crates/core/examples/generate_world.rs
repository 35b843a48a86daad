//! Builds a small two-level world, renders its training stream and writes a
//! corpus dump.
//!
//! cargo run --example generate_world -- [out.tsv]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;

use longtail_lab::corpus::{generate_world, render_corpus, write_corpus_dump, TokenizerMode, Vocabulary, WorldSpec};

fn main() -> longtail_lab::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("longtail-corpus.tsv"));

    // 6 relations x 40 subjects, 10% head triples seen 50x more often
    let spec = WorldSpec::two_level(6, 40, 0.1, 50.0, 7);
    let world = generate_world(&spec)?;
    let vocab = Vocabulary::for_triples(&world.triples, TokenizerMode::EntityAtomic)?;
    let stream = render_corpus(&world.triples, &vocab, 7, 1)?;

    println!("{} triples, vocabulary of {} tokens", world.triples.len(), vocab.len());
    let mut mass: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for t in &world.triples {
        let e = mass.entry(t.category.as_str()).or_default();
        if world.is_head(t) {
            e.0 += t.frequency as u64;
        } else {
            e.1 += t.frequency as u64;
        }
    }
    for (cat, (head, tail)) in &mass {
        println!("{cat:>12}: head object {:<14} head mass {head:>4}  tail mass {tail:>4}", world.head_objects[*cat]);
    }
    let t = world.tail_triples().next().expect("world has tail triples");
    println!("sample tail question: {} -> {}", t.question, t.object);

    write_corpus_dump(BufWriter::new(File::create(&out)?), &stream, &vocab)?;
    println!("wrote {} examples to {}", stream.len(), out.display());
    Ok(())
}
