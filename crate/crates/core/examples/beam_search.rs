//! Beam search over a hand-built table model whose next-token distribution
//! depends on the prefix.
//!
//! cargo run --example beam_search -- [k]

use longtail_lab::decode::{beam_search, greedy_decode, TableModel};

fn main() -> longtail_lab::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let symbols = ["<eos>", "<bos>", "new", "york", "jersey", "paris"];
    let p = |w: [f64; 6]| w.iter().map(|x: &f64| x.ln()).collect::<Vec<f64>>();
    // "new" is likely first, but then splits between two continuations
    let model = TableModel::from_fn(&symbols, 0, move |prefix| match prefix.last() {
        Some(1) => p([0.01, 0.0001, 0.55, 0.01, 0.0099, 0.42]),
        Some(2) => p([0.02, 0.0001, 0.0001, 0.49, 0.49, 0.0098]),
        _ => p([0.97, 0.0001, 0.01, 0.0099, 0.005, 0.005]),
    });

    let greedy = greedy_decode(&model, &model, &[1], 3)?;
    println!("greedy: {:<14} logprob {:.3}", greedy.text, greedy.logprob);
    for h in beam_search(&model, &model, &[1], k, 3)? {
        println!(
            "beam {}: {:<14} p {:.4} finished {}",
            h.rank,
            h.text,
            h.logprob.exp(),
            h.finished
        );
    }
    Ok(())
}
