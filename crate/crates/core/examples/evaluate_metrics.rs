//! ACC, HR@k, MRR@k and Prob@k on three questions answered by a table model
//! with known answer rankings.
//!
//! cargo run --example evaluate_metrics

use std::collections::{BTreeMap, BTreeSet};

use longtail_lab::corpus::{render_example, KnowledgeTriple, TokenizerMode, Vocabulary, EOS_ID};
use longtail_lab::decode::TableModel;
use longtail_lab::eval::{evaluate, EvalConfig};

fn triple(i: usize, subject: &str, object: &str) -> KnowledgeTriple {
    KnowledgeTriple {
        id: format!("q{i}"),
        subject: subject.into(),
        predicate: "capital".into(),
        object: object.into(),
        object_aliases: BTreeSet::from([object.to_string()]),
        category: "capital".into(),
        frequency: 1,
        question: format!("What is the capital of {subject}?"),
    }
}

fn main() -> longtail_lab::Result<()> {
    let questions = vec![triple(0, "Arnor", "Annuminas"), triple(1, "Gondor", "Osgiliath"), triple(2, "Rohan", "Edoras")];
    let mut all = questions.clone();
    all.push(triple(3, "Decoy", "Minas"));
    let vocab = Vocabulary::for_triples(&all, TokenizerMode::EntityAtomic)?;

    // answer preference per question, most likely first
    let rankings = [
        ["Annuminas", "Minas", "Edoras"],
        ["Minas", "Osgiliath", "Edoras"],
        ["Minas", "Annuminas", "Osgiliath"],
    ];
    let mut table: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
    for (q, ranking) in questions.iter().zip(rankings) {
        let mut row = vec![f64::NEG_INFINITY; vocab.len()];
        for (r, obj) in ranking.iter().enumerate() {
            row[vocab.id(obj).unwrap() as usize] = [0.6f64, 0.3, 0.1][r].ln();
        }
        table.insert(render_example(q, &vocab)?.context().to_vec(), row);
    }
    let v = vocab.len();
    let symbols: Vec<&str> = vocab.tokens().iter().map(String::as_str).collect();
    let model = TableModel::from_fn(&symbols, EOS_ID, move |prefix| {
        table.get(prefix).cloned().unwrap_or_else(|| {
            let mut row = vec![f64::NEG_INFINITY; v];
            row[EOS_ID as usize] = 0.0;
            row
        })
    });

    let cfg = EvalConfig {
        k: 2,
        max_len: Some(2),
        ..EvalConfig::default()
    };
    let (report, records) = evaluate(&model, &vocab, &questions, &cfg)?;
    for r in &records {
        println!(
            "{}: greedy {:<10} first correct rank {:?} prob {:?}",
            r.triple_id, r.greedy_answer, r.first_correct_rank, r.correct_prob
        );
    }
    let m = report.overall;
    println!("ACC {:.3} HR@2 {:.3} MRR@2 {:.3} Prob@2 {:.3}", m.acc, m.hr, m.mrr, m.prob);
    Ok(())
}
