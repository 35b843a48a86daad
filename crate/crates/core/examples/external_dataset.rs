//! Runs the pipeline on a QA file instead of a synthetic world.
//!
//! cargo run --release --example external_dataset -- [out_dir]

use std::fmt::Write as _;

use longtail_lab::corpus::{load_external_dataset, DatasetFormat, LoadOptions};
use longtail_lab::pipeline::{run, DataSource, ExperimentManifest, Stage};

fn main() -> longtail_lab::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("longtail-external"));
    std::fs::create_dir_all(&root)?;

    // a head answer shared by a few subjects, then distinct tail answers
    let mut tsv = String::from("question\tsubject\tcategory\tanswers\tpopularity\n");
    for c in ["river", "mountain"] {
        for i in 0..24 {
            let answer = if i < 4 { format!("Great{c}") } else { format!("{c}{i}") };
            let pop = if i < 4 { 500 } else { 10 + i };
            writeln!(tsv, "Which {c} is near Town{i}?\tTown{i}\t{c}\t{answer}|{answer}s\t{pop}").unwrap();
        }
    }
    let path = root.join("qa.tsv");
    std::fs::write(&path, tsv)?;

    let load = load_external_dataset(&path, &LoadOptions::default())?;
    println!(
        "{} questions ({} malformed, {} ambiguous, {} duplicates)",
        load.triples.len(),
        load.malformed,
        load.ambiguous,
        load.duplicates
    );

    let mut manifest = ExperimentManifest::toy("external", root.join("out"), 4);
    manifest.data = DataSource::Dataset {
        path,
        format: DatasetFormat::Tsv,
        answer_separator: "|".into(),
    };
    manifest.model.layers = 1;
    manifest.model.model_dim = 32;
    manifest.pretrain.epochs = 10;
    manifest.sampling.top_m = 5;
    manifest.sampling.n = 2;
    manifest.eval.k = 5;
    let summary = run(&manifest, Stage::Eval)?;
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(summary.output_dir.join("eval/pretrainrl.json"))?)?;
    println!("pretrainrl overall: {}", eval["report"]["overall"]);
    Ok(())
}
