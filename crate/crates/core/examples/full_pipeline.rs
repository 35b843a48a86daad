//! Writes a manifest to disk, runs it stage by stage, and shows that a
//! second run reuses every stage while a config edit reruns only what
//! depends on it.
//!
//! cargo run --release --example full_pipeline -- [out_dir]

use longtail_lab::pipeline::{run, ExperimentManifest, RunSummary, Stage};

fn show(label: &str, summary: &RunSummary) {
    let fresh: Vec<&str> = summary.stages.iter().filter(|s| !s.reused).map(|s| s.stage.as_str()).collect();
    println!("{label}: {} stages, recomputed {fresh:?}", summary.stages.len());
}

fn main() -> longtail_lab::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("longtail-full-pipeline"));
    std::fs::create_dir_all(&root)?;

    let mut manifest = ExperimentManifest::toy("full", "out", 2);
    manifest.model.layers = 1;
    manifest.pretrain.epochs = 4;
    let path = root.join("experiment.toml");
    std::fs::write(&path, manifest.to_toml()?)?;

    // relative output_dir resolves against the manifest's directory
    let loaded = ExperimentManifest::load(&path)?;
    show("first run", &run(&loaded, Stage::Report)?);
    show("second run", &run(&loaded, Stage::Report)?);

    let mut edited = loaded.clone();
    edited.pretrainrl.beta = 0.5;
    show("beta edited", &run(&edited, Stage::Report)?);
    println!("report at {}", edited.output_dir.join("report.md").display());
    Ok(())
}
