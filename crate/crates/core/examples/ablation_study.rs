//! The complete ablation study on the toy world: pretraining, pool mining,
//! PretrainRL and every ablation, then the comparison table.
//!
//! Takes about a minute in release mode.
//!
//! cargo run --release --example ablation_study -- [seed] [out_dir]

use longtail_lab::pipeline::{report, run, Ablation, ExperimentManifest, Stage};

fn main() -> longtail_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let out = args
        .next()
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("longtail-ablation-{seed}")));

    let mut manifest = ExperimentManifest::toy("ablation", out, seed);
    for a in Ablation::ALL {
        manifest = manifest.with_ablation(a);
    }
    let summary = run(&manifest, Stage::Report)?;
    let study = report(&summary.output_dir)?;
    print!("{}", longtail_lab::pipeline::render_report(&study));
    println!("artifacts in {}", summary.output_dir.display());
    Ok(())
}
