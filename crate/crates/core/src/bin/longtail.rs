use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use longtail_lab::pipeline::{self, Ablation, ExperimentManifest, Stage};

#[derive(Parser)]
#[command(name = "longtail", version, about = "Run head/tail knowledge experiments from a manifest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the data, vocabulary and corpus dump.
    Generate(Common),
    /// Train the base model.
    Pretrain(Common),
    /// Dump base-model beams for every question.
    Beam(Common),
    /// Mine per-category candidate pools from the beams.
    Pool(Common),
    /// Sample losers and write preference pairs.
    Pairs(Common),
    /// Continual training with the combined objective.
    TrainRl(Common),
    /// Evaluate the base and trained models.
    Eval(Common),
    /// Render the comparison table of an existing run directory.
    Report(Common),
    /// Every stage, including requested ablations and the report.
    All(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Stop after this stage instead of the subcommand's own.
    #[arg(long)]
    stage: Option<String>,
    /// Replace every seed in the manifest.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Add an ablation run; may be repeated.
    #[arg(long, value_parser = parse_ablation)]
    ablation: Vec<Ablation>,
    /// Exit with status 3 when a directional check fails.
    #[arg(long)]
    check: bool,
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: longtail_lab::Error| e.to_string())
}

const USAGE: u8 = 1;
const STAGE_FAILURE: u8 = 2;
const CHECK_FAILURE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let report_only = matches!(cli.command, Command::Report(_));
    let (target, common) = match cli.command {
        Command::Generate(c) => (Stage::Generate, c),
        Command::Pretrain(c) => (Stage::Pretrain, c),
        Command::Beam(c) => (Stage::Beam, c),
        Command::Pool(c) => (Stage::Pool, c),
        Command::Pairs(c) => (Stage::Pairs, c),
        Command::TrainRl(c) => (Stage::TrainRl, c),
        Command::Eval(c) => (Stage::Eval, c),
        Command::Report(c) | Command::All(c) => (Stage::Report, c),
    };
    let until = match &common.stage {
        Some(s) => match s.parse::<Stage>() {
            Ok(st) => st,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(USAGE);
            }
        },
        None => target,
    };
    let mut manifest = match ExperimentManifest::load(&common.manifest) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: manifest {}: {e}", common.manifest.display());
            return ExitCode::from(USAGE);
        }
    };
    if let Some(seed) = common.seed_override {
        manifest = manifest.with_seed_override(seed);
    }
    for a in common.ablation {
        manifest = manifest.with_ablation(a);
    }

    if !report_only {
        if let Err(e) = pipeline::run(&manifest, until) {
            report_error(&e);
            return ExitCode::from(STAGE_FAILURE);
        }
        if until != Stage::Report {
            println!("{}", manifest.output_dir.display());
            return ExitCode::SUCCESS;
        }
    }
    let study = match pipeline::report(&manifest.output_dir) {
        Ok(s) => s,
        Err(e) => {
            report_error(&e);
            return ExitCode::from(STAGE_FAILURE);
        }
    };
    print!("{}", pipeline::render_report(&study));
    if common.check && !study.all_passed() {
        return ExitCode::from(CHECK_FAILURE);
    }
    ExitCode::SUCCESS
}

fn report_error(e: &longtail_lab::Error) {
    eprintln!("error: {e}");
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
}
