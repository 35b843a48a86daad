use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifacts::{read_json, write_json, ArtifactPaths, DataBundle, MethodReport};
use super::manifest::{Ablation, DataSource, ExperimentManifest, QuestionSplit, SamplingMode};
use super::{report, Stage};
use crate::corpus::{
    generate_world, load_external_dataset, render_corpus, render_example, write_corpus_dump, KnowledgeTriple,
    Vocabulary, EOS_ID,
};
use crate::decode::{beam_search, read_beam_dumps, write_beam_dumps, BeamDump};
use crate::eval::{default_max_len, evaluate, head_permeation_probe, write_records_tsv};
use crate::model::{Checkpoint, Precision, Scalar};
use crate::negsample::{
    build_pairs, discover_pool, instance_negatives, popularity_sampler, read_pairs, sample_negatives, write_pairs,
    CandidatePool, PreferencePair,
};
use crate::train::{run_pretrain, run_pretrainrl, tokenize_pair, write_step_log, ProbeQuestion, TracePoint};
use crate::util::sha256_hex;
use crate::{Error, Result};

/// What happened to one stage during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRun {
    pub stage: String,
    /// Outputs were already present for the same inputs.
    pub reused: bool,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub stages: Vec<StageRun>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StageMeta {
    stage: String,
    key: String,
    outputs: BTreeMap<String, String>,
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn wrap(stage: &str, field: &str) -> impl FnOnce(Error) -> Error {
    let stage = stage.to_string();
    let field = field.to_string();
    move |e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage,
            field,
            source: Box::new(e),
        },
    }
}

/// Runs every stage up to and including `until`, reusing stages whose
/// recorded inputs and outputs are unchanged.
pub fn run(manifest: &ExperimentManifest, until: Stage) -> Result<RunSummary> {
    manifest.validate().map_err(wrap("manifest", "manifest"))?;
    let out = ArtifactPaths::new(&manifest.output_dir);
    std::fs::create_dir_all(&out.root).map_err(|e| wrap("manifest", "output_dir")(e.into()))?;
    std::fs::write(out.manifest(), manifest.to_toml()?).map_err(|e| wrap("manifest", "output_dir")(e.into()))?;
    let mut runner = Runner {
        m: manifest,
        out,
        log: Vec::new(),
    };
    match manifest.model.precision {
        Precision::F32 => runner.run_typed::<f32>(until)?,
        Precision::F64 => runner.run_typed::<f64>(until)?,
    }
    Ok(RunSummary {
        output_dir: manifest.output_dir.clone(),
        stages: runner.log,
    })
}

struct Runner<'a> {
    m: &'a ExperimentManifest,
    out: ArtifactPaths,
    log: Vec<StageRun>,
}

impl Runner<'_> {
    /// Skips `body` when the stored meta matches `config` and the hashes of
    /// `inputs`, and every output still hashes to its recorded value.
    fn stage(
        &mut self,
        name: &str,
        field: &str,
        config: serde_json::Value,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        body: impl FnOnce(&ArtifactPaths) -> Result<()>,
    ) -> Result<()> {
        let mut input_hashes = BTreeMap::new();
        for p in inputs {
            let h = file_hash(p).map_err(|e| {
                wrap(name, field)(Error::Dataset {
                    path: p.clone(),
                    reason: format!("missing input: {e}"),
                })
            })?;
            input_hashes.insert(self.rel(p), h);
        }
        let key_doc = json!({ "stage": name, "config": config, "inputs": input_hashes });
        let key = sha256_hex(key_doc.to_string().as_bytes());
        let meta_path = self.out.meta(name);
        if let Ok(meta) = read_json::<StageMeta>(&meta_path) {
            let intact = meta.key == key
                && outputs.len() == meta.outputs.len()
                && outputs.iter().all(|p| {
                    meta.outputs.get(&self.rel(p)).is_some_and(|h| file_hash(p).is_ok_and(|x| &x == h))
                });
            if intact {
                log::info!("stage {name}: reusing outputs");
                self.log.push(StageRun {
                    stage: name.into(),
                    reused: true,
                    key,
                });
                return Ok(());
            }
        }
        log::info!("stage {name}: running");
        let _ = std::fs::remove_file(&meta_path);
        body(&self.out).map_err(wrap(name, field))?;
        let mut hashes = BTreeMap::new();
        for p in outputs {
            hashes.insert(self.rel(p), file_hash(p).map_err(wrap(name, field))?);
        }
        let meta = StageMeta {
            stage: name.into(),
            key: key.clone(),
            outputs: hashes,
        };
        write_json(&meta_path, &meta).map_err(wrap(name, field))?;
        self.log.push(StageRun {
            stage: name.into(),
            reused: false,
            key,
        });
        Ok(())
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out.root).unwrap_or(p).to_string_lossy().into_owned()
    }

    fn run_typed<T: Scalar>(&mut self, until: Stage) -> Result<()> {
        let m = self.m;
        let o = self.out.clone();

        // Data, vocabulary and the rendered corpus.
        let (inputs, field, data_cfg) = match &m.data {
            DataSource::World { spec } => (Vec::new(), "data.spec", json!(spec)),
            DataSource::Dataset { path, .. } => (vec![path.clone()], "data.path", json!(m.data.load_options())),
        };
        if let Some(p) = &m.sampling.external_beams {
            // Checked here so a missing file fails before any training.
            if !p.exists() {
                return Err(wrap("generate", "sampling.external_beams")(Error::Dataset {
                    path: p.clone(),
                    reason: "beam dump not found".into(),
                }));
            }
        }
        let cfg = json!({ "data": data_cfg, "tokenizer": m.tokenizer, "repetition": m.repetition, "corpus_seed": m.corpus_seed });
        self.stage("generate", field, cfg, &inputs, &[o.data(), o.vocab(), o.corpus()], |o| {
            let bundle = match &m.data {
                DataSource::World { spec } => {
                    let world = generate_world(spec)?;
                    let popularity = world.popularity.clone();
                    DataBundle {
                        world: Some(world),
                        triples: Vec::new(),
                        popularity,
                    }
                }
                DataSource::Dataset { path, .. } => {
                    let load = load_external_dataset(path, &m.data.load_options().unwrap_or_default())?;
                    if load.triples.is_empty() {
                        return Err(Error::Dataset {
                            path: path.clone(),
                            reason: "no usable rows".into(),
                        });
                    }
                    DataBundle {
                        world: None,
                        triples: load.triples,
                        popularity: load.popularity,
                    }
                }
            };
            let vocab = Vocabulary::for_triples(bundle.triples(), m.tokenizer)?;
            let stream = render_corpus(bundle.triples(), &vocab, m.corpus_seed, m.repetition)?;
            write_json(&o.data(), &bundle)?;
            write_json(&o.vocab(), &vocab)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(o.corpus())?);
            write_corpus_dump(&mut f, &stream, &vocab)?;
            f.flush()?;
            Ok(())
        })?;
        if until == Stage::Generate {
            return Ok(());
        }
        let bundle: DataBundle = read_json(&o.data())?;
        let vocab: Vocabulary = read_json(&o.vocab())?;
        let triples = bundle.triples().to_vec();
        let questions = match (m.questions, bundle.world.is_some()) {
            (QuestionSplit::Tail, true) => bundle.tail_triples(),
            _ => triples.clone(),
        };
        let max_len = match m.eval.max_len {
            Some(l) => l,
            None => default_max_len(&triples, &vocab).map_err(wrap("pretrain", "eval.max_len"))?,
        };
        let mut eval_cfg = m.eval.clone();
        eval_cfg.max_len = Some(max_len);

        // Base model.
        let base_inputs = vec![o.data(), o.vocab()];
        let cfg = json!({ "model": m.model, "pretrain": m.pretrain, "corpus_seed": m.corpus_seed, "repetition": m.repetition, "max_len": max_len });
        self.stage(
            "pretrain",
            "pretrain",
            cfg,
            &base_inputs,
            &[o.checkpoint("base"), o.step_log("base"), o.epoch_log()],
            |o| {
                let stream = render_corpus(&triples, &vocab, m.corpus_seed, m.repetition)?;
                let longest = stream.iter().map(|e| e.context().len()).max().unwrap_or(1);
                let model_cfg = m.model.resolve(vocab.len(), longest + max_len);
                let mut epochs = Vec::new();
                let ckpt_dir = o.intermediate_dir("base");
                let dir = m.pretrain.checkpoint_every.map(|_| ckpt_dir.as_path());
                if let Some(d) = dir {
                    std::fs::create_dir_all(d)?;
                }
                let outcome = run_pretrain::<T>(&stream, &model_cfg, &m.pretrain, dir, |e, p| {
                    let perm = match &bundle.world {
                        Some(w) => Some(head_permeation_probe(p, &vocab, w)?),
                        None => None,
                    };
                    log::info!("pretrain epoch {} loss {:.4}", e.epoch, e.mean_loss);
                    epochs.push((e.epoch, e.steps, e.mean_loss, perm));
                    Ok(true)
                })?;
                outcome.checkpoint.save(&o.checkpoint("base"))?;
                write_step_log(&o.step_log("base"), &outcome.log)?;
                let mut f = std::io::BufWriter::new(std::fs::File::create(o.epoch_log())?);
                writeln!(f, "epoch\tsteps\tmean_loss\thead_permeation")?;
                for (e, s, l, p) in epochs {
                    writeln!(f, "{e}\t{s}\t{l}\t{}", p.map(|x| x.to_string()).unwrap_or_default())?;
                }
                f.flush()?;
                Ok(())
            },
        )?;
        if until == Stage::Pretrain {
            return Ok(());
        }

        let eval_json = json!({ "eval": eval_cfg, "questions": m.questions });
        self.eval_stage::<T>("base-eval", "base", &eval_json, &bundle, &vocab, &questions, &eval_cfg)?;
        if until == Stage::BaseEval {
            return Ok(());
        }

        // Beam dumps over every question, the raw material of the pools.
        let beam_k = m.sampling.beam_k.unwrap_or(m.eval.k);
        let (inputs_b, cfg) = match &m.sampling.external_beams {
            Some(p) => (vec![p.clone(), o.data()], json!({ "external": true })),
            None => (
                vec![o.checkpoint("base"), o.data(), o.vocab()],
                json!({ "beam_k": beam_k, "max_len": max_len }),
            ),
        };
        let field = if m.sampling.external_beams.is_some() {
            "sampling.external_beams"
        } else {
            "sampling.beam_k"
        };
        self.stage("beam", field, cfg, &inputs_b, &[o.beams()], |o| {
            let dumps = match &m.sampling.external_beams {
                Some(p) => {
                    let dumps = read_beam_dumps(p)?;
                    let known: std::collections::BTreeSet<&str> = triples.iter().map(|t| t.id.as_str()).collect();
                    if let Some(d) = dumps.iter().find(|d| !known.contains(d.question_id.as_str())) {
                        return Err(Error::UnknownTriple(d.question_id.clone()));
                    }
                    dumps
                }
                None => {
                    let base = Checkpoint::<T>::load(&o.checkpoint("base"))?;
                    let mut dumps = Vec::with_capacity(triples.len());
                    for t in &triples {
                        let ex = render_example(t, &vocab)?;
                        let hyps = beam_search(&base.params, &vocab, ex.context(), beam_k, max_len)?;
                        dumps.push(BeamDump::new(&t.id, &t.category, &hyps));
                    }
                    dumps
                }
            };
            write_beam_dumps(&o.beams(), &dumps)
        })?;
        if until == Stage::Beam {
            return Ok(());
        }

        let pool_cfg = m.sampling.pool_config();
        self.stage(
            "pool",
            "sampling",
            json!(pool_cfg),
            &[o.beams(), o.data()],
            &[o.pools()],
            |o| {
                let dumps = read_beam_dumps(&o.beams())?;
                let pools = discover_pool(&dumps, &triples, &pool_cfg)?;
                write_json(&o.pools(), &pools)
            },
        )?;
        if until == Stage::Pool {
            return Ok(());
        }

        // Preference pairs: the configured mode, plus popularity draws when
        // that baseline is requested.
        let ablations = m.ablation_set();
        let mut variants = vec![("main", m.sampling.mode)];
        if ablations.contains(&Ablation::Popularity) {
            variants.push(("popularity", SamplingMode::Popularity));
        }
        let mut outputs = Vec::new();
        for (v, _) in &variants {
            outputs.push(o.pair_rows(v));
            outputs.push(o.pair_sidecar(v));
        }
        let cfg = json!({ "sampling": m.sampling, "variants": variants, "questions": m.questions });
        self.stage(
            "pairs",
            "sampling.mode",
            cfg,
            &[o.pools(), o.beams(), o.data()],
            &outputs,
            |o| {
                let pools: BTreeMap<String, CandidatePool> = read_json(&o.pools())?;
                let dumps = read_beam_dumps(&o.beams())?;
                for (v, mode) in &variants {
                    let pairs = build_variant_pairs(m, *mode, &questions, &pools, &dumps, &bundle)?;
                    write_pairs(&o.pair_rows(v), &o.pair_sidecar(v), &pairs)?;
                }
                Ok(())
            },
        )?;
        if until == Stage::Pairs {
            return Ok(());
        }

        let probes = probe_questions(&questions, &vocab, m.probe_questions)?;
        self.train_stage::<T>("train-rl", "pretrainrl", "main", m.pretrainrl.objective, &vocab, &triples, &probes)?;
        if until == Stage::TrainRl {
            return Ok(());
        }
        self.eval_stage::<T>("eval", "pretrainrl", &eval_json, &bundle, &vocab, &questions, &eval_cfg)?;
        if until == Stage::Eval {
            return Ok(());
        }

        for a in &ablations {
            let pairs = if *a == Ablation::Popularity { "popularity" } else { "main" };
            let name = a.name();
            self.train_stage::<T>(&format!("train-{name}"), name, pairs, a.objective(), &vocab, &triples, &probes)?;
            self.eval_stage::<T>(&format!("eval-{name}"), name, &eval_json, &bundle, &vocab, &questions, &eval_cfg)?;
        }
        if until == Stage::Ablations {
            return Ok(());
        }

        let mut methods: Vec<String> = vec!["base".into(), "pretrainrl".into()];
        methods.extend(ablations.iter().map(|a| a.name().to_string()));
        let inputs: Vec<PathBuf> = methods
            .iter()
            .flat_map(|x| [o.method_report(x), o.traces(x)])
            .filter(|p| !p.ends_with("traces/base.csv"))
            .collect();
        self.stage(
            "report",
            "ablations",
            json!({ "methods": methods }),
            &inputs,
            &[o.table_markdown(), o.table_tsv(), o.trajectories()],
            |o| report(&o.root).map(|_| ()),
        )?;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn train_stage<T: Scalar>(
        &mut self,
        stage: &str,
        method: &str,
        pairs_variant: &str,
        objective: crate::train::Objective,
        vocab: &Vocabulary,
        triples: &[KnowledgeTriple],
        probes: &[ProbeQuestion],
    ) -> Result<()> {
        let m = self.m;
        let o = self.out.clone();
        let mut cfg = m.pretrainrl.clone();
        cfg.objective = objective;
        let key = json!({ "pretrainrl": cfg, "probes": m.probe_questions, "probe_every": m.probe_every });
        let inputs = [
            o.checkpoint("base"),
            o.pair_rows(pairs_variant),
            o.pair_sidecar(pairs_variant),
            o.vocab(),
            o.data(),
        ];
        let outputs = [o.checkpoint(method), o.step_log(method), o.traces(method)];
        self.stage(stage, "pretrainrl", key, &inputs, &outputs, |o| {
            let base = Checkpoint::<T>::load(&o.checkpoint("base"))?;
            let pairs = read_pairs(&o.pair_rows(pairs_variant), &o.pair_sidecar(pairs_variant))?;
            let tokens = pairs.iter().map(|p| tokenize_pair(p, vocab)).collect::<Result<Vec<_>>>()?;
            let corpus = match cfg.ct_source {
                crate::train::CtSource::Winners => Vec::new(),
                crate::train::CtSource::WinnersAndCorpus => {
                    render_corpus(triples, vocab, m.corpus_seed, m.repetition)?
                }
            };
            let outcome = run_pretrainrl(&tokens, &base, &cfg, &corpus, probes, m.probe_every)?;
            if !outcome.reference_intact {
                return Err(Error::Checkpoint("reference parameters changed during training".into()));
            }
            outcome.checkpoint.save(&o.checkpoint(method))?;
            write_step_log(&o.step_log(method), &outcome.log)?;
            write_traces(&o.traces(method), &outcome.traces)
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_stage<T: Scalar>(
        &mut self,
        stage: &str,
        method: &str,
        eval_json: &serde_json::Value,
        bundle: &DataBundle,
        vocab: &Vocabulary,
        questions: &[KnowledgeTriple],
        cfg: &crate::eval::EvalConfig,
    ) -> Result<()> {
        let o = self.out.clone();
        let inputs = [o.checkpoint(method), o.data(), o.vocab()];
        let outputs = [o.method_report(method), o.records(method)];
        self.stage(stage, "eval", eval_json.clone(), &inputs, &outputs, |o| {
            let ckpt = Checkpoint::<T>::load(&o.checkpoint(method))?;
            let (rep, records) = evaluate(&ckpt.params, vocab, questions, cfg)?;
            let head_permeation = match &bundle.world {
                Some(w) => Some(head_permeation_probe(&ckpt.params, vocab, w)?),
                None => None,
            };
            write_records_tsv(&o.records(method), &records)?;
            write_json(
                &o.method_report(method),
                &MethodReport {
                    method: method.to_string(),
                    checkpoint_hash: file_hash(&o.checkpoint(method))?,
                    report: rep,
                    head_permeation,
                },
            )
        })
    }
}

fn build_variant_pairs(
    m: &ExperimentManifest,
    mode: SamplingMode,
    questions: &[KnowledgeTriple],
    pools: &BTreeMap<String, CandidatePool>,
    dumps: &[BeamDump],
    bundle: &DataBundle,
) -> Result<Vec<PreferencePair>> {
    let s = &m.sampling;
    let mut out = Vec::new();
    match mode {
        SamplingMode::CategoryPool => {
            for t in questions {
                let pool = pools.get(&t.category).ok_or_else(|| Error::EmptyCategory(t.category.clone()))?;
                let draw = sample_negatives(pool, t, s.n, s.seed, s.truth_filter)?;
                out.extend(build_pairs(t, &draw.losers)?);
            }
        }
        SamplingMode::PerInstance => {
            let by_id: BTreeMap<&str, &BeamDump> = dumps.iter().map(|d| (d.question_id.as_str(), d)).collect();
            for t in questions {
                let dump = by_id.get(t.id.as_str()).ok_or_else(|| Error::UnknownTriple(t.id.clone()))?;
                let losers = instance_negatives(dump, t, s.instance_threshold, s.truth_filter)?;
                out.extend(build_pairs(t, &losers)?);
            }
        }
        SamplingMode::Popularity => {
            if bundle.popularity.is_empty() {
                return Err(Error::InvalidConfig("popularity sampling needs popularity scores".into()));
            }
            let draws = popularity_sampler(
                questions,
                &bundle.popularity,
                s.popularity_quantile,
                s.n,
                s.seed,
                s.popularity_scope,
            )?;
            for t in questions {
                out.extend(build_pairs(t, &draws[&t.id])?);
            }
        }
    }
    Ok(out)
}

fn probe_questions(questions: &[KnowledgeTriple], vocab: &Vocabulary, n: usize) -> Result<Vec<ProbeQuestion>> {
    questions
        .iter()
        .take(n)
        .map(|t| {
            let ex = render_example(t, vocab)?;
            let mut continuation = ex.answer_tokens.clone();
            continuation.push(EOS_ID);
            Ok(ProbeQuestion {
                id: t.id.clone(),
                context: ex.context().to_vec(),
                continuation,
            })
        })
        .collect()
}

fn write_traces(path: &Path, traces: &[TracePoint]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["step", "question_id", "logprob", "prob"]).map_err(csv_err)?;
    for t in traces {
        w.write_record([
            t.step.to_string(),
            t.question_id.clone(),
            t.logprob.to_string(),
            t.logprob.exp().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
