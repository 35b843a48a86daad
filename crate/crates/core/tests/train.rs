mod common;

use approx::assert_abs_diff_eq;
use common::{cfg64, finite_difference_check, jitter, random_pairs};
use longtail_lab::corpus::{TokenizerMode, Vocabulary, BOS_ID, EOS_ID};
use longtail_lab::model::{sequence_logprob, Checkpoint, ModelConfig, Parameters, Precision};
use longtail_lab::negsample::PreferencePair;
use longtail_lab::train::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn adamw_scalar_example() {
    let cfg = ModelConfig::new(4, 2, 1, 2, 1);
    let mut p = Parameters::<f64>::zeros(&cfg.clone().with_precision(Precision::F64)).unwrap();
    p.as_mut_slice()[0] = 1.0;
    let mut g = p.zeros_like();
    g.as_mut_slice()[0] = 2.0;
    let mut tc = TrainConfig::new(0.1, 1, 1, 0);
    tc.weight_decay = 0.0;
    let mut st = AdamState::new(&p);
    optimizer_step(&mut p, &g, &mut st, &tc).unwrap();
    // m_hat = 2, v_hat = 4: w = 1 - 0.1 * 2 / (2 + eps)
    assert_abs_diff_eq!(p.as_slice()[0], 0.9, epsilon = 1e-8);
    assert!(p.as_slice()[1..].iter().all(|v| *v == 0.0));
}

#[test]
fn decoupled_decay_and_zero_gradient() {
    let cfg = ModelConfig::new(4, 2, 1, 2, 1).with_precision(Precision::F64).with_seed(1);
    let p0 = Parameters::<f64>::init(&cfg).unwrap();
    let g = p0.zeros_like();
    let mut tc = TrainConfig::new(0.1, 1, 1, 0);
    tc.weight_decay = 0.0;
    let mut p = p0.clone();
    optimizer_step(&mut p, &g, &mut AdamState::new(&p0), &tc).unwrap();
    assert_eq!(p, p0);
    tc.weight_decay = 0.1;
    optimizer_step(&mut p, &g, &mut AdamState::new(&p0), &tc).unwrap();
    for (a, b) in p.as_slice().iter().zip(p0.as_slice()) {
        assert_abs_diff_eq!(*a, b * 0.99, epsilon = 1e-15);
    }
    let mut bad = g.clone();
    bad.as_mut_slice()[3] = f64::INFINITY;
    assert!(optimizer_step(&mut p, &bad, &mut AdamState::new(&p0), &tc).is_err());
}

#[test]
fn uniform_model_losses() {
    let p = Parameters::<f64>::zeros(&cfg64(10, 8, 0)).unwrap();
    let l = ntp_loss(&p, &[&[1, 5, 6, 2], &[1, 7]], None).unwrap();
    assert_abs_diff_eq!(l, 2.302585, epsilon = 1e-6);
    let p2 = Parameters::<f64>::zeros(&ModelConfig::new(2, 4, 1, 4, 1).with_precision(Precision::F64)).unwrap();
    assert_abs_diff_eq!(ntp_loss(&p2, &[&[0, 1]], None).unwrap(), 0.693147, epsilon = 1e-6);
    assert!(ntp_loss(&p, &[], None).is_err());
    assert_eq!(ct_loss(&p, &[&[1, 5, 6, 2]], None).unwrap(), ntp_loss(&p, &[&[1, 5, 6, 2]], None).unwrap());
}

#[test]
fn pad_targets_are_excluded() {
    let p = Parameters::<f64>::init(&cfg64(10, 8, 2)).unwrap();
    let with_pad = ntp_loss(&p, &[&[1, 5, 6, 0]], None).unwrap();
    let lp = sequence_logprob(&p, &[1], &[5, 6]).unwrap();
    assert_abs_diff_eq!(with_pad, -lp / 2.0, epsilon = 1e-12);
}

#[test]
fn dpo_is_ln2_at_reference() {
    let p = Parameters::<f64>::init(&cfg64(20, 16, 3)).unwrap();
    let pairs = random_pairs(100, 20, 1);
    let reference = reference_logprobs(&p, &pairs).unwrap();
    for beta in BETA_SWEEP {
        let l = dpo_loss(&p, &pairs, &reference, beta, None).unwrap();
        assert_eq!(l, std::f64::consts::LN_2);
    }
}

#[test]
fn dpo_margin_oracle() {
    let p = Parameters::<f64>::init(&cfg64(20, 16, 3)).unwrap();
    let pairs = random_pairs(1, 20, 2);
    let mut reference = reference_logprobs(&p, &pairs).unwrap();
    reference[0].0 -= 5.0;
    let l = dpo_loss(&p, &pairs, &reference, 0.1, None).unwrap();
    let oracle = -(1.0 / (1.0 + (-0.5f64).exp())).ln();
    assert_abs_diff_eq!(l, oracle, epsilon = 1e-12);
    assert_abs_diff_eq!(l, 0.474077, epsilon = 1e-6);
}

#[test]
fn dpo_scores_answer_span_only() {
    let p = Parameters::<f64>::init(&cfg64(20, 16, 4)).unwrap();
    let pairs = random_pairs(5, 20, 3);
    let reference = vec![(-3.0, -4.0); 5];
    let beta = 0.5;
    // oracle from sequence_logprob, which never scores the prompt
    let mut oracle = 0.0;
    for pt in &pairs {
        let pw = sequence_logprob(&p, &pt.context, &pt.winner).unwrap();
        let pl = sequence_logprob(&p, &pt.context, &pt.loser).unwrap();
        let z: f64 = beta * ((pw + 3.0) - (pl + 4.0));
        oracle += (1.0 + (-z).exp()).ln() / 5.0;
    }
    assert_abs_diff_eq!(dpo_loss(&p, &pairs, &reference, beta, None).unwrap(), oracle, epsilon = 1e-12);
    let refs = reference_logprobs(&p, &pairs).unwrap();
    for (pt, (w, l)) in pairs.iter().zip(refs) {
        assert_abs_diff_eq!(w, sequence_logprob(&p, &pt.context, &pt.winner).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, sequence_logprob(&p, &pt.context, &pt.loser).unwrap(), epsilon = 1e-12);
    }
}

#[test]
fn dpo_step_direction_at_reference() {
    let p = Parameters::<f64>::init(&cfg64(20, 16, 5)).unwrap();
    let pairs = random_pairs(1, 20, 4);
    let reference = reference_logprobs(&p, &pairs).unwrap();
    let mut g = p.zeros_like();
    dpo_loss(&p, &pairs, &reference, 0.1, Some(&mut g)).unwrap();
    let mut q = p.clone();
    q.add_scaled(-1e-2, &g);
    let after = reference_logprobs(&q, &pairs).unwrap();
    assert!(after[0].0 > reference[0].0);
    assert!(after[0].1 < reference[0].1);
}

#[test]
fn combined_additivity_and_lambda_zero() {
    let p = Parameters::<f64>::init(&cfg64(20, 16, 6)).unwrap();
    let pairs = random_pairs(8, 20, 5);
    let reference = vec![(-6.0, -3.0); 8];
    let d = dpo_loss(&p, &pairs, &reference, 0.1, None).unwrap();
    let winners: Vec<Vec<u32>> = pairs.iter().map(PairTokens::winner_sequence).collect();
    let wref: Vec<&[u32]> = winners.iter().map(Vec::as_slice).collect();
    let c = ct_loss(&p, &wref, None).unwrap();
    let v = pretrainrl_loss(&p, &pairs, &reference, 0.1, 0.7, None).unwrap();
    assert_abs_diff_eq!(v.total, d + 0.7 * c, epsilon = 1e-12);
    assert_eq!(pretrainrl_loss(&p, &pairs, &reference, 0.1, 0.0, None).unwrap().total, d);
    // the CT term ignores losers
    let mut other = pairs.clone();
    for pt in &mut other {
        pt.loser = vec![4, 4, EOS_ID];
    }
    assert_eq!(pretrainrl_loss(&p, &other, &reference, 0.1, 0.7, None).unwrap().ct, v.ct);
}

#[test]
fn identical_pair_is_rejected() {
    let p = Parameters::<f64>::init(&cfg64(20, 16, 6)).unwrap();
    let mut pairs = random_pairs(1, 20, 5);
    pairs[0].loser = pairs[0].winner.clone();
    assert!(dpo_loss(&p, &pairs, &[(0.0, 0.0)], 0.1, None).is_err());
    let mut tokens: Vec<String> = ["<pad>", "<bos>", "<eos>", "<unk>"].map(String::from).to_vec();
    tokens.extend(["What", "Rome", "?"].map(String::from));
    let vocab = Vocabulary::from_tokens(TokenizerMode::EntityAtomic, tokens).unwrap();
    let pair = PreferencePair {
        triple_id: "t".into(),
        prompt: "What?".into(),
        winner: "Rome".into(),
        loser: "Rome".into(),
    };
    assert!(tokenize_pair(&pair, &vocab).is_err());
}

fn check_grad(mut loss: impl FnMut(&Parameters<f64>, Option<&mut Parameters<f64>>) -> f64, seed: u64) {
    let mut p = Parameters::<f64>::init(&cfg64(20, 16, seed)).unwrap();
    jitter(&mut p, 0.1, seed);
    let mut g = p.zeros_like();
    loss(&p, Some(&mut g));
    let worst = finite_difference_check(&mut p, &g, 200, seed, |q| loss(q, None));
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn gradient_checks_for_every_loss() {
    let pairs = random_pairs(3, 20, 7);
    let seqs: Vec<Vec<u32>> = pairs.iter().map(PairTokens::winner_sequence).collect();
    let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
    let reference = vec![(-5.0, -2.0), (-1.0, -6.0), (-3.0, -3.5)];
    check_grad(|p, g| ntp_loss(p, &refs, g).unwrap(), 1);
    check_grad(|p, g| ct_loss(p, &refs, g).unwrap(), 2);
    check_grad(|p, g| dpo_loss(p, &pairs, &reference, 0.5, g).unwrap(), 3);
    check_grad(|p, g| pretrainrl_loss(p, &pairs, &reference, 0.5, 0.8, g).unwrap().total, 4);
}

fn toy_examples() -> Vec<longtail_lab::corpus::RenderedExample> {
    (0..12)
        .map(|i| {
            let prompt = vec![4 + (i % 5) as u32, 9];
            let answer = vec![10 + (i % 3) as u32];
            let mut full = vec![BOS_ID];
            full.extend(&prompt);
            full.extend(&answer);
            full.push(EOS_ID);
            longtail_lab::corpus::RenderedExample {
                triple_id: format!("t{i}"),
                prompt_tokens: prompt,
                answer_tokens: answer,
                full_tokens: full,
            }
        })
        .collect()
}

#[test]
fn pretraining_is_deterministic_and_learns() {
    let model = ModelConfig::new(14, 8, 1, 16, 2).with_seed(1);
    let tc = TrainConfig::new(1e-2, 4, 8, 9);
    let ex = toy_examples();
    let a = run_pretrain::<f32>(&ex, &model, &tc, None, |_, _| Ok(true)).unwrap();
    let b = run_pretrain::<f32>(&ex, &model, &tc, None, |_, _| Ok(true)).unwrap();
    assert_eq!(a.checkpoint.hash().unwrap(), b.checkpoint.hash().unwrap());
    assert_eq!(a.log.len(), 24);
    assert!(a.log.last().unwrap().loss < a.log[0].loss);
    let mut epochs = 0;
    run_pretrain::<f32>(&ex, &model, &tc, None, |e, _| {
        epochs = e.epoch + 1;
        Ok(e.epoch < 2)
    })
    .unwrap();
    assert_eq!(epochs, 3);
}

#[test]
fn intermediate_checkpoints_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelConfig::new(14, 8, 1, 8, 2);
    let mut tc = TrainConfig::new(1e-2, 4, 2, 0);
    tc.checkpoint_every = Some(2);
    run_pretrain::<f32>(&toy_examples(), &model, &tc, Some(dir.path()), |_, _| Ok(true)).unwrap();
    let n = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(n, 3);
    Checkpoint::<f32>::load(&dir.path().join("step-000002.ckpt")).unwrap();
}

#[test]
fn pretrainrl_keeps_reference_and_is_deterministic() {
    let model = ModelConfig::new(20, 16, 1, 16, 2).with_seed(3);
    let base = Checkpoint::new(Parameters::<f32>::init(&model).unwrap(), 0, &ChaCha8Rng::seed_from_u64(0));
    let pairs = random_pairs(10, 20, 8);
    let probes = vec![ProbeQuestion {
        id: "p0".into(),
        context: pairs[0].context.clone(),
        continuation: pairs[0].winner.clone(),
    }];
    let mut tc = TrainConfig::new(1e-2, 4, 2, 5);
    for objective in [Objective::Combined, Objective::WithoutCt, Objective::CtOnly] {
        tc.objective = objective;
        let a = run_pretrainrl(&pairs, &base, &tc, &[], &probes, 2).unwrap();
        let b = run_pretrainrl(&pairs, &base, &tc, &[], &probes, 2).unwrap();
        assert!(a.reference_intact);
        assert_eq!(a.reference_hash, base.params.content_hash());
        assert_eq!(a.checkpoint.hash().unwrap(), b.checkpoint.hash().unwrap());
        assert_eq!(a.log.len(), 6);
        // step 0, 2, 4, 6
        assert_eq!(a.traces.len(), 4);
        assert!(a.traces.last().unwrap().logprob > a.traces[0].logprob || objective == Objective::WithoutCt);
        if objective == Objective::CtOnly {
            assert!(a.log.iter().all(|r| r.dpo == 0.0));
        }
    }
    tc.objective = Objective::Combined;
    tc.ct_source = CtSource::WinnersAndCorpus;
    assert!(run_pretrainrl(&pairs, &base, &tc, &[], &probes, 0).is_err());
    let ex: Vec<_> = toy_examples();
    let out = run_pretrainrl(&pairs, &base, &tc, &ex, &probes, 0).unwrap();
    assert_eq!(out.traces.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    write_step_log(&dir.path().join("log.tsv"), &out.log).unwrap();
}
