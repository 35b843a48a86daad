use approx::assert_abs_diff_eq;
use longtail_lab::model::{
    backward, forward, forward_batch, sequence_logprob, Checkpoint, LanguageModel, ModelConfig, Parameters,
    Precision,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(vocab: usize, layers: usize, dim: usize, heads: usize, seed: u64) -> ModelConfig {
    ModelConfig::new(vocab, 12, layers, dim, heads).with_seed(seed)
}

fn ntp_upstream(seq: &[u32], rows: usize, vocab: usize) -> Array2<f64> {
    let mut g = Array2::zeros((rows, vocab));
    let n = (seq.len() - 1) as f64;
    for t in 0..seq.len() - 1 {
        g[[t, seq[t + 1] as usize]] = -1.0 / n;
    }
    g
}

fn ntp_loss(p: &Parameters<f64>, seq: &[u32]) -> f64 {
    let lp = forward(p, &seq[..seq.len() - 1]).unwrap();
    let n = (seq.len() - 1) as f64;
    -(0..seq.len() - 1).map(|t| lp[[t, seq[t + 1] as usize]]).sum::<f64>() / n
}

fn grad_check(cfg: ModelConfig, seq: &[u32], probes: usize) {
    let mut cfg = cfg.with_precision(Precision::F64);
    cfg.init_scale = 0.3;
    let mut p = Parameters::<f64>::init(&cfg).unwrap();
    // non-trivial norm parameters and biases
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in p.as_mut_slice() {
        *v += rng.random_range(-0.1..0.1);
    }
    let input = &seq[..seq.len() - 1];
    let pass = forward_batch(&p, &[input], &[0..input.len()]).unwrap();
    let mut grads = p.zeros_like();
    backward(&p, &pass, &ntp_upstream(seq, input.len(), cfg.vocab_size), &mut grads).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for spec in p.tensor_specs().to_vec() {
        for _ in 0..probes {
            let i = spec.offset + rng.random_range(0..spec.numel());
            let orig = p.as_slice()[i];
            p.as_mut_slice()[i] = orig + h;
            let up = ntp_loss(&p, seq);
            p.as_mut_slice()[i] = orig - h;
            let down = ntp_loss(&p, seq);
            p.as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.as_slice()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel < 1e-4,
                "{} [{}]: analytic {analytic} numeric {numeric} rel {rel}",
                spec.name,
                i - spec.offset
            );
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn zeroed_parameters_give_uniform_rows() {
    let cfg = tiny(10, 1, 8, 2, 0);
    let p = Parameters::<f32>::zeros(&cfg).unwrap();
    let lp = forward(&p, &[1, 4, 5, 6]).unwrap();
    for v in lp.iter() {
        assert_abs_diff_eq!(*v as f64, -(10f64).ln(), epsilon = 1e-6);
    }
    assert_abs_diff_eq!(-(10f64).ln(), -2.302585, epsilon = 1e-6);
}

#[test]
fn zeroed_sequence_logprob_is_length_times_uniform() {
    let cfg = tiny(10, 2, 8, 2, 0).with_precision(Precision::F64);
    let p = Parameters::<f64>::zeros(&cfg).unwrap();
    let lp = sequence_logprob(&p, &[1, 4], &[5, 6, 2]).unwrap();
    assert_abs_diff_eq!(lp, -6.907755, epsilon = 1e-6);
}

#[test]
fn empty_continuation_and_long_sequences_are_errors() {
    let cfg = tiny(10, 1, 8, 2, 0);
    let p = Parameters::<f32>::init(&cfg).unwrap();
    assert!(sequence_logprob(&p, &[1], &[]).is_err());
    assert!(forward(&p, &[1; 13]).is_err());
    assert!(forward(&p, &[1, 10]).is_err());
    assert!(sequence_logprob(&p, &[1; 10], &[2, 2, 2]).is_err());
}

#[test]
fn init_is_seeded_and_finite() {
    let a = Parameters::<f32>::init(&tiny(10, 2, 8, 2, 1)).unwrap();
    let b = Parameters::<f32>::init(&tiny(10, 2, 8, 2, 1)).unwrap();
    let c = Parameters::<f32>::init(&tiny(10, 2, 8, 2, 2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(forward(&a, &[1, 2, 3]).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn causality_is_bit_exact() {
    let p = Parameters::<f32>::init(&tiny(16, 2, 16, 4, 5)).unwrap();
    let a = forward(&p, &[1, 5, 7, 9, 3]).unwrap();
    let b = forward(&p, &[1, 5, 7, 9, 11]).unwrap();
    for t in 0..4 {
        assert_eq!(a.row(t), b.row(t));
    }
    assert_ne!(a.row(4), b.row(4));
}

#[test]
fn rows_are_identical_alone_or_batched() {
    let p = Parameters::<f32>::init(&tiny(16, 2, 16, 4, 5)).unwrap();
    let s1: &[u32] = &[1, 5, 7];
    let s2: &[u32] = &[1, 8, 8, 8, 9, 10];
    let pass = forward_batch(&p, &[s1, s2], &[0..3, 2..6]).unwrap();
    let alone1 = forward(&p, s1).unwrap();
    let alone2 = forward(&p, s2).unwrap();
    for t in 0..3 {
        assert_eq!(pass.logprobs.row(pass.row(0, t).unwrap()), alone1.row(t));
    }
    for t in 2..6 {
        assert_eq!(pass.logprobs.row(pass.row(1, t).unwrap()), alone2.row(t));
    }
    assert_eq!(pass.row(1, 1), None);
    let next = p.next_logprobs(&[s2]).unwrap();
    assert_eq!(next[0][3], alone2[[5, 3]] as f64);
}

#[test]
fn chain_rule_additivity() {
    let p = Parameters::<f64>::init(&tiny(16, 2, 16, 2, 7).with_precision(Precision::F64)).unwrap();
    let prompt = [1, 4, 5];
    let (a, b) = ([6, 7], [8, 2]);
    let whole = sequence_logprob(&p, &prompt, &[6, 7, 8, 2]).unwrap();
    let first = sequence_logprob(&p, &prompt, &a).unwrap();
    let second = sequence_logprob(&p, &[1, 4, 5, 6, 7], &b).unwrap();
    assert_abs_diff_eq!(whole, first + second, epsilon = 1e-9);
    let trait_default = LanguageModel::sequence_logprob(&p, &prompt, &[6, 7, 8, 2]).unwrap();
    assert_abs_diff_eq!(whole, trait_default, epsilon = 1e-9);
}

#[test]
fn gradient_check_tiny_two_tokens() {
    grad_check(tiny(10, 1, 8, 2, 3), &[1, 6, 2], 6);
}

#[test]
fn gradient_check_two_layers() {
    grad_check(tiny(12, 2, 8, 2, 4), &[1, 4, 7, 4, 9, 2], 4);
}

#[test]
fn gradient_check_f32_is_loose_but_close() {
    let cfg = tiny(10, 1, 8, 2, 3);
    let p = Parameters::<f32>::init(&cfg).unwrap();
    let seq = [1u32, 6, 2];
    let pass = forward_batch(&p, &[&seq[..2]], &[0..2]).unwrap();
    let mut up = pass.zero_grad();
    up[[0, 6]] = -0.5;
    up[[1, 2]] = -0.5;
    let mut g = p.zeros_like();
    backward(&p, &pass, &up, &mut g).unwrap();
    // compare with the f64 gradient of the same weights
    let cfg64 = cfg.clone().with_precision(Precision::F64);
    let p64 = Parameters::<f64>::init(&cfg64).unwrap();
    let pass64 = forward_batch(&p64, &[&seq[..2]], &[0..2]).unwrap();
    let mut g64 = p64.zeros_like();
    backward(&p64, &pass64, &ntp_upstream(&seq, 2, 10), &mut g64).unwrap();
    for (a, b) in g.as_slice().iter().zip(g64.as_slice()) {
        let rel = (*a as f64 - b).abs() / (a.abs() as f64).max(b.abs()).max(1e-3);
        assert!(rel < 1e-2);
    }
}

#[test]
fn output_bias_gradient_is_softmax_minus_onehot() {
    let cfg = tiny(10, 1, 8, 2, 8).with_precision(Precision::F64);
    let p = Parameters::<f64>::init(&cfg).unwrap();
    let seq = [1u32, 3, 5, 7];
    let input = &seq[..3];
    let pass = forward_batch(&p, &[input], &[0..3]).unwrap();
    let mut up = pass.zero_grad();
    for t in 0..3 {
        up[[t, seq[t + 1] as usize]] = -1.0;
    }
    let mut g = p.zeros_like();
    backward(&p, &pass, &up, &mut g).unwrap();
    let mut oracle = vec![0.0; 10];
    for t in 0..3 {
        for (v, o) in oracle.iter_mut().enumerate() {
            *o += pass.logprobs[[t, v]].exp() - if v as u32 == seq[t + 1] { 1.0 } else { 0.0 };
        }
    }
    let bias = g.tensor("head.bias").unwrap();
    for v in 0..10 {
        assert_abs_diff_eq!(bias[v], oracle[v], epsilon = 1e-12);
    }
}

#[test]
fn constant_loss_gives_zero_gradient() {
    let p = Parameters::<f64>::init(&tiny(10, 1, 8, 2, 8).with_precision(Precision::F64)).unwrap();
    let pass = forward_batch(&p, &[&[1, 2, 3]], &[0..3]).unwrap();
    let mut g = p.zeros_like();
    backward(&p, &pass, &pass.zero_grad(), &mut g).unwrap();
    assert!(g.as_slice().iter().all(|v| *v == 0.0));
}

#[test]
fn non_finite_upstream_is_rejected() {
    let p = Parameters::<f64>::init(&tiny(10, 1, 8, 2, 8).with_precision(Precision::F64)).unwrap();
    let pass = forward_batch(&p, &[&[1, 2, 3]], &[0..3]).unwrap();
    let mut up = pass.zero_grad();
    up[[0, 0]] = f64::NAN;
    assert!(backward(&p, &pass, &up, &mut p.zeros_like()).is_err());
}

#[test]
fn backward_is_deterministic() {
    let p = Parameters::<f32>::init(&tiny(10, 2, 8, 2, 8)).unwrap();
    let run = || {
        let pass = forward_batch(&p, &[&[1, 2, 3], &[1, 4]], &[0..3, 0..2]).unwrap();
        let mut up = pass.zero_grad();
        up.fill(-0.1);
        let mut g = p.zeros_like();
        backward(&p, &pass, &up, &mut g).unwrap();
        g
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_preserves_predictions() {
    let p = Parameters::<f32>::init(&tiny(10, 1, 8, 2, 8)).unwrap();
    let c = Checkpoint::new(p.clone(), 3, &ChaCha8Rng::seed_from_u64(0));
    let back = Checkpoint::<f32>::from_bytes(&c.to_bytes().unwrap()).unwrap();
    assert_eq!(forward(&back.params, &[1, 2]).unwrap(), forward(&p, &[1, 2]).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rows_are_normalized(seq in prop::collection::vec(0u32..14, 1..12), seed in 0u64..50) {
        let p = Parameters::<f32>::init(&tiny(14, 1, 8, 2, seed)).unwrap();
        let lp = forward(&p, &seq).unwrap();
        for row in lp.outer_iter() {
            let total: f64 = row.iter().map(|v| (*v as f64).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|v| *v <= 0.0));
        }
        let p64 = Parameters::<f64>::init(&tiny(14, 1, 8, 2, seed).with_precision(Precision::F64)).unwrap();
        for row in forward(&p64, &seq).unwrap().outer_iter() {
            let total: f64 = row.iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbing_future_tokens_leaves_past_rows(
        seq in prop::collection::vec(0u32..14, 2..12),
        cut in 0usize..11,
        tok in 0u32..14,
    ) {
        let cut = cut % (seq.len() - 1);
        let p = Parameters::<f32>::init(&tiny(14, 2, 8, 2, 1)).unwrap();
        let mut other = seq.clone();
        other[cut + 1] = tok;
        let a = forward(&p, &seq).unwrap();
        let b = forward(&p, &other).unwrap();
        for t in 0..=cut {
            prop_assert_eq!(a.row(t), b.row(t));
        }
    }

    #[test]
    fn sequence_logprob_is_non_positive(cont in prop::collection::vec(0u32..14, 1..6), seed in 0u64..20) {
        let p = Parameters::<f32>::init(&tiny(14, 1, 8, 2, seed)).unwrap();
        prop_assert!(sequence_logprob(&p, &[1, 3], &cont).unwrap() <= 0.0);
    }
}
