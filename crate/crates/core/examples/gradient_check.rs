//! Compares the hand-written gradients of the training losses against
//! central finite differences on a tiny f64 model.
//!
//! cargo run --example gradient_check

use longtail_lab::corpus::{BOS_ID, EOS_ID};
use longtail_lab::model::{ModelConfig, Parameters, Precision};
use longtail_lab::train::{dpo_loss, ntp_loss, pretrainrl_loss, PairTokens};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn worst_error(
    params: &mut Parameters<f64>,
    probes: usize,
    loss: impl Fn(&Parameters<f64>, Option<&mut Parameters<f64>>) -> f64,
) -> f64 {
    let mut grads = params.zeros_like();
    loss(params, Some(&mut grads));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.random_range(0..params.len());
        let orig = params.as_slice()[i];
        params.as_mut_slice()[i] = orig + h;
        let up = loss(params, None);
        params.as_mut_slice()[i] = orig - h;
        let down = loss(params, None);
        params.as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.as_slice()[i];
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

fn main() -> longtail_lab::Result<()> {
    let mut cfg = ModelConfig::new(12, 16, 1, 16, 2).with_seed(3).with_precision(Precision::F64);
    cfg.init_scale = 0.3;
    let mut params = Parameters::<f64>::init(&cfg)?;

    let pairs = vec![
        PairTokens {
            triple_id: "a".into(),
            context: vec![BOS_ID, 5, 6],
            winner: vec![7, EOS_ID],
            loser: vec![8, EOS_ID],
        },
        PairTokens {
            triple_id: "b".into(),
            context: vec![BOS_ID, 9],
            winner: vec![10, 11, EOS_ID],
            loser: vec![4, EOS_ID],
        },
    ];
    let seqs: Vec<Vec<u32>> = pairs.iter().map(PairTokens::winner_sequence).collect();
    let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
    let reference = [(-5.0, -2.0), (-1.0, -4.0)];

    let ntp = worst_error(&mut params, 100, |p, g| ntp_loss(p, &refs, g).unwrap());
    let dpo = worst_error(&mut params, 100, |p, g| dpo_loss(p, &pairs, &reference, 0.5, g).unwrap());
    let both = worst_error(&mut params, 100, |p, g| {
        pretrainrl_loss(p, &pairs, &reference, 0.5, 1.0, g).unwrap().total
    });
    println!("{} parameters, 100 probes each", params.len());
    println!("next-token loss   worst relative error {ntp:.2e}");
    println!("preference loss   worst relative error {dpo:.2e}");
    println!("combined loss     worst relative error {both:.2e}");
    Ok(())
}
