//! The preference loss equals ln 2 whenever policy and reference agree, and
//! moves with the margin once the policy is perturbed.
//!
//! cargo run --example dpo_loss

use longtail_lab::corpus::{BOS_ID, EOS_ID};
use longtail_lab::model::{ModelConfig, Parameters};
use longtail_lab::train::{dpo_loss, reference_logprobs, PairTokens, BETA_SWEEP};

fn main() -> longtail_lab::Result<()> {
    let cfg = ModelConfig::new(10, 12, 1, 16, 2).with_seed(5);
    let reference_params = Parameters::<f32>::init(&cfg)?;
    let pairs: Vec<PairTokens> = (0..6u32)
        .map(|i| PairTokens {
            triple_id: format!("q{i}"),
            context: vec![BOS_ID, 4 + i % 3],
            winner: vec![4 + i % 3, EOS_ID],
            loser: vec![7 + i % 3, EOS_ID],
        })
        .collect();
    let reference = reference_logprobs(&reference_params, &pairs)?;

    println!("ln 2 = {:.6}", std::f64::consts::LN_2);
    for beta in BETA_SWEEP {
        let at_ref = dpo_loss(&reference_params, &pairs, &reference, beta, None)?;
        // a policy that moved off the reference in a fixed direction
        let mut policy = reference_params.clone();
        for (i, v) in policy.as_mut_slice().iter_mut().enumerate() {
            *v += if i % 2 == 0 { 0.05 } else { -0.05 };
        }
        let moved = dpo_loss(&policy, &pairs, &reference, beta, None)?;
        println!("beta {beta:<5} loss at reference {at_ref:.6}  after perturbation {moved:.6}");
    }
    Ok(())
}
