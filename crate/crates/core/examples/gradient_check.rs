//! Analytic head gradients against central finite differences.
//!
//! Usage: `cargo run --release --example gradient_check [seeds]`

use saliency_prompt::head::{
    backward_with_match, forward, total_loss, total_loss_with_match, HeadParams, LossWeights,
};
use saliency_prompt::proposal::MaskProposal;
use saliency_prompt::rng::SplitMix64;
use saliency_prompt::tensor::Tensor;

const NAMES: [&str; 7] = [
    "kernels0",
    "update_weight",
    "update_bias",
    "cls_weight",
    "cls_bias",
    "seed_proj_weight",
    "seed_proj_bias",
];

fn main() -> saliency_prompt::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    let (n, c, d, h, w, stages) = (4, 6, 5, 8, 8, 2);
    let weights = LossWeights::default();
    for seed in 0..seeds {
        let mut rng = SplitMix64::new(seed);
        let params = HeadParams::init(n, c, d, seed);
        let feat = Tensor::from_fn(&[c, h, w], |_| rng.uniform(-1.0, 1.0));
        let proposals: Vec<MaskProposal> = (0..3)
            .filter_map(|_| {
                let m = Tensor::from_fn(&[h, w], |_| (rng.next_f64() < 0.4) as u8 as f64);
                MaskProposal::from_mask(m, 1.0, None)
            })
            .collect();
        let seed_feats = Tensor::from_fn(&[proposals.len(), d], |_| rng.uniform(-1.0, 1.0));

        let trace = forward(&params, &params.kernels0, &feat, stages)?;
        let loss = total_loss(&params, &trace, &proposals, &seed_feats, &weights)?;
        let grads = backward_with_match(
            &params,
            &trace,
            &proposals,
            &seed_feats,
            &weights,
            &loss.matching,
        )?;
        let loss_at = |p: &HeadParams| -> saliency_prompt::Result<f64> {
            let tr = forward(p, &p.kernels0, &feat, stages)?;
            Ok(
                total_loss_with_match(p, &tr, &proposals, &seed_feats, &weights, &loss.matching)?
                    .total,
            )
        };

        println!("seed {seed}: loss {:.6}", loss.total);
        let eps = 1e-5;
        let mut p = params.clone();
        for (f, name) in NAMES.iter().enumerate() {
            let mut worst: f64 = 0.0;
            for j in 0..params.fields()[f].len() {
                let orig = p.fields()[f][j];
                p.fields_mut()[f][j] = orig + eps;
                let up = loss_at(&p)?;
                p.fields_mut()[f][j] = orig - eps;
                let down = loss_at(&p)?;
                p.fields_mut()[f][j] = orig;
                let fd = (up - down) / (2.0 * eps);
                let an = grads.fields()[f][j];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
            }
            println!("  {name:<17} max rel err {worst:.2e}");
        }
    }
    Ok(())
}
