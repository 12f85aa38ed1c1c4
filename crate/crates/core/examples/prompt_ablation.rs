//! Held-out AP50 after pre-training under each prompt assignment strategy.
//!
//! Usage: `cargo run --release --example prompt_ablation [seeds]`

use saliency_prompt::pipeline::{
    evaluate, prepare_dataset, pretrain_prepared, DatasetSpec, RunConfig, SceneSpec,
};
use saliency_prompt::prompting::AssignStrategy;

fn main() -> saliency_prompt::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    let train = DatasetSpec::Synthetic {
        count: 20,
        seed: 1,
        scene: SceneSpec::default(),
    };
    let held_out = DatasetSpec::Synthetic {
        count: 20,
        seed: 2,
        scene: SceneSpec::default(),
    };
    let base = RunConfig {
        dataset: train.clone(),
        ..RunConfig::small()
    };
    let images = prepare_dataset(&base, &train.load()?)?;
    let test = prepare_dataset(&base, &held_out.load()?)?;

    for strategy in [
        AssignStrategy::Cosine,
        AssignStrategy::Sequential,
        AssignStrategy::Random,
        AssignStrategy::None,
    ] {
        let mut scores = Vec::new();
        for seed in 0..seeds {
            let cfg = RunConfig {
                seed,
                assignment: strategy,
                ..base.clone()
            };
            let out = pretrain_prepared(&cfg, &images)?;
            let rep = evaluate(&out.state.params, &cfg, &test, &[])?;
            scores.push(rep.detection.ap50.unwrap_or(0.0));
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let per_seed: Vec<String> = scores.iter().map(|s| format!("{s:.3}")).collect();
        println!(
            "{:<10} mean AP50 {mean:.4}  [{}]",
            strategy.name(),
            per_seed.join(" ")
        );
    }
    Ok(())
}
