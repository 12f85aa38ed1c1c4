//! Pseudo-label quality: saliency proposals against random rectangles.
//!
//! Usage: `cargo run --release --example pseudo_label_quality [seeds]`

use saliency_prompt::pipeline::{
    evaluate, prepare_dataset, pretrain_prepared, DatasetSpec, PseudoLabelSource, RunConfig,
    SceneSpec,
};

fn main() -> saliency_prompt::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    let held_out = DatasetSpec::Synthetic {
        count: 20,
        seed: 2,
        scene: SceneSpec::default(),
    };
    for source in [
        PseudoLabelSource::Saliency,
        PseudoLabelSource::Random { count: 4 },
    ] {
        let mut total = 0.0;
        for seed in 0..seeds {
            let cfg = RunConfig {
                seed,
                pseudo_labels: source.clone(),
                ..RunConfig::small()
            };
            let images = prepare_dataset(&cfg, &cfg.dataset.load()?)?;
            let test = prepare_dataset(&cfg, &held_out.load()?)?;
            let out = pretrain_prepared(&cfg, &images)?;
            total += evaluate(&out.state.params, &cfg, &test, &[])?
                .detection
                .ap50
                .unwrap_or(0.0);
        }
        println!("{source:?}: mean held-out AP50 {:.4}", total / seeds as f64);
    }
    Ok(())
}
