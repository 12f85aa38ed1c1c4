//! Pre-train a head on synthetic scenes and compare held-out AP.
//!
//! Usage: `cargo run --release --example pretrain [steps]`

use saliency_prompt::pipeline::{
    dataset_loss, evaluate, initial_state, prepare_dataset, pretrain_prepared, DatasetSpec,
    RunConfig, SceneSpec,
};

fn main() -> saliency_prompt::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
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
    let cfg = RunConfig {
        steps,
        dataset: train.clone(),
        ..RunConfig::small()
    };
    let images = prepare_dataset(&cfg, &train.load()?)?;
    let test = prepare_dataset(&cfg, &held_out.load()?)?;

    let out = pretrain_prepared(&cfg, &images)?;
    for rec in out.log.iter().step_by((steps / 10).max(1)) {
        println!(
            "step {:4}  total {:.4}  cls {:.4}  dice {:.4}  ce {:.4}  ker {:.4}",
            rec.step, rec.total, rec.cls, rec.dice, rec.ce, rec.ker
        );
    }

    let init = initial_state(&cfg).params;
    let trained = &out.state.params;
    println!(
        "train-set loss {:.4} -> {:.4}",
        dataset_loss(&cfg, &init, &images)?,
        dataset_loss(&cfg, trained, &images)?
    );
    let before = evaluate(&init, &cfg, &test, &[])?.detection;
    let after = evaluate(trained, &cfg, &test, &out.log)?.detection;
    println!(
        "held-out AP50 {:.3} -> {:.3}, AP {:.3} -> {:.3}",
        before.ap50.unwrap_or(0.0),
        after.ap50.unwrap_or(0.0),
        before.ap.unwrap_or(0.0),
        after.ap.unwrap_or(0.0)
    );
    Ok(())
}
