//! Saliency proposals on a synthetic scene, scored against its blobs.
//!
//! Usage: `cargo run --example proposals [scene-seed]`

use saliency_prompt::eval::mask_iou;
use saliency_prompt::pipeline::{make_synthetic_scene, toy_feature_extractor, SceneSpec};
use saliency_prompt::proposal::{propose_masks, ProposalConfig};

fn main() -> saliency_prompt::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let scene = make_synthetic_scene(&SceneSpec::default(), seed)?;
    let x = toy_feature_extractor(&scene.rgb)?;
    let proposals = propose_masks(&x, &ProposalConfig::default())?;
    println!(
        "scene {seed}: {} blobs, {} proposals after NMS",
        scene.blobs.len(),
        proposals.len()
    );
    for (i, p) in proposals.iter().enumerate() {
        let best = scene
            .masks
            .iter()
            .map(|m| mask_iou(&p.mask, m))
            .fold(0.0, f64::max);
        println!(
            "  #{i}: score {:.3} area {:4} box {:?} best blob IoU {best:.3}",
            p.score,
            p.area(),
            p.rect.as_array()
        );
    }
    Ok(())
}
