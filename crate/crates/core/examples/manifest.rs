//! Proposal manifest round trip with run-length encoded masks.

use saliency_prompt::pipeline::{make_synthetic_scene, toy_feature_extractor, SceneSpec};
use saliency_prompt::proposal::{propose_masks, rle_encode, ProposalConfig, ProposalManifest};

fn main() -> saliency_prompt::Result<()> {
    let scene = make_synthetic_scene(&SceneSpec::default(), 3)?;
    let x = toy_feature_extractor(&scene.rgb)?;
    let cfg = ProposalConfig::default();
    let proposals = propose_masks(&x, &cfg)?;

    if let Some(p) = proposals.first() {
        let rle = rle_encode(&p.mask);
        println!(
            "first mask: {} runs, head {:?}",
            rle.len(),
            &rle[..rle.len().min(8)]
        );
    }

    let manifest = ProposalManifest::from_proposals("scene-0003", 40, 40, &cfg, &proposals);
    let path = std::env::temp_dir().join("scene-0003.json");
    manifest.save(&path)?;
    let back = ProposalManifest::load(&path)?.to_proposals()?;
    println!(
        "{} proposals -> {} ; identical: {}",
        proposals.len(),
        path.display(),
        back == proposals
    );
    Ok(())
}
