//! Export per-kernel mean activation maps of a briefly trained head.
//!
//! Usage: `cargo run --release --example heatmap [out-dir]`

use saliency_prompt::pipeline::{
    heatmap, prepare_dataset, pretrain_prepared, write_heatmap, RunConfig,
};

fn main() -> saliency_prompt::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("kernel-heatmaps"));
    let cfg = RunConfig {
        steps: 100,
        ..RunConfig::small()
    };
    let images = prepare_dataset(&cfg, &cfg.dataset.load()?)?;
    let out = pretrain_prepared(&cfg, &images)?;
    let map = heatmap(&out.state.params, &cfg, &images, None)?;
    write_heatmap(&dir, &map)?;
    println!(
        "{:?} over {} images, range [{:.3}, {:.3}] -> {}",
        map.maps.shape(),
        map.images,
        map.maps.min(),
        map.maps.max(),
        dir.display()
    );
    for (k, plane) in map.maps.rows().enumerate().take(4) {
        let mean = plane.iter().sum::<f64>() / plane.len() as f64;
        println!("  kernel {k}: mean activation {mean:.4}");
    }
    Ok(())
}
