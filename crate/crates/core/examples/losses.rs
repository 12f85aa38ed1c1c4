//! Mask and classification loss terms on small hand-made inputs.

use saliency_prompt::head::{bce_loss, dice_loss, focal_loss};
use saliency_prompt::tensor::Tensor;

fn main() -> saliency_prompt::Result<()> {
    let gt = Tensor::new(vec![2, 2], vec![1.0, 1.0, 0.0, 0.0])?;
    for (name, pred) in [
        ("perfect", vec![1.0, 1.0, 0.0, 0.0]),
        ("uniform", vec![0.5; 4]),
        ("inverted", vec![0.0, 0.0, 1.0, 1.0]),
    ] {
        let pred = Tensor::new(vec![2, 2], pred)?;
        println!(
            "{name:<9} dice {:.4}  bce {:.4}",
            dice_loss(&pred, &gt, 1.0)?,
            bce_loss(&pred, &gt)?
        );
    }
    for p in [0.1, 0.5, 0.9] {
        println!(
            "focal p={p}: positive {:.4}  negative {:.4}",
            focal_loss(p, true, 2.0, 0.25),
            focal_loss(p, false, 2.0, 0.25)
        );
    }
    Ok(())
}
