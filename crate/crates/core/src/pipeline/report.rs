use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::train::{LossRecord, PreparedImage};
use crate::error::{Error, Result};
use crate::eval::{
    average_precision, kernel_heatmap, mask_to_box, ApReport, DetectionRecord, KernelHeatmap,
    Prediction, HEATMAP_SIZE,
};
use crate::head::{forward, ForwardTrace, HeadParams};
use crate::pnm::write_pgm;
use crate::tensor::{write_tensor, Tensor};

/// Masks are binarized at this activation before boxing.
pub const MASK_THRESHOLD: f64 = 0.5;

/// Inference forward pass: the learned kernels without prompts.
pub fn infer(params: &HeadParams, cfg: &RunConfig, image: &PreparedImage) -> Result<ForwardTrace> {
    forward(params, &params.kernels0, &image.features.feat, cfg.stages)
}

/// One box per kernel whose final mask is non-empty at [`MASK_THRESHOLD`],
/// scored by the kernel's foreground probability.
pub fn predictions(trace: &ForwardTrace) -> Result<Vec<Prediction>> {
    let (h, w) = (trace.height(), trace.width());
    let mut out = Vec::new();
    for n in 0..trace.num_kernels() {
        let bin: Vec<f64> = trace
            .final_mask(n)
            .iter()
            .map(|&v| if v >= MASK_THRESHOLD { 1.0 } else { 0.0 })
            .collect();
        if let Some(rect) = mask_to_box(&Tensor::new(vec![h, w], bin)?) {
            out.push(Prediction {
                rect,
                score: trace.fg_prob[n],
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub ground_truth: usize,
    pub predictions: usize,
    pub detection: ApReport,
    /// Per-step total loss from the training log, when available.
    #[serde(default)]
    pub loss_curve: Vec<f64>,
}

pub fn detection_records(
    params: &HeadParams,
    cfg: &RunConfig,
    images: &[PreparedImage],
) -> Result<Vec<DetectionRecord>> {
    images
        .iter()
        .map(|img| {
            let trace = infer(params, cfg, img)?;
            Ok(DetectionRecord {
                predictions: predictions(&trace)?,
                ground_truth: img.gt_masks.iter().filter_map(mask_to_box).collect(),
            })
        })
        .collect()
}

pub fn evaluate(
    params: &HeadParams,
    cfg: &RunConfig,
    images: &[PreparedImage],
    log: &[LossRecord],
) -> Result<EvalReport> {
    let records = detection_records(params, cfg, images)?;
    Ok(EvalReport {
        images: images.len(),
        ground_truth: records.iter().map(|r| r.ground_truth.len()).sum(),
        predictions: records.iter().map(|r| r.predictions.len()).sum(),
        detection: average_precision(&records),
        loss_curve: log.iter().map(|r| r.total).collect(),
    })
}

pub fn write_report(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Average final-stage activation per kernel over `images`.
pub fn heatmap(
    params: &HeadParams,
    cfg: &RunConfig,
    images: &[PreparedImage],
    activation_threshold: Option<f64>,
) -> Result<KernelHeatmap> {
    let traces = images
        .iter()
        .map(|img| infer(params, cfg, img))
        .collect::<Result<Vec<_>>>()?;
    kernel_heatmap(
        traces.iter().map(|t| t.final_masks()),
        activation_threshold,
        HEATMAP_SIZE,
    )
}

/// Write `heatmap.bin` (`[N, 200, 200]` tensor) and one `kernel_NNN.pgm` per
/// kernel into `dir`.
pub fn write_heatmap(dir: impl AsRef<Path>, map: &KernelHeatmap) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(dir.join("heatmap.bin"), &map.maps)?;
    let [_, h, w] = [
        map.maps.shape()[0],
        map.maps.shape()[1],
        map.maps.shape()[2],
    ];
    for (k, plane) in map.maps.rows().enumerate() {
        write_pgm(dir.join(format!("kernel_{k:03}.pgm")), plane, h, w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::DatasetSpec;
    use crate::pipeline::scene::SceneSpec;
    use crate::pipeline::train::prepare_dataset;
    use crate::tensor::read_tensor;

    fn setup() -> (RunConfig, Vec<PreparedImage>, HeadParams) {
        let cfg = RunConfig {
            num_kernels: 5,
            dataset: DatasetSpec::Synthetic {
                count: 2,
                seed: 3,
                scene: SceneSpec {
                    height: 20,
                    width: 20,
                    max_blobs: 2,
                    min_size: 4,
                    max_size: 6,
                    gap: 2,
                    ..SceneSpec::default()
                },
            },
            ..RunConfig::small()
        };
        let images = prepare_dataset(&cfg, &cfg.dataset.load().unwrap()).unwrap();
        let params = HeadParams::init(5, cfg.channels, cfg.seed_channels, 2);
        (cfg, images, params)
    }

    #[test]
    fn predictions_follow_kernel_masks() {
        let (cfg, images, mut params) = setup();
        // Bias-channel-only kernels: constant logits decide all-on or all-off.
        let d = cfg.seed_channels;
        params.kernels0 = Tensor::zeros(&[5, cfg.channels]);
        params.update_weight = Tensor::zeros(params.update_weight.shape());
        for n in 0..5 {
            params.kernels0.row_mut(n)[d] = if n % 2 == 0 { 3.0 } else { -3.0 };
        }
        let trace = infer(&params, &cfg, &images[0]).unwrap();
        let preds = predictions(&trace).unwrap();
        assert_eq!(preds.len(), 3);
        assert!(preds.iter().all(|p| p.rect.as_array() == [0, 0, 19, 19]));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (cfg, images, params) = setup();
        let a = evaluate(&params, &cfg, &images, &[]).unwrap();
        assert_eq!(a, evaluate(&params, &cfg, &images, &[]).unwrap());
        assert!(a.ground_truth >= 4);
        let ap50 = a.detection.ap50.unwrap();
        assert!((0.0..=1.0).contains(&ap50));
    }

    #[test]
    fn heatmap_export_layout() {
        let (cfg, images, params) = setup();
        let map = heatmap(&params, &cfg, &images, None).unwrap();
        assert_eq!(map.maps.shape(), &[5, HEATMAP_SIZE, HEATMAP_SIZE]);
        let dir = tempfile::tempdir().unwrap();
        write_heatmap(dir.path(), &map).unwrap();
        assert_eq!(
            read_tensor(dir.path().join("heatmap.bin")).unwrap(),
            map.maps
        );
        assert!(dir.path().join("kernel_004.pgm").exists());
    }
}
