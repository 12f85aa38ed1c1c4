//! COCO-style class-agnostic average precision over boxes.
//!
//! At every IoU threshold, predictions are visited per image in descending
//! score order and greedily matched one-to-one to the unmatched ground-truth
//! box of highest IoU (at least the threshold). The matched flags are then
//! accumulated in a global descending-score order (ties: earlier image, then
//! earlier prediction), the precision curve is made monotone from the right,
//! and sampled at the 101 recall points `0.00, 0.01, ..., 1.00`.

use serde::{Deserialize, Serialize};

use super::boxes::box_iou;
use crate::tensor::Rect;

/// `0.50, 0.55, ..., 0.95`.
pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub rect: Rect,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub predictions: Vec<Prediction>,
    pub ground_truth: Vec<Rect>,
}

/// `None` entries mean the metric is undefined (no ground truth at all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub per_threshold: Vec<Option<f64>>,
}

pub fn average_precision(records: &[DetectionRecord]) -> ApReport {
    let per_threshold: Vec<Option<f64>> =
        IOU_THRESHOLDS.iter().map(|&t| ap_at(records, t)).collect();
    let ap = if per_threshold.iter().all(Option::is_some) {
        Some(per_threshold.iter().flatten().sum::<f64>() / per_threshold.len() as f64)
    } else {
        None
    };
    ApReport {
        ap,
        ap50: per_threshold[0],
        ap75: per_threshold[5],
        per_threshold,
    }
}

/// Score-descending prediction order within one image (stable on ties).
fn score_order(preds: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

fn ap_at(records: &[DetectionRecord], threshold: f64) -> Option<f64> {
    let num_gt: usize = records.iter().map(|r| r.ground_truth.len()).sum();
    if num_gt == 0 {
        return None;
    }

    // (score, image, prediction, is_true_positive)
    let mut hits: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (img, rec) in records.iter().enumerate() {
        let mut taken = vec![false; rec.ground_truth.len()];
        for p in score_order(&rec.predictions) {
            let pred = rec.predictions[p];
            let mut best: Option<(usize, f64)> = None;
            for (g, &gt) in rec.ground_truth.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let iou = box_iou(pred.rect, gt);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            hits.push((pred.score, img, p, best.is_some()));
        }
    }
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, _, _, hit) in &hits {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }

    let total: f64 = (0..=100)
        .map(|r| {
            let level = r as f64 / 100.0;
            recall
                .iter()
                .position(|&rc| rc >= level)
                .map_or(0.0, |i| precision[i])
        })
        .sum();
    Some(total / 101.0)
}
