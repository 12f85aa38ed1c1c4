//! Unsupervised mask proposals from dense feature similarity.
//!
//! A grid of seed features is average-pooled from the `[H, W, D]` feature
//! map. Each seed acts as 1x1 convolution weights over the map; the response
//! is min-max normalized, thresholded into a binary mask, and the surviving
//! masks are de-duplicated by greedy mask NMS.

mod manifest;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use manifest::{rle_decode, rle_encode, ManifestEntry, ProposalManifest};

use crate::error::{Error, Result};
use crate::eval::{mask_area, mask_iou, mask_to_box};
use crate::rng::SplitMix64;
use crate::tensor::{avg_pool_region, dot_conv, linear_normalize, Rect, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub binarize_threshold: f64,
    pub nms_iou_threshold: f64,
    pub min_area_fraction: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            grid_h: 10,
            grid_w: 10,
            binarize_threshold: 0.5,
            nms_iou_threshold: 0.5,
            min_area_fraction: 0.005,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::Config("seed grid must be at least 1x1".into()));
        }
        if !open_unit(self.binarize_threshold) {
            return Err(Error::Config(format!(
                "binarize_threshold {} not in (0, 1)",
                self.binarize_threshold
            )));
        }
        if !open_unit(self.nms_iou_threshold) {
            return Err(Error::Config(format!(
                "nms_iou_threshold {} not in (0, 1)",
                self.nms_iou_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.min_area_fraction) {
            return Err(Error::Config(format!(
                "min_area_fraction {} not in [0, 1)",
                self.min_area_fraction
            )));
        }
        Ok(())
    }

    /// Smallest admissible mask area in pixels (never below one).
    pub fn min_area(&self, height: usize, width: usize) -> usize {
        min_area(self.min_area_fraction, height, width)
    }
}

fn min_area(fraction: f64, height: usize, width: usize) -> usize {
    ((fraction * (height * width) as f64).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedGrid {
    pub grid_h: usize,
    pub grid_w: usize,
    /// `[grid_h, grid_w, D]`.
    pub seed_features: Tensor,
    /// Pooling rect per seed, row-major over the grid.
    pub seed_boxes: Vec<Rect>,
}

impl SeedGrid {
    pub fn feature(&self, i: usize, j: usize) -> &[f64] {
        let d = self.seed_features.shape()[2];
        let at = (i * self.grid_w + j) * d;
        &self.seed_features.data()[at..at + d]
    }

    pub fn rect(&self, i: usize, j: usize) -> Rect {
        self.seed_boxes[i * self.grid_w + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskProposal {
    /// Binary `[H, W]` mask.
    pub mask: Tensor,
    /// Mean normalized saliency inside the mask, in `[0, 1]`.
    pub score: f64,
    pub rect: Rect,
    /// Grid position of the originating seed; `None` for proposals not
    /// produced from a seed.
    pub seed_index: Option<(usize, usize)>,
}

impl MaskProposal {
    /// Wrap a binary mask; `None` when the mask is empty.
    pub fn from_mask(mask: Tensor, score: f64, seed_index: Option<(usize, usize)>) -> Option<Self> {
        let rect = mask_to_box(&mask)?;
        Some(Self {
            mask,
            score,
            rect,
            seed_index,
        })
    }

    pub fn area(&self) -> usize {
        mask_area(&self.mask)
    }
}

/// Split `n` into `parts` contiguous spans; the last span absorbs the
/// remainder.
fn spans(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let step = n / parts;
    (0..parts)
        .map(|k| {
            let end = if k + 1 == parts {
                n - 1
            } else {
                (k + 1) * step - 1
            };
            (k * step, end)
        })
        .collect()
}

/// Average-pool one seed feature per grid cell of an `[H, W, D]` map.
pub fn sample_seeds(x: &Tensor, grid_h: usize, grid_w: usize) -> Result<SeedGrid> {
    sample_seeds_chw(&x.hwc_to_chw()?, grid_h, grid_w)
}

fn sample_seeds_chw(x_chw: &Tensor, grid_h: usize, grid_w: usize) -> Result<SeedGrid> {
    let [d, h, w] = x_chw.dims3()?;
    if grid_h == 0 || grid_w == 0 || grid_h > h || grid_w > w {
        return Err(Error::invalid(format!(
            "seed grid {grid_h}x{grid_w} does not fit a {h}x{w} map"
        )));
    }
    let mut boxes = Vec::with_capacity(grid_h * grid_w);
    let mut feats = Vec::with_capacity(grid_h * grid_w * d);
    for &(y0, y1) in &spans(h, grid_h) {
        for &(x0, x1) in &spans(w, grid_w) {
            let rect = Rect::new(x0, y0, x1, y1);
            feats.extend(avg_pool_region(x_chw, rect)?);
            boxes.push(rect);
        }
    }
    Ok(SeedGrid {
        grid_h,
        grid_w,
        seed_features: Tensor::new(vec![grid_h, grid_w, d], feats)?,
        seed_boxes: boxes,
    })
}

/// Saliency of every location of an `[H, W, D]` map with respect to `seed`,
/// min-max normalized to `[0, 1]`.
pub fn dense_saliency(seed: &[f64], x: &Tensor) -> Result<Tensor> {
    dense_saliency_chw(seed, &x.hwc_to_chw()?)
}

fn dense_saliency_chw(seed: &[f64], x_chw: &Tensor) -> Result<Tensor> {
    Ok(linear_normalize(&dot_conv(seed, x_chw)?))
}

/// `1` where `value >= threshold`, `0` elsewhere.
pub fn binarize(y: &Tensor, threshold: f64) -> Tensor {
    y.map(|v| if v >= threshold { 1.0 } else { 0.0 })
}

/// NMS visiting order: score desc, area desc, seed raster order (seedless
/// proposals last).
fn nms_order(a: &MaskProposal, b: &MaskProposal) -> Ordering {
    let raster = |p: &MaskProposal| p.seed_index.unwrap_or((usize::MAX, usize::MAX));
    b.score
        .total_cmp(&a.score)
        .then(b.area().cmp(&a.area()))
        .then(raster(a).cmp(&raster(b)))
}

/// Greedy suppression over an abstract pairwise IoU. Visits `order` and keeps
/// an item iff its IoU with every kept item is below `threshold`; returns the
/// kept items in visiting order.
pub fn greedy_nms(
    order: &[usize],
    iou: impl Fn(usize, usize) -> f64,
    threshold: f64,
) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &i in order {
        if kept.iter().all(|&k| iou(k, i) < threshold) {
            kept.push(i);
        }
    }
    kept
}

/// Greedy mask NMS; output is in visiting order.
pub fn mask_nms(mut proposals: Vec<MaskProposal>, iou_threshold: f64) -> Vec<MaskProposal> {
    proposals.sort_by(nms_order);
    let order: Vec<usize> = (0..proposals.len()).collect();
    let kept = greedy_nms(
        &order,
        |a, b| mask_iou(&proposals[a].mask, &proposals[b].mask),
        iou_threshold,
    );
    let mut slots: Vec<Option<MaskProposal>> = proposals.into_iter().map(Some).collect();
    kept.into_iter()
        .map(|i| slots[i].take().expect("kept once"))
        .collect()
}

/// Full proposal pipeline on an `[H, W, D]` feature map. May return an
/// empty list.
pub fn propose_masks(x: &Tensor, cfg: &ProposalConfig) -> Result<Vec<MaskProposal>> {
    Ok(propose_with_seeds(x, cfg)?.0)
}

/// As [`propose_masks`], also returning the seed grid so callers can look up
/// each proposal's seed feature.
pub fn propose_with_seeds(
    x: &Tensor,
    cfg: &ProposalConfig,
) -> Result<(Vec<MaskProposal>, SeedGrid)> {
    cfg.validate()?;
    let x_chw = x.hwc_to_chw()?;
    let [_, h, w] = x_chw.dims3()?;
    let seeds = sample_seeds_chw(&x_chw, cfg.grid_h, cfg.grid_w)?;
    let min_area = cfg.min_area(h, w);

    let mut candidates = Vec::new();
    for i in 0..cfg.grid_h {
        for j in 0..cfg.grid_w {
            let saliency = dense_saliency_chw(seeds.feature(i, j), &x_chw)?;
            let mask = binarize(&saliency, cfg.binarize_threshold);
            let area = mask_area(&mask);
            if area < min_area {
                continue;
            }
            let inside: f64 = saliency
                .data()
                .iter()
                .zip(mask.data())
                .filter(|(_, &m)| m != 0.0)
                .map(|(s, _)| s)
                .sum();
            let score = (inside / area as f64).clamp(0.0, 1.0);
            if let Some(p) = MaskProposal::from_mask(mask, score, Some((i, j))) {
                candidates.push(p);
            }
        }
    }
    Ok((mask_nms(candidates, cfg.nms_iou_threshold), seeds))
}

/// Random axis-aligned rectangle proposals.
///
/// Per proposal, draws `xa, xb = below(w)`, `ya, yb = below(h)` (in that
/// order) until the spanned rect has at least the minimum area, then a score
/// with `next_open01`. See [`crate::rng`] for the generator.
pub fn random_proposals(
    height: usize,
    width: usize,
    count: usize,
    rng_seed: u64,
    min_area_fraction: f64,
) -> Result<Vec<MaskProposal>> {
    if count == 0 || height == 0 || width == 0 {
        return Err(Error::invalid(
            "random proposals need count >= 1 and a non-empty map",
        ));
    }
    if !(0.0..1.0).contains(&min_area_fraction) {
        return Err(Error::invalid("min_area_fraction must lie in [0, 1)"));
    }
    let min_area = min_area(min_area_fraction, height, width);
    let mut rng = SplitMix64::new(rng_seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let rect = loop {
            let (xa, xb) = (rng.below(width), rng.below(width));
            let (ya, yb) = (rng.below(height), rng.below(height));
            let r = Rect::new(xa.min(xb), ya.min(yb), xa.max(xb), ya.max(yb));
            if r.area() >= min_area {
                break r;
            }
        };
        let score = rng.next_open01();
        let mask = rect_mask(height, width, rect);
        out.push(MaskProposal {
            mask,
            score,
            rect,
            seed_index: None,
        });
    }
    Ok(out)
}

pub(crate) fn rect_mask(height: usize, width: usize, rect: Rect) -> Tensor {
    Tensor::from_fn(&[height, width], |i| {
        let (y, x) = (i / width, i % width);
        let inside = (rect.x0..=rect.x1).contains(&x) && (rect.y0..=rect.y1).contains(&y);
        if inside {
            1.0
        } else {
            0.0
        }
    })
}
