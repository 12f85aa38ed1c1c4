use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DatasetImage, PseudoLabelSource, RunConfig};
use super::features::ImageFeatures;
use crate::error::{Error, Result};
use crate::head::{
    backward_with_match, forward, sgd_step, total_loss, ForwardTrace, HeadParams, LossBreakdown,
    TrainState,
};
use crate::prompting::{assign, inject, make_prompts, PromptSet};
use crate::proposal::{propose_with_seeds, random_proposals, MaskProposal, ProposalManifest};
use crate::rng::SplitMix64;
use crate::tensor::{avg_pool_region, Tensor};

const RANDOM_PROPOSAL_STREAM: u64 = 1 << 32;

/// Everything about one training image that does not depend on parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImage {
    pub id: String,
    pub features: ImageFeatures,
    /// Pseudo masks, at most `N`, in descending score order.
    pub proposals: Vec<MaskProposal>,
    /// `[L, D]` seed feature per proposal.
    pub seed_feats: Tensor,
    pub prompts: PromptSet,
    pub gt_masks: Vec<Tensor>,
}

/// Seed feature of a proposal: its grid cell when it came from a seed,
/// otherwise the extractor features pooled over its box.
fn seed_features(
    x: &Tensor,
    proposals: &[MaskProposal],
    grid: Option<&crate::proposal::SeedGrid>,
) -> Result<Tensor> {
    let x_chw = x.hwc_to_chw()?;
    let d = x_chw.shape()[0];
    let mut data = Vec::with_capacity(proposals.len() * d);
    for p in proposals {
        match (p.seed_index, grid) {
            (Some((i, j)), Some(g)) if i < g.grid_h && j < g.grid_w => {
                data.extend_from_slice(g.feature(i, j))
            }
            _ => data.extend(avg_pool_region(&x_chw, p.rect)?),
        }
    }
    Tensor::new(vec![proposals.len(), d], data)
}

pub fn prepare_image(cfg: &RunConfig, index: usize, image: &DatasetImage) -> Result<PreparedImage> {
    let features = ImageFeatures::from_rgb(&image.rgb, cfg.channels)?;
    let (h, w) = (features.height(), features.width());
    let (mut proposals, grid) = match &cfg.pseudo_labels {
        PseudoLabelSource::Saliency => {
            let (p, g) = propose_with_seeds(&features.x, &cfg.proposal)?;
            (p, Some(g))
        }
        PseudoLabelSource::Random { count } => {
            let seed =
                SplitMix64::derive(cfg.seed, RANDOM_PROPOSAL_STREAM | index as u64).next_u64();
            let p = random_proposals(h, w, *count, seed, cfg.proposal.min_area_fraction)?;
            (p, None)
        }
        PseudoLabelSource::ExternalManifest { dir } => {
            let manifest = ProposalManifest::load(dir.join(format!("{}.json", image.id)))?;
            if (manifest.height, manifest.width) != (h, w) {
                return Err(Error::shape([h, w], [manifest.height, manifest.width]));
            }
            let grid = crate::proposal::sample_seeds(
                &features.x,
                manifest.config.grid_h,
                manifest.config.grid_w,
            )?;
            (manifest.to_proposals()?, Some(grid))
        }
    };
    proposals.truncate(cfg.num_kernels);
    let seed_feats = seed_features(&features.x, &proposals, grid.as_ref())?;
    let prompts = make_prompts(&features.feat, &proposals)?;
    Ok(PreparedImage {
        id: image.id.clone(),
        features,
        proposals,
        seed_feats,
        prompts,
        gt_masks: image.gt_masks.clone(),
    })
}

pub fn prepare_dataset(cfg: &RunConfig, images: &[DatasetImage]) -> Result<Vec<PreparedImage>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| prepare_image(cfg, i, img))
        .collect()
}

/// Seed for the random assignment of the `draw`-th image visit.
pub fn assignment_seed(run_seed: u64, draw: u64) -> u64 {
    SplitMix64::derive(run_seed, draw).next_u64()
}

/// Prompt-decorated kernels `K0'` for one image visit.
pub fn injected_kernels(
    cfg: &RunConfig,
    params: &HeadParams,
    image: &PreparedImage,
    draw: u64,
) -> Result<Tensor> {
    let seed = assignment_seed(cfg.seed, draw);
    match assign(cfg.assignment, &params.kernels0, &image.prompts, seed)? {
        Some(a) => inject(&params.kernels0, &image.prompts, &a.delta),
        None => Ok(params.kernels0.clone()),
    }
}

/// Forward and loss for one image visit.
pub fn image_loss(
    cfg: &RunConfig,
    params: &HeadParams,
    image: &PreparedImage,
    draw: u64,
) -> Result<(ForwardTrace, LossBreakdown)> {
    let k0 = injected_kernels(cfg, params, image, draw)?;
    let trace = forward(params, &k0, &image.features.feat, cfg.stages)?;
    let loss = total_loss(
        params,
        &trace,
        &image.proposals,
        &image.seed_feats,
        &cfg.loss,
    )?;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite(format!("loss on {}", image.id)));
    }
    Ok((trace, loss))
}

/// Mean total loss over a prepared set; visit `i` uses draw `i`.
pub fn dataset_loss(cfg: &RunConfig, params: &HeadParams, images: &[PreparedImage]) -> Result<f64> {
    let mut sum = 0.0;
    for (i, img) in images.iter().enumerate() {
        sum += image_loss(cfg, params, img, i as u64)?.1.total;
    }
    Ok(sum / images.len() as f64)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    /// Dataset indices visited in this step.
    pub images: Vec<usize>,
    pub cls: f64,
    pub dice: f64,
    pub ce: f64,
    pub ker: f64,
    pub total: f64,
    pub proposals: usize,
    pub matched: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutput {
    pub state: TrainState,
    pub log: Vec<LossRecord>,
}

pub fn initial_state(cfg: &RunConfig) -> TrainState {
    TrainState::new(HeadParams::init(
        cfg.num_kernels,
        cfg.channels,
        cfg.seed_channels,
        cfg.seed,
    ))
}

/// Momentum-SGD pre-training over prepared images, one optimizer step per
/// `batch_size` image visits, cycling through the set in order.
pub fn pretrain_prepared(cfg: &RunConfig, images: &[PreparedImage]) -> Result<PretrainOutput> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut state = initial_state(cfg);
    let mut log = Vec::with_capacity(cfg.steps);
    let start = Instant::now();
    let inv_batch = 1.0 / cfg.batch_size as f64;
    for step in 0..cfg.steps {
        let mut grads = state.params.zeros_like();
        let mut rec = LossRecord {
            step,
            images: Vec::with_capacity(cfg.batch_size),
            cls: 0.0,
            dice: 0.0,
            ce: 0.0,
            ker: 0.0,
            total: 0.0,
            proposals: 0,
            matched: 0,
            wall_ms: None,
        };
        for b in 0..cfg.batch_size {
            let draw = (step * cfg.batch_size + b) as u64;
            let index = draw as usize % images.len();
            let img = &images[index];
            let (trace, loss) = image_loss(cfg, &state.params, img, draw)?;
            let g = backward_with_match(
                &state.params,
                &trace,
                &img.proposals,
                &img.seed_feats,
                &cfg.loss,
                &loss.matching,
            )?;
            grads.axpy(inv_batch, &g);
            rec.images.push(index);
            rec.cls += inv_batch * loss.cls;
            rec.dice += inv_batch * loss.dice;
            rec.ce += inv_batch * loss.ce;
            rec.ker += inv_batch * loss.ker;
            rec.total += inv_batch * loss.total;
            rec.proposals += img.proposals.len();
            rec.matched += loss.matching.pairs.len();
        }
        if let Some(max_norm) = cfg.grad_clip {
            let norm = grads.l2_norm();
            if norm > max_norm {
                grads.scale(max_norm / norm);
            }
        }
        let TrainState {
            params, velocity, ..
        } = &mut state;
        let lr = cfg.lr_schedule.at(cfg.lr, step, cfg.steps);
        sgd_step(params, velocity, &grads, lr, cfg.momentum)?;
        state.step += 1;
        if cfg.log_wall_time {
            rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        log.push(rec);
    }
    Ok(PretrainOutput { state, log })
}

/// Load the configured dataset, prepare it and train.
pub fn pretrain(cfg: &RunConfig) -> Result<PretrainOutput> {
    cfg.validate()?;
    let images = cfg.dataset.load()?;
    let prepared = prepare_dataset(cfg, &images)?;
    pretrain_prepared(cfg, &prepared)
}

pub fn write_log(path: impl AsRef<Path>, log: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for rec in log {
        serde_json::to_writer(&mut out, rec)?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LossRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        })
        .collect()
}
