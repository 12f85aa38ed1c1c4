use serde::{Deserialize, Serialize};

use super::forward::ForwardTrace;
use super::hungarian::{match_hungarian, MatchResult};
use super::params::HeadParams;
use crate::error::{Error, Result};
use crate::proposal::MaskProposal;
use crate::tensor::{cosine_unchecked, dot, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cls: f64,
    pub dice: f64,
    pub ce: f64,
    pub ker: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub dice_eps: f64,
    /// Also supervise the stage-0 (injected) kernels in the kernel term.
    pub supervise_initial_kernels: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 2.0,
            dice: 4.0,
            ce: 1.0,
            ker: 1.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            dice_eps: 1.0,
            supervise_initial_kernels: false,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            cls: 0.0,
            dice: 0.0,
            ce: 0.0,
            ker: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cls", self.cls),
            ("dice", self.dice),
            ("ce", self.ce),
            ("ker", self.ker),
            ("focal_gamma", self.focal_gamma),
            ("dice_eps", self.dice_eps),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "loss weight {name} = {v} must be >= 0"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) {
            return Err(Error::Config("focal_alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub(crate) fn first_supervised_stage(&self) -> usize {
        if self.supervise_initial_kernels {
            0
        } else {
            1
        }
    }
}

/// Unweighted per-term means and the weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub dice: f64,
    pub ce: f64,
    pub ker: f64,
    pub total: f64,
    pub matching: MatchResult,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn in_clamp_range(p: f64) -> bool {
    (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

/// Binary focal loss `-alpha_t (1 - p_t)^gamma ln p_t`.
pub fn focal_loss(p: f64, target: bool, gamma: f64, alpha: f64) -> f64 {
    let p = clamp_prob(p);
    if target {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

fn log_sigmoid(z: f64) -> f64 {
    -((-z).max(0.0) + (-z.abs()).exp().ln_1p())
}

fn sigmoid_exact(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Focal loss of `p = sigmoid(logit)` evaluated through `log_sigmoid`, so it
/// stays finite and sloped when `p` saturates. Agrees with [`focal_loss`]
/// whenever `p` lies inside the clamp range.
pub(crate) fn focal_from_logit(logit: f64, target: bool, gamma: f64, alpha: f64) -> f64 {
    let (u, a) = if target {
        (logit, alpha)
    } else {
        (-logit, 1.0 - alpha)
    };
    -a * sigmoid_exact(-u).powf(gamma) * log_sigmoid(u)
}

/// d [`focal_from_logit`] / d logit.
pub(crate) fn focal_from_logit_grad(logit: f64, target: bool, gamma: f64, alpha: f64) -> f64 {
    let (u, a, sign) = if target {
        (logit, alpha, 1.0)
    } else {
        (-logit, 1.0 - alpha, -1.0)
    };
    let p = sigmoid_exact(u);
    let q = sigmoid_exact(-u);
    sign * a * q.powf(gamma) * (gamma * p * log_sigmoid(u) - q)
}

pub(crate) fn dice_slice(pred: &[f64], gt: &[f64], eps: f64) -> f64 {
    let inter: f64 = dot(pred, gt);
    let sp: f64 = pred.iter().sum();
    let sg: f64 = gt.iter().sum();
    1.0 - (2.0 * inter + eps) / (sp + sg + eps)
}

/// `out += scale * d dice / d pred`.
pub(crate) fn dice_grad(pred: &[f64], gt: &[f64], eps: f64, scale: f64, out: &mut [f64]) {
    let inter: f64 = dot(pred, gt);
    let den = pred.iter().sum::<f64>() + gt.iter().sum::<f64>() + eps;
    let num = 2.0 * inter + eps;
    for (o, &g) in out.iter_mut().zip(gt) {
        *o -= scale * (2.0 * g * den - num) / (den * den);
    }
}

pub(crate) fn bce_slice(pred: &[f64], gt: &[f64]) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let p = clamp_prob(p);
            -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
        })
        .sum();
    sum / pred.len() as f64
}

/// `out += scale * d bce / d pred`.
pub(crate) fn bce_grad(pred: &[f64], gt: &[f64], scale: f64, out: &mut [f64]) {
    let n = pred.len() as f64;
    for ((o, &p), &g) in out.iter_mut().zip(pred).zip(gt) {
        if in_clamp_range(p) {
            *o += scale * (-g / p + (1.0 - g) / (1.0 - p)) / n;
        }
    }
}

fn same_shape(pred: &Tensor, gt: &Tensor) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(gt.shape(), pred.shape()));
    }
    Ok(())
}

/// `1 - (2 sum p g + eps) / (sum p + sum g + eps)`.
pub fn dice_loss(pred: &Tensor, gt: &Tensor, eps: f64) -> Result<f64> {
    same_shape(pred, gt)?;
    Ok(dice_slice(pred.data(), gt.data(), eps))
}

/// Pixel-mean binary cross-entropy.
pub fn bce_loss(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    same_shape(pred, gt)?;
    if pred.is_empty() {
        return Err(Error::invalid("cross-entropy over an empty mask"));
    }
    Ok(bce_slice(pred.data(), gt.data()))
}

/// `W_s s + b_s` for one seed feature.
pub(crate) fn project_seed(params: &HeadParams, seed: &[f64]) -> Vec<f64> {
    let d = params.seed_channels();
    params
        .seed_proj_weight
        .rows()
        .zip(params.seed_proj_bias.data())
        .map(|(row, b)| dot(&row[..d], seed) + b)
        .collect()
}

/// Summed kernel supervision `sum_pairs sum_i (1 - cos(W_s S_l + b_s, K^i_n))`
/// over stages `1..=T` (or `0..=T` with `supervise_initial_kernels`).
pub fn kernel_loss(
    params: &HeadParams,
    trace: &ForwardTrace,
    pairs: &[(usize, usize)],
    seed_feats: &Tensor,
    weights: &LossWeights,
) -> f64 {
    let first = weights.first_supervised_stage();
    pairs
        .iter()
        .map(|&(n, l)| {
            let q = project_seed(params, seed_feats.row(l));
            trace.kernels[first..]
                .iter()
                .map(|k| 1.0 - cosine_unchecked(&q, k.row(n)))
                .sum::<f64>()
        })
        .sum()
}

/// Matching cost `-cls * p_n + dice * Dice(M_n, Z_l) + ce * BCE(M_n, Z_l)`
/// on final-stage masks, `[N, L]`.
pub fn build_cost(
    trace: &ForwardTrace,
    proposals: &[MaskProposal],
    weights: &LossWeights,
) -> Result<Tensor> {
    check_targets(trace, proposals)?;
    let n = trace.num_kernels();
    let l = proposals.len();
    let mut cost = Vec::with_capacity(n * l);
    for k in 0..n {
        let pred = trace.final_mask(k);
        for z in proposals {
            let gt = z.mask.data();
            cost.push(
                -weights.cls * trace.fg_prob[k]
                    + weights.dice * dice_slice(pred, gt, weights.dice_eps)
                    + weights.ce * bce_slice(pred, gt),
            );
        }
    }
    Tensor::new(vec![n, l], cost)
}

fn check_targets(trace: &ForwardTrace, proposals: &[MaskProposal]) -> Result<()> {
    let want = [trace.height(), trace.width()];
    for p in proposals {
        if p.mask.shape() != want {
            return Err(Error::shape(want, p.mask.shape()));
        }
    }
    Ok(())
}

pub(crate) fn check_seed_feats(
    params: &HeadParams,
    proposals: &[MaskProposal],
    seed_feats: &Tensor,
) -> Result<()> {
    let want = [proposals.len(), params.seed_channels()];
    if seed_feats.shape() != want {
        return Err(Error::shape(want, seed_feats.shape()));
    }
    Ok(())
}

/// Match kernels to proposals, then evaluate the weighted loss.
pub fn total_loss(
    params: &HeadParams,
    trace: &ForwardTrace,
    proposals: &[MaskProposal],
    seed_feats: &Tensor,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let matching = if proposals.is_empty() {
        MatchResult::empty(trace.num_kernels())
    } else {
        match_hungarian(&build_cost(trace, proposals, weights)?)?
    };
    total_loss_with_match(params, trace, proposals, seed_feats, weights, &matching)
}

/// Weighted loss for a fixed matching. Matched kernels carry foreground
/// focal, Dice, cross-entropy and kernel terms; unmatched kernels carry
/// background focal only. Each term is the mean over its contributors.
pub fn total_loss_with_match(
    params: &HeadParams,
    trace: &ForwardTrace,
    proposals: &[MaskProposal],
    seed_feats: &Tensor,
    weights: &LossWeights,
    matching: &MatchResult,
) -> Result<LossBreakdown> {
    check_targets(trace, proposals)?;
    check_seed_feats(params, proposals, seed_feats)?;
    let n = trace.num_kernels();
    let mut is_fg = vec![false; n];
    for &(k, _) in &matching.pairs {
        is_fg[k] = true;
    }
    let cls = (0..n)
        .map(|k| {
            focal_from_logit(
                trace.class_logits[k],
                is_fg[k],
                weights.focal_gamma,
                weights.focal_alpha,
            )
        })
        .sum::<f64>()
        / n as f64;

    let (mut dice, mut ce, mut ker) = (0.0, 0.0, 0.0);
    if !matching.pairs.is_empty() {
        let count = matching.pairs.len() as f64;
        for &(k, l) in &matching.pairs {
            let pred = trace.final_mask(k);
            let gt = proposals[l].mask.data();
            dice += dice_slice(pred, gt, weights.dice_eps);
            ce += bce_slice(pred, gt);
        }
        dice /= count;
        ce /= count;
        ker = kernel_loss(params, trace, &matching.pairs, seed_feats, weights) / count;
    }
    let total = weights.cls * cls + weights.dice * dice + weights.ce * ce + weights.ker * ker;
    Ok(LossBreakdown {
        cls,
        dice,
        ce,
        ker,
        total,
        matching: matching.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::forward;
    use crate::rng::SplitMix64;

    fn t2(h: usize, w: usize, data: &[f64]) -> Tensor {
        Tensor::new(vec![h, w], data.to_vec()).unwrap()
    }

    #[test]
    fn focal_examples() {
        assert!(focal_loss(0.999999, true, 2.0, 0.25) < 1e-9);
        let want = 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((focal_loss(0.5, true, 2.0, 0.25) - want).abs() < 1e-15);
        assert!((want - 0.04332).abs() < 1e-5);
        for p in [0.1, 0.4, 0.9] {
            assert!((focal_loss(p, true, 0.0, 0.5) - 0.5 * -p.ln()).abs() < 1e-15);
            assert!((focal_loss(p, false, 0.0, 0.5) - 0.5 * -(1.0 - p).ln()).abs() < 1e-15);
        }
        assert!(focal_loss(0.0, true, 2.0, 0.25).is_finite());
        assert!(focal_loss(1.0, false, 2.0, 0.25).is_finite());
    }

    #[test]
    fn logit_focal_agrees_and_stays_sloped() {
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        for z in [-20.0, -3.0, -0.4, 0.0, 0.9, 5.0, 20.0] {
            for t in [true, false] {
                let a = focal_from_logit(z, t, 2.0, 0.25);
                let b = focal_loss(sig(z), t, 2.0, 0.25);
                // The probability form loses digits in 1 - p as |z| grows.
                let tol = if f64::abs(z) > 10.0 { 1e-8 } else { 1e-12 };
                assert!(
                    (a - b).abs() <= tol * b.abs().max(1.0),
                    "{z} {t}: {a} vs {b}"
                );
            }
        }
        // Far past the clamp the loss keeps growing linearly.
        assert!((focal_from_logit(-100.0, true, 2.0, 0.25) - 25.0).abs() < 1e-9);
        assert!((focal_from_logit_grad(-100.0, true, 2.0, 0.25) + 0.25).abs() < 1e-9);
        assert!((focal_from_logit_grad(100.0, false, 2.0, 0.25) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn focal_gradient_matches_difference_quotient() {
        for &(z, t, g, a) in &[
            (0.3, true, 2.0, 0.25),
            (-1.2, false, 2.0, 0.25),
            (2.0, true, 0.0, 0.5),
            (0.7, false, 1.5, 0.8),
            (-40.0, true, 2.0, 0.25),
        ] {
            let h = 1e-6;
            let fd =
                (focal_from_logit(z + h, t, g, a) - focal_from_logit(z - h, t, g, a)) / (2.0 * h);
            let an = focal_from_logit_grad(z, t, g, a);
            assert!((fd - an).abs() < 1e-8, "{z} {t}: {fd} vs {an}");
        }
    }

    #[test]
    fn dice_examples() {
        let gt = t2(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(dice_loss(&gt, &gt, 1.0).unwrap(), 0.0);

        let big_gt = Tensor::from_fn(&[20, 20], |i| if i < 200 { 1.0 } else { 0.0 });
        let big_pred = Tensor::from_fn(&[20, 20], |i| if i < 200 { 0.0 } else { 0.999 });
        assert!(dice_loss(&big_pred, &big_gt, 1.0).unwrap() > 0.99);

        let pred = t2(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let gt = t2(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        // 1 - (2*1 + 1) / (2 + 1 + 1)
        assert_eq!(dice_loss(&pred, &gt, 1.0).unwrap(), 0.25);
        assert!(dice_loss(&pred, &t2(1, 4, &[0.0; 4]), 1.0).is_err());
    }

    #[test]
    fn bce_examples() {
        let gt = t2(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(bce_loss(&gt, &gt).unwrap() < 1e-11);
        let half = Tensor::full(&[2, 2], 0.5);
        assert!((bce_loss(&half, &gt).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        let mut rng = SplitMix64::new(4);
        let pred = Tensor::from_fn(&[3, 3], |_| rng.uniform(0.05, 0.95));
        let gt = Tensor::from_fn(&[3, 3], |i| (i % 2) as f64);
        let mut want = 0.0;
        for i in 0..9 {
            let (p, g) = (pred.data()[i], gt.data()[i]);
            want += if g == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
        }
        assert!((bce_loss(&pred, &gt).unwrap() - want / 9.0).abs() < 1e-15);
    }

    #[test]
    fn losses_are_transpose_symmetric() {
        let mut rng = SplitMix64::new(8);
        let pred = Tensor::from_fn(&[3, 5], |_| rng.uniform(0.01, 0.99));
        let gt = Tensor::from_fn(&[3, 5], |_| rng.below(2) as f64);
        let tr = |t: &Tensor| Tensor::from_fn(&[5, 3], |i| t.get(&[i % 3, i / 3]));
        let d0 = dice_loss(&pred, &gt, 1.0).unwrap();
        let d1 = dice_loss(&tr(&pred), &tr(&gt), 1.0).unwrap();
        assert!((d0 - d1).abs() < 1e-14);
        let b0 = bce_loss(&pred, &gt).unwrap();
        let b1 = bce_loss(&tr(&pred), &tr(&gt)).unwrap();
        assert!((b0 - b1).abs() < 1e-14);
    }

    fn tiny_instance() -> (HeadParams, ForwardTrace, Vec<MaskProposal>, Tensor) {
        let params = HeadParams::init(3, 4, 2, 21);
        let mut rng = SplitMix64::new(22);
        let feat = Tensor::from_fn(&[4, 4, 4], |_| rng.uniform(-1.0, 1.0));
        let trace = forward(&params, &params.kernels0, &feat, 2).unwrap();
        let masks = [
            Tensor::from_fn(&[4, 4], |i| (i < 6) as u8 as f64),
            Tensor::from_fn(&[4, 4], |i| (i % 4 == 3) as u8 as f64),
        ];
        let props = masks
            .into_iter()
            .map(|m| MaskProposal::from_mask(m, 1.0, None).unwrap())
            .collect();
        let seeds = Tensor::from_fn(&[2, 2], |_| rng.uniform(-1.0, 1.0));
        (params, trace, props, seeds)
    }

    #[test]
    fn kernel_loss_extremes() {
        let (mut params, trace, _, _) = tiny_instance();
        // Zero projection weight: the projection is the bias; make it equal to
        // the stage-1 kernel of kernel 0 and use a one-stage view.
        let t1 = forward(&params, &params.kernels0, &trace.features, 1).unwrap();
        params.seed_proj_weight = Tensor::zeros(params.seed_proj_weight.shape());
        let target = t1.kernels[1].row(0).to_vec();
        params.seed_proj_bias = Tensor::vector(target.clone());
        let seeds = Tensor::zeros(&[1, 2]);
        let w = LossWeights::default();
        let t1 = forward(&params, &params.kernels0, &trace.features, 1).unwrap();
        assert!(kernel_loss(&params, &t1, &[(0, 0)], &seeds, &w).abs() < 1e-12);

        params.seed_proj_bias = Tensor::vector(target.iter().map(|v| -v).collect());
        let t1 = forward(&params, &params.kernels0, &trace.features, 1).unwrap();
        assert!((kernel_loss(&params, &t1, &[(0, 0)], &seeds, &w) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_loss_walks_the_trace() {
        let (params, trace, _, seeds) = tiny_instance();
        let pairs = [(2, 0), (0, 1)];
        let mut want = 0.0;
        for &(n, l) in &pairs {
            let s = seeds.row(l);
            let q: Vec<f64> = (0..4)
                .map(|r| {
                    params.seed_proj_weight.get(&[r, 0]) * s[0]
                        + params.seed_proj_weight.get(&[r, 1]) * s[1]
                        + params.seed_proj_bias.data()[r]
                })
                .collect();
            for i in 1..=2 {
                let k = trace.kernels[i].row(n);
                let cos = dot(&q, k) / (dot(&q, &q).sqrt() * dot(k, k).sqrt());
                want += 1.0 - cos;
            }
        }
        let got = kernel_loss(&params, &trace, &pairs, &seeds, &LossWeights::default());
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_zero_loss() {
        let (params, trace, props, seeds) = tiny_instance();
        let b = total_loss(&params, &trace, &props, &seeds, &LossWeights::zero()).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn background_only_image() {
        let (mut params, _, _, _) = tiny_instance();
        params.cls_weight = Tensor::zeros(&[4]);
        params.cls_bias = -40.0;
        let feat = Tensor::full(&[4, 4, 4], 0.1);
        let trace = forward(&params, &params.kernels0, &feat, 2).unwrap();
        let b = total_loss(
            &params,
            &trace,
            &[],
            &Tensor::zeros(&[0, 2]),
            &LossWeights::default(),
        )
        .unwrap();
        assert!(b.total < 1e-12);
        assert!(b.matching.pairs.is_empty());
    }

    #[test]
    fn total_is_sum_of_independent_terms() {
        let (params, trace, props, seeds) = tiny_instance();
        let w = LossWeights::default();
        let b = total_loss(&params, &trace, &props, &seeds, &w).unwrap();
        assert_eq!(b.matching.pairs.len(), 2);

        let fg: Vec<bool> = (0..3)
            .map(|k| b.matching.proposal_of(k).is_some())
            .collect();
        let cls: f64 = (0..3)
            .map(|k| focal_loss(trace.fg_prob[k], fg[k], 2.0, 0.25))
            .sum::<f64>()
            / 3.0;
        assert!(trace.fg_prob.iter().all(|&p| p > 1e-6 && p < 1.0 - 1e-6));
        let mut dice = 0.0;
        let mut ce = 0.0;
        for &(k, l) in &b.matching.pairs {
            let pred = Tensor::new(vec![4, 4], trace.final_mask(k).to_vec()).unwrap();
            dice += dice_loss(&pred, &props[l].mask, 1.0).unwrap();
            ce += bce_loss(&pred, &props[l].mask).unwrap();
        }
        let ker = kernel_loss(&params, &trace, &b.matching.pairs, &seeds, &w);
        let want = 2.0 * cls + 4.0 * dice / 2.0 + ce / 2.0 + ker / 2.0;
        assert!((b.total - want).abs() < 1e-11);
    }

    #[test]
    fn cost_rows_follow_mask_fit() {
        let (params, trace, _, _) = tiny_instance();
        // Proposal 1 is exactly kernel 0's binarized final mask; give the
        // kernel a confident class so its row minimum lands there.
        let exact: Vec<f64> = trace
            .final_mask(0)
            .iter()
            .map(|&v| (v >= 0.5) as u8 as f64)
            .collect();
        let other: Vec<f64> = exact.iter().map(|v| 1.0 - v).collect();
        let props: Vec<MaskProposal> = [other, exact]
            .into_iter()
            .map(|m| {
                MaskProposal::from_mask(Tensor::new(vec![4, 4], m).unwrap(), 1.0, None).unwrap()
            })
            .collect();
        let cost = build_cost(&trace, &props, &LossWeights::default()).unwrap();
        assert!(cost.get(&[0, 1]) < cost.get(&[0, 0]));
        let _ = params;
    }

    #[test]
    fn identical_kernels_give_identical_rows() {
        let mut params = HeadParams::init(3, 4, 2, 2);
        let row = params.kernels0.row(0).to_vec();
        for n in 1..3 {
            params.kernels0.row_mut(n).copy_from_slice(&row);
        }
        let (_, trace0, props, _) = tiny_instance();
        let trace = forward(&params, &params.kernels0, &trace0.features, 2).unwrap();
        let cost = build_cost(&trace, &props, &LossWeights::default()).unwrap();
        for l in 0..2 {
            assert_eq!(cost.get(&[0, l]), cost.get(&[1, l]));
            assert_eq!(cost.get(&[0, l]), cost.get(&[2, l]));
        }
    }
}
