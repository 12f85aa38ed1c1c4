use super::forward::{ForwardTrace, POOL_EPS};
use super::hungarian::MatchResult;
use super::loss::{
    bce_grad, check_seed_feats, dice_grad, focal_from_logit_grad, project_seed, total_loss,
    LossWeights,
};
use super::params::HeadParams;
use crate::error::{Error, Result};
use crate::proposal::MaskProposal;
use crate::tensor::{dot, norm, Tensor, ZERO_NORM};

/// Gradients of [`total_loss`] with respect to every parameter. The matching
/// is recomputed from the trace and held fixed.
pub fn backward(
    params: &HeadParams,
    trace: &ForwardTrace,
    proposals: &[MaskProposal],
    seed_feats: &Tensor,
    weights: &LossWeights,
) -> Result<HeadParams> {
    let loss = total_loss(params, trace, proposals, seed_feats, weights)?;
    backward_with_match(
        params,
        trace,
        proposals,
        seed_feats,
        weights,
        &loss.matching,
    )
}

/// Gradients for a fixed matching. `trace` must come from `forward` on these
/// exact `params`.
pub fn backward_with_match(
    params: &HeadParams,
    trace: &ForwardTrace,
    proposals: &[MaskProposal],
    seed_feats: &Tensor,
    weights: &LossWeights,
    matching: &MatchResult,
) -> Result<HeadParams> {
    if !trace.is_fresh_for(params) {
        return Err(Error::StaleTrace);
    }
    check_seed_feats(params, proposals, seed_feats)?;
    let n = trace.num_kernels();
    let c = params.channels();
    let t = trace.stages();
    let plane = trace.height() * trace.width();
    let fdata = trace.features.data();

    let mut grads = params.zeros_like();
    // dK[i] is d loss / d K^i, flattened [N, C].
    let mut dk = vec![vec![0.0; n * c]; t + 1];

    let mut is_fg = vec![false; n];
    for &(k, _) in &matching.pairs {
        is_fg[k] = true;
    }
    let final_k = trace.final_kernels();
    for k in 0..n {
        let dz = weights.cls / n as f64
            * focal_from_logit_grad(
                trace.class_logits[k],
                is_fg[k],
                weights.focal_gamma,
                weights.focal_alpha,
            );
        for (gw, &kv) in grads.cls_weight.data_mut().iter_mut().zip(final_k.row(k)) {
            *gw += dz * kv;
        }
        grads.cls_bias += dz;
        for (d, &w) in dk[t][k * c..(k + 1) * c]
            .iter_mut()
            .zip(params.cls_weight.data())
        {
            *d += dz * w;
        }
    }

    let mut dmask = vec![vec![0.0; plane]; n];
    if !matching.pairs.is_empty() {
        let count = matching.pairs.len() as f64;
        let d = params.seed_channels();
        for &(k, l) in &matching.pairs {
            let pred = trace.final_mask(k);
            let gt = proposals[l].mask.data();
            dice_grad(
                pred,
                gt,
                weights.dice_eps,
                weights.dice / count,
                &mut dmask[k],
            );
            bce_grad(pred, gt, weights.ce / count, &mut dmask[k]);

            if weights.ker == 0.0 {
                continue;
            }
            let scale = weights.ker / count;
            let seed = seed_feats.row(l);
            let q = project_seed(params, seed);
            let qn = norm(&q);
            let mut dq = vec![0.0; c];
            let first = weights.first_supervised_stage();
            for (kernels, dki) in trace.kernels[first..=t].iter().zip(&mut dk[first..=t]) {
                let kv = kernels.row(k);
                let kn = norm(kv);
                if qn < ZERO_NORM || kn < ZERO_NORM {
                    continue;
                }
                let cos = dot(&q, kv) / (qn * kn);
                let dst = &mut dki[k * c..(k + 1) * c];
                for r in 0..c {
                    dst[r] -= scale * (q[r] / (qn * kn) - cos * kv[r] / (kn * kn));
                    dq[r] -= scale * (kv[r] / (qn * kn) - cos * q[r] / (qn * qn));
                }
            }
            for (r, &dqr) in dq.iter().enumerate() {
                let row = &mut grads.seed_proj_weight.data_mut()[r * d..(r + 1) * d];
                for (w, &s) in row.iter_mut().zip(seed) {
                    *w += dqr * s;
                }
                grads.seed_proj_bias.data_mut()[r] += dqr;
            }
        }
    }

    let wu = params.update_weight.data();
    let mut da = vec![0.0; plane];
    for i in (0..t).rev() {
        let (lower, upper) = dk.split_at_mut(i + 1);
        let dnext_all = &upper[0];
        let dcur_all = &mut lower[i];
        for k in 0..n {
            let dnext = &dnext_all[k * c..(k + 1) * c];
            let g = trace.pooled[i].row(k);
            {
                let gw = grads.update_weight.data_mut();
                for r in 0..c {
                    for (w, &gv) in gw[r * c..(r + 1) * c].iter_mut().zip(g) {
                        *w += dnext[r] * gv;
                    }
                }
            }
            for (b, &dn) in grads.update_bias.data_mut().iter_mut().zip(dnext) {
                *b += dn;
            }
            let mut dg = vec![0.0; c];
            for r in 0..c {
                for (col, dgv) in dg.iter_mut().enumerate() {
                    *dgv += wu[r * c + col] * dnext[r];
                }
            }
            let denom = trace.mask_sums[i][k] + POOL_EPS;
            let m = trace.masks[i].row(k);
            let offset = dot(&dg, g);
            da.iter_mut().for_each(|v| *v = 0.0);
            for (ch, &dgc) in dg.iter().enumerate() {
                for (a, &f) in da.iter_mut().zip(&fdata[ch * plane..(ch + 1) * plane]) {
                    *a += dgc * f;
                }
            }
            for (x, a) in da.iter_mut().enumerate() {
                let mut dm = (*a - offset) / denom;
                if i + 1 == t {
                    dm += dmask[k][x];
                }
                *a = dm * m[x] * (1.0 - m[x]);
            }
            let dcur = &mut dcur_all[k * c..(k + 1) * c];
            for (ch, dc) in dcur.iter_mut().enumerate() {
                *dc += dnext[ch] + dot(&da, &fdata[ch * plane..(ch + 1) * plane]);
            }
        }
    }
    grads.kernels0.data_mut().copy_from_slice(&dk[0]);
    Ok(grads)
}
