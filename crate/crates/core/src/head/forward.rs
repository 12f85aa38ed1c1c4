use super::params::HeadParams;
use crate::error::{Error, Result};
use crate::tensor::{dot, sigmoid_scalar, Tensor};

/// Denominator guard in mask-weighted pooling.
pub const POOL_EPS: f64 = 1e-6;

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `K^0 ..= K^T`, each `[N, C]`. Stage 0 holds the injected kernels.
    pub kernels: Vec<Tensor>,
    /// `M^0 .. M^{T-1}`, each `[N, H, W]`.
    pub masks: Vec<Tensor>,
    /// Mask-weighted pooled features `g^i`, each `[N, C]`.
    pub pooled: Vec<Tensor>,
    /// `sum_x M^i_n(x)` per stage and kernel.
    pub mask_sums: Vec<Vec<f64>>,
    pub class_logits: Vec<f64>,
    /// Foreground probability `p_n`.
    pub fg_prob: Vec<f64>,
    /// The `[C, H, W]` features the trace was computed on.
    pub features: Tensor,
    pub(crate) params_fingerprint: u64,
}

impl ForwardTrace {
    pub fn stages(&self) -> usize {
        self.masks.len()
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels[0].shape()[0]
    }

    pub fn height(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.features.shape()[2]
    }

    /// Masks of the last stage, `[N, H, W]`.
    pub fn final_masks(&self) -> &Tensor {
        self.masks.last().expect("at least one stage")
    }

    /// Final-stage mask of kernel `n` as a flat `H * W` slice.
    pub fn final_mask(&self, n: usize) -> &[f64] {
        self.final_masks().row(n)
    }

    pub fn final_kernels(&self) -> &Tensor {
        self.kernels.last().expect("at least one stage")
    }

    pub fn is_fresh_for(&self, params: &HeadParams) -> bool {
        self.params_fingerprint == params.fingerprint()
    }
}

/// Run `stages` kernel-update iterations starting from `injected_kernels`.
pub fn forward(
    params: &HeadParams,
    injected_kernels: &Tensor,
    feat: &Tensor,
    stages: usize,
) -> Result<ForwardTrace> {
    if stages == 0 {
        return Err(Error::invalid("forward needs at least one stage"));
    }
    let [n, c] = injected_kernels.dims2()?;
    let [fc, h, w] = feat.dims3()?;
    if c != params.channels() || fc != c {
        return Err(Error::shape(
            format!("{} channels", params.channels()),
            format!("kernels {c}, features {fc}"),
        ));
    }
    let plane = h * w;
    let fdata = feat.data();
    let wu = params.update_weight.data();
    let bu = params.update_bias.data();

    let mut kernels = vec![injected_kernels.clone()];
    let mut masks = Vec::with_capacity(stages);
    let mut pooled = Vec::with_capacity(stages);
    let mut mask_sums = Vec::with_capacity(stages);

    for _ in 0..stages {
        let k = kernels.last().expect("seeded with stage 0");
        let mut m = vec![0.0; n * plane];
        let mut g = vec![0.0; n * c];
        let mut sums = vec![0.0; n];
        let mut next = k.data().to_vec();
        for kn in 0..n {
            let kv = k.row(kn);
            let mrow = &mut m[kn * plane..(kn + 1) * plane];
            for (ch, &kc) in kv.iter().enumerate() {
                for (a, &f) in mrow.iter_mut().zip(&fdata[ch * plane..(ch + 1) * plane]) {
                    *a += kc * f;
                }
            }
            for v in mrow.iter_mut() {
                *v = sigmoid_scalar(*v);
            }
            let s: f64 = mrow.iter().sum();
            sums[kn] = s;
            let grow = &mut g[kn * c..(kn + 1) * c];
            for (ch, gv) in grow.iter_mut().enumerate() {
                *gv = dot(mrow, &fdata[ch * plane..(ch + 1) * plane]) / (s + POOL_EPS);
            }
            let nrow = &mut next[kn * c..(kn + 1) * c];
            for (r, nv) in nrow.iter_mut().enumerate() {
                *nv += dot(&wu[r * c..(r + 1) * c], grow) + bu[r];
            }
        }
        masks.push(Tensor::new(vec![n, h, w], m)?);
        pooled.push(Tensor::new(vec![n, c], g)?);
        mask_sums.push(sums);
        kernels.push(Tensor::new(vec![n, c], next)?);
    }

    let last = kernels.last().expect("stages >= 1");
    let class_logits: Vec<f64> = last
        .rows()
        .map(|k| dot(params.cls_weight.data(), k) + params.cls_bias)
        .collect();
    let fg_prob = class_logits.iter().map(|&z| sigmoid_scalar(z)).collect();

    Ok(ForwardTrace {
        kernels,
        masks,
        pooled,
        mask_sums,
        class_logits,
        fg_prob,
        features: feat.clone(),
        params_fingerprint: params.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{dot_conv, sigmoid};

    #[test]
    fn zero_kernels_give_half_masks() {
        let params = HeadParams::init(3, 4, 2, 0);
        let feat = Tensor::from_fn(&[4, 3, 3], |i| i as f64 * 0.1);
        let trace = forward(&params, &Tensor::zeros(&[3, 4]), &feat, 2).unwrap();
        assert!(trace.masks[0].data().iter().all(|&v| v == 0.5));
        assert_eq!(trace.stages(), 2);
        assert_eq!(trace.kernels.len(), 3);
    }

    #[test]
    fn single_stage_is_plain_mask_prediction() {
        let params = HeadParams::init(2, 3, 2, 5);
        let feat = Tensor::from_fn(&[3, 2, 4], |i| ((i * 7) % 5) as f64 - 2.0);
        let trace = forward(&params, &params.kernels0, &feat, 1).unwrap();
        for n in 0..2 {
            let want = sigmoid(&dot_conv(params.kernels0.row(n), &feat).unwrap());
            assert_eq!(trace.final_mask(n), want.data());
        }
    }

    #[test]
    fn two_stage_scalar_walkthrough() {
        // N=1, C=2, 2x2 features, hand-picked parameters.
        let mut params = HeadParams::init(1, 2, 1, 0);
        params.update_weight = Tensor::new(vec![2, 2], vec![0.5, -0.2, 0.1, 0.3]).unwrap();
        params.update_bias = Tensor::vector(vec![0.05, -0.1]);
        params.cls_weight = Tensor::vector(vec![1.0, -1.0]);
        params.cls_bias = 0.2;
        let k0 = Tensor::new(vec![1, 2], vec![0.4, -0.6]).unwrap();
        let f = [[1.0, 0.0, -1.0, 2.0], [0.5, 1.5, 0.0, -0.5]];
        let feat = Tensor::new(vec![2, 2, 2], f.concat()).unwrap();

        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut k = [0.4, -0.6];
        let mut last_mask = [0.0; 4];
        let mut stage_kernels = vec![k];
        for _ in 0..2 {
            let m: Vec<f64> = (0..4)
                .map(|x| sig(k[0] * f[0][x] + k[1] * f[1][x]))
                .collect();
            let s: f64 = m.iter().sum();
            let g0 = (0..4).map(|x| m[x] * f[0][x]).sum::<f64>() / (s + 1e-6);
            let g1 = (0..4).map(|x| m[x] * f[1][x]).sum::<f64>() / (s + 1e-6);
            k = [
                k[0] + 0.5 * g0 - 0.2 * g1 + 0.05,
                k[1] + 0.1 * g0 + 0.3 * g1 - 0.1,
            ];
            last_mask.copy_from_slice(&m);
            stage_kernels.push(k);
        }
        let p = sig(k[0] - k[1] + 0.2);

        let trace = forward(&params, &k0, &feat, 2).unwrap();
        for (i, want) in stage_kernels.iter().enumerate() {
            for (a, b) in trace.kernels[i].data().iter().zip(want) {
                assert!((a - b).abs() < 1e-14, "stage {i}");
            }
        }
        for (a, b) in trace.final_mask(0).iter().zip(&last_mask) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((trace.fg_prob[0] - p).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let params = HeadParams::init(2, 3, 2, 0);
        let feat = Tensor::zeros(&[4, 2, 2]);
        assert!(forward(&params, &params.kernels0, &feat, 1).is_err());
        let feat = Tensor::zeros(&[3, 2, 2]);
        assert!(forward(&params, &params.kernels0, &feat, 0).is_err());
    }
}
