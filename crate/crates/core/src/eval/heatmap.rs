use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length of exported kernel activation maps.
pub const HEATMAP_SIZE: usize = 200;

/// Mean per-kernel mask activation over an image set, `[N, S, S]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHeatmap {
    pub maps: Tensor,
    pub images: usize,
}

/// Bilinear resize of one `[h, w]` plane with half-pixel centres and
/// edge clamping. Output values are convex combinations of input values.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w);
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let ys = axis(h, out_h);
    let xs = axis(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Average each kernel's final-stage mask (`[N, H, W]` per image) over the
/// image set after resizing to `size x size`.
///
/// With `activation_threshold`, masks are binarized (`>= t`) before
/// averaging; otherwise soft activations are averaged.
pub fn kernel_heatmap<'a>(
    masks: impl IntoIterator<Item = &'a Tensor>,
    activation_threshold: Option<f64>,
    size: usize,
) -> Result<KernelHeatmap> {
    let mut acc: Option<(Vec<f64>, usize)> = None;
    let mut images = 0usize;
    for m in masks {
        let [n, h, w] = m.dims3()?;
        let (sum, kernels) = acc.get_or_insert_with(|| (vec![0.0; n * size * size], n));
        if *kernels != n {
            return Err(Error::shape(format!("{kernels} kernels"), n));
        }
        for k in 0..n {
            let plane = &m.data()[k * h * w..(k + 1) * h * w];
            let plane: Vec<f64> = match activation_threshold {
                Some(t) => plane
                    .iter()
                    .map(|&v| if v >= t { 1.0 } else { 0.0 })
                    .collect(),
                None => plane.to_vec(),
            };
            let resized = resize_bilinear(&plane, h, w, size, size);
            for (s, r) in sum[k * size * size..(k + 1) * size * size]
                .iter_mut()
                .zip(resized)
            {
                *s += r;
            }
        }
        images += 1;
    }
    let (sum, n) = acc.ok_or_else(|| Error::invalid("heatmap over an empty image set"))?;
    let maps = Tensor::new(
        vec![n, size, size],
        sum.into_iter()
            .map(|v| (v / images as f64).clamp(0.0, 1.0))
            .collect(),
    )?;
    Ok(KernelHeatmap { maps, images })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_masks(n: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::from_fn(&[n, h, w], |_| rng.next_f64())
    }

    #[test]
    fn resize_identity_and_constant() {
        let src: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(resize_bilinear(&src, 3, 4, 3, 4), src);
        let c = resize_bilinear(&[0.25; 6], 2, 3, 7, 5);
        assert!(c.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn upsample_two_pixels() {
        // Centres of a 1x2 -> 1x4 upsample sit at source x = -0.25, 0.25, 0.75, 1.25.
        let out = resize_bilinear(&[0.0, 1.0], 1, 2, 1, 4);
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn single_image_equals_resized_masks() {
        let m = random_masks(2, 5, 6, 3);
        let hm = kernel_heatmap([&m], None, 20).unwrap();
        assert_eq!(hm.images, 1);
        let want = resize_bilinear(&m.data()[30..60], 5, 6, 20, 20);
        assert_eq!(&hm.maps.data()[400..800], &want[..]);
    }

    #[test]
    fn half_masks_stay_half() {
        let m = Tensor::full(&[3, 8, 8], 0.5);
        let hm = kernel_heatmap([&m, &m], None, HEATMAP_SIZE).unwrap();
        assert_eq!(hm.maps.shape(), &[3, 200, 200]);
        assert!(hm.maps.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn threshold_binarizes_first() {
        let m = Tensor::new(vec![1, 1, 2], vec![0.4, 0.6]).unwrap();
        let hm = kernel_heatmap([&m], Some(0.5), 2).unwrap();
        assert_eq!(hm.maps.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn order_does_not_matter() {
        let a = random_masks(2, 4, 4, 1);
        let b = random_masks(2, 4, 4, 2);
        let ab = kernel_heatmap([&a, &b], None, 10).unwrap();
        let ba = kernel_heatmap([&b, &a], None, 10).unwrap();
        for (x, y) in ab.maps.data().iter().zip(ba.maps.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_count_must_agree() {
        let a = random_masks(2, 4, 4, 1);
        let b = random_masks(3, 4, 4, 2);
        assert!(kernel_heatmap([&a, &b], None, 10).is_err());
        assert!(kernel_heatmap(std::iter::empty(), None, 10).is_err());
    }
}
