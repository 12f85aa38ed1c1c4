use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mask_to_box;
use crate::rng::SplitMix64;
use crate::tensor::{Rect, Tensor};

/// Blob colors: white, red, green, blue. Centered at the gray background
/// they sit on the vertices of a regular tetrahedron.
pub const PALETTE: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];

const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub min_blobs: usize,
    pub max_blobs: usize,
    /// Blob side lengths (bounding box), inclusive range.
    pub min_size: usize,
    pub max_size: usize,
    /// Minimum pixel gap between blob bounding boxes.
    pub gap: usize,
    /// Background is `0.5 +- noise` per pixel and channel.
    pub noise: f64,
    pub ellipses: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 40,
            width: 40,
            min_blobs: 2,
            max_blobs: 4,
            min_size: 6,
            max_size: 12,
            gap: 4,
            noise: 0.05,
            ellipses: true,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.min_blobs > self.max_blobs {
            return bad("min_blobs exceeds max_blobs".into());
        }
        if self.max_blobs > PALETTE.len() {
            return bad(format!(
                "at most {} blobs (one per palette color)",
                PALETTE.len()
            ));
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return bad("blob sizes must satisfy 1 <= min_size <= max_size".into());
        }
        if self.max_size > self.height.min(self.width) {
            return bad("max_size exceeds the scene".into());
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return bad("noise must lie in [0, 0.5]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlobShape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub shape: BlobShape,
    /// Placement box; an ellipse is inscribed in it.
    pub bounds: Rect,
    pub color: [f64; 3],
}

impl Blob {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        let b = self.bounds;
        if !(b.x0..=b.x1).contains(&x) || !(b.y0..=b.y1).contains(&y) {
            return false;
        }
        match self.shape {
            BlobShape::Rect => true,
            BlobShape::Ellipse => {
                let a = b.width() as f64 / 2.0;
                let c = b.height() as f64 / 2.0;
                let dx = (x as f64 + 0.5 - b.x0 as f64 - a) / a;
                let dy = (y as f64 + 0.5 - b.y0 as f64 - c) / c;
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// `[3, H, W]` in `[0, 1]`.
    pub rgb: Tensor,
    pub blobs: Vec<Blob>,
    /// One binary `[H, W]` mask per blob.
    pub masks: Vec<Tensor>,
}

impl SyntheticScene {
    pub fn height(&self) -> usize {
        self.rgb.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.rgb.shape()[2]
    }

    /// Tight boxes of the ground-truth masks.
    pub fn gt_boxes(&self) -> Vec<Rect> {
        self.masks.iter().filter_map(mask_to_box).collect()
    }
}

fn gapped_overlap(a: Rect, b: Rect, gap: usize) -> bool {
    a.x0 <= b.x1 + gap && b.x0 <= a.x1 + gap && a.y0 <= b.y1 + gap && b.y0 <= a.y1 + gap
}

/// Deterministic scene: blob count, palette shuffle, blob placements and
/// shapes, then per-pixel background noise, in that draw order.
pub fn make_synthetic_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = SplitMix64::new(seed);
    let k = spec.min_blobs + rng.below(spec.max_blobs - spec.min_blobs + 1);

    let mut colors = PALETTE;
    for i in (1..colors.len()).rev() {
        colors.swap(i, rng.below(i + 1));
    }

    let mut blobs: Vec<Blob> = Vec::with_capacity(k);
    let span = spec.max_size - spec.min_size + 1;
    for &color in colors.iter().take(k) {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let bw = spec.min_size + rng.below(span);
            let bh = spec.min_size + rng.below(span);
            let x0 = rng.below(w - bw + 1);
            let y0 = rng.below(h - bh + 1);
            let bounds = Rect::new(x0, y0, x0 + bw - 1, y0 + bh - 1);
            if blobs
                .iter()
                .all(|b| !gapped_overlap(b.bounds, bounds, spec.gap))
            {
                placed = Some(bounds);
                break;
            }
        }
        let bounds = placed.ok_or_else(|| {
            Error::Config(format!("could not place {k} blobs in a {h}x{w} scene"))
        })?;
        let shape = if spec.ellipses && rng.below(2) == 1 {
            BlobShape::Ellipse
        } else {
            BlobShape::Rect
        };
        blobs.push(Blob {
            shape,
            bounds,
            color,
        });
    }

    let plane = h * w;
    let mut rgb: Vec<f64> = (0..3 * plane)
        .map(|_| 0.5 + rng.uniform(-spec.noise, spec.noise))
        .collect();
    let mut masks = Vec::with_capacity(k);
    for blob in &blobs {
        let mut m = vec![0.0; plane];
        for y in 0..h {
            for x in 0..w {
                if blob.contains(y, x) {
                    m[y * w + x] = 1.0;
                    for (c, &v) in blob.color.iter().enumerate() {
                        rgb[c * plane + y * w + x] = v;
                    }
                }
            }
        }
        masks.push(Tensor::new(vec![h, w], m)?);
    }
    Ok(SyntheticScene {
        rgb: Tensor::new(vec![3, h, w], rgb)?,
        blobs,
        masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_blobs_give_empty_ground_truth() {
        let spec = SceneSpec {
            min_blobs: 0,
            max_blobs: 0,
            ..SceneSpec::default()
        };
        let s = make_synthetic_scene(&spec, 3).unwrap();
        assert!(s.masks.is_empty() && s.gt_boxes().is_empty());
        assert!(s.rgb.data().iter().all(|v| (v - 0.5).abs() <= 0.05));
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::default();
        assert_eq!(
            make_synthetic_scene(&spec, 9).unwrap(),
            make_synthetic_scene(&spec, 9).unwrap()
        );
        assert_ne!(
            make_synthetic_scene(&spec, 9).unwrap(),
            make_synthetic_scene(&spec, 10).unwrap()
        );
    }

    #[test]
    fn areas_match_raster_count() {
        let spec = SceneSpec {
            min_blobs: 3,
            max_blobs: 3,
            ..SceneSpec::default()
        };
        for seed in 0..20 {
            let s = make_synthetic_scene(&spec, seed).unwrap();
            assert_eq!(s.blobs.len(), 3);
            for (blob, mask) in s.blobs.iter().zip(&s.masks) {
                let area = mask.data().iter().filter(|&&v| v == 1.0).count();
                let b = blob.bounds;
                match blob.shape {
                    BlobShape::Rect => assert_eq!(area, b.area()),
                    BlobShape::Ellipse => {
                        let (a, c) = (b.width() as f64 / 2.0, b.height() as f64 / 2.0);
                        let mut count = 0;
                        for y in 0..b.height() {
                            for x in 0..b.width() {
                                let u = (x as f64 + 0.5 - a) / a;
                                let v = (y as f64 + 0.5 - c) / c;
                                count += (u * u + v * v <= 1.0) as usize;
                            }
                        }
                        assert_eq!(area, count);
                        let analytic = std::f64::consts::PI * a * c;
                        assert!(
                            (area as f64 - analytic).abs()
                                <= b.width().max(b.height()) as f64 * 2.0
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn blobs_are_disjoint_and_distinct() {
        for seed in 0..30 {
            let s = make_synthetic_scene(&SceneSpec::default(), seed).unwrap();
            assert!((2..=4).contains(&s.blobs.len()));
            for i in 0..s.blobs.len() {
                for j in i + 1..s.blobs.len() {
                    assert_ne!(s.blobs[i].color, s.blobs[j].color);
                    assert!(!gapped_overlap(s.blobs[i].bounds, s.blobs[j].bounds, 3));
                }
            }
            let hw = 40 * 40;
            for m in &s.masks {
                for (p, &v) in m.data().iter().enumerate() {
                    if v == 1.0 {
                        let px: Vec<f64> = (0..3).map(|c| s.rgb.data()[c * hw + p]).collect();
                        assert!(PALETTE.iter().any(|col| col[..] == px[..]));
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let s = SceneSpec {
            max_blobs: 5,
            ..SceneSpec::default()
        };
        assert!(matches!(make_synthetic_scene(&s, 0), Err(Error::Config(_))));
        let s = SceneSpec {
            max_size: 50,
            ..SceneSpec::default()
        };
        assert!(s.validate().is_err());
    }
}
