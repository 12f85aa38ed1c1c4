//! Fixed toy feature extractor and the frozen neck that lifts its output to
//! the head's channel count.
//!
//! Extractor channels, all at input resolution (stride 1), with luminance
//! `Y = 0.299 R + 0.587 G + 0.114 B` and edge-replicated borders:
//!
//! | index | channel                        |
//! |-------|--------------------------------|
//! | 0..3  | `R - 0.5`, `G - 0.5`, `B - 0.5` |
//! | 3     | `(Y[x+1] - Y[x-1]) / 2`        |
//! | 4     | `(Y[y+1] - Y[y-1]) / 2`        |
//! | 5, 6  | 3x3 box mean of `Y` minus 0.5, 3x3 variance of `Y` |
//! | 7, 8  | 7x7 box mean of `Y` minus 0.5, 7x7 variance of `Y` |
//!
//! Every channel then passes through the soft threshold
//! `sign(v) max(|v| - DEAD_ZONE, 0)`, so flat low-contrast regions map to
//! exactly zero.
//!
//! The neck maps the `[H, W, D]` extractor output to `[C, H, W]` as
//! `[X, 1, (r_1 . X)^2, ..., (r_{C-D-1} . X)^2]` with fixed unit vectors
//! `r_j` drawn from [`NECK_SEED`].

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{norm, Tensor};

/// Number of extractor channels.
pub const FEATURE_DIM: usize = 9;

/// Soft-threshold applied to every extractor channel.
pub const DEAD_ZONE: f64 = 0.1;

/// Seed of the neck's projection directions.
pub const NECK_SEED: u64 = 0x6e65_636b;

fn luminance(rgb: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
    let [c, h, w] = rgb.dims3()?;
    if c != 3 {
        return Err(Error::shape("[3, H, W] image", rgb.shape()));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("empty image"));
    }
    let d = rgb.data();
    let plane = h * w;
    let y = (0..plane)
        .map(|i| 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i])
        .collect();
    Ok((y, h, w))
}

fn box_stats(y: &[f64], h: usize, w: usize, radius: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; h * w];
    let mut var = vec![0.0; h * w];
    let r = radius as isize;
    let count = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    for row in 0..h {
        for col in 0..w {
            let (mut s, mut s2) = (0.0, 0.0);
            for dy in -r..=r {
                let yy = (row as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let xx = (col as isize + dx).clamp(0, w as isize - 1) as usize;
                    let v = y[yy * w + xx];
                    s += v;
                    s2 += v * v;
                }
            }
            let m = s / count;
            mean[row * w + col] = m;
            var[row * w + col] = (s2 / count - m * m).max(0.0);
        }
    }
    (mean, var)
}

/// `[3, H, W]` RGB in `[0, 1]` to `[H, W, FEATURE_DIM]` features.
pub fn toy_feature_extractor(rgb: &Tensor) -> Result<Tensor> {
    let (y, h, w) = luminance(rgb)?;
    let plane = h * w;
    let mut chw = Vec::with_capacity(FEATURE_DIM * plane);
    chw.extend(rgb.data().iter().map(|v| v - 0.5));
    let at = |r: usize, c: usize| y[r * w + c];
    for row in 0..h {
        for col in 0..w {
            chw.push((at(row, (col + 1).min(w - 1)) - at(row, col.saturating_sub(1))) / 2.0);
        }
    }
    for row in 0..h {
        for col in 0..w {
            chw.push((at((row + 1).min(h - 1), col) - at(row.saturating_sub(1), col)) / 2.0);
        }
    }
    for radius in [1, 3] {
        let (mean, var) = box_stats(&y, h, w, radius);
        chw.extend(mean.iter().map(|m| m - 0.5));
        chw.extend(var);
    }
    for v in &mut chw {
        *v = shrink(*v);
    }
    Tensor::new(vec![FEATURE_DIM, h, w], chw)?.chw_to_hwc()
}

fn shrink(v: f64) -> f64 {
    v.signum() * (v.abs() - DEAD_ZONE).max(0.0)
}

/// Fixed unit directions used by [`neck`] for `channels` outputs.
pub fn neck_directions(channels: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(NECK_SEED);
    (0..channels.saturating_sub(dim + 1))
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let n = norm(&v);
            if n > 1e-3 {
                break v.iter().map(|x| x / n).collect();
            }
        })
        .collect()
}

/// Lift `[H, W, D]` features to the head's `[C, H, W]` map.
pub fn neck(x: &Tensor, channels: usize) -> Result<Tensor> {
    let [h, w, d] = x.dims3()?;
    if channels < d + 1 {
        return Err(Error::Config(format!(
            "head channels {channels} must be at least feature dim {d} + 1"
        )));
    }
    let dirs = neck_directions(channels, d);
    let plane = h * w;
    let mut out = vec![0.0; channels * plane];
    for (p, px) in x.data().chunks(d.max(1)).enumerate() {
        for (k, &v) in px.iter().enumerate() {
            out[k * plane + p] = v;
        }
        out[d * plane + p] = 1.0;
        for (j, r) in dirs.iter().enumerate() {
            let proj: f64 = r.iter().zip(px).map(|(a, b)| a * b).sum();
            out[(d + 1 + j) * plane + p] = proj * proj;
        }
    }
    Tensor::new(vec![channels, h, w], out)
}

/// Extractor features `[H, W, D]` and head features `[C, H, W]` of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub x: Tensor,
    pub feat: Tensor,
}

impl ImageFeatures {
    pub fn from_rgb(rgb: &Tensor, channels: usize) -> Result<Self> {
        let x = toy_feature_extractor(rgb)?;
        Self::from_x(x, channels)
    }

    pub fn from_x(x: Tensor, channels: usize) -> Result<Self> {
        let feat = neck(&x, channels)?;
        Ok(Self { x, feat })
    }

    pub fn height(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.x.shape()[1]
    }
}
