//! Dense row-major tensors and the handful of numeric kernels the rest of
//! the crate is built on.
//!
//! Values are held as `f64` regardless of the element type tag; the tag only
//! controls how a tensor is written to disk.

mod io;

use serde::{Deserialize, Serialize};

pub use io::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, MAGIC, VERSION};

use crate::error::{Error, Result};

/// On-disk element type. Computation is always carried out in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElemType {
    F32,
    F64,
}

impl ElemType {
    pub fn code(self) -> u8 {
        match self {
            ElemType::F32 => 0,
            ElemType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ElemType::F32),
            1 => Some(ElemType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElemType::F32 => 4,
            ElemType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    elem: ElemType,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                format!("{numel} elements for shape {shape:?}"),
                data.len(),
            ));
        }
        Ok(Self {
            shape,
            elem: ElemType::F64,
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            elem: ElemType::F64,
            data: vec![value; numel],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            elem: ElemType::F64,
            data: (0..numel).map(&mut f).collect(),
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            elem: ElemType::F64,
            data,
        }
    }

    /// Re-tag the tensor. Converting to `F32` rounds every value through `f32`.
    pub fn with_elem_type(mut self, elem: ElemType) -> Self {
        if elem == ElemType::F32 {
            for v in &mut self.data {
                *v = *v as f32 as f64;
            }
        }
        self.elem = elem;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn elem_type(&self) -> ElemType {
        self.elem
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let elem = self.elem;
        let mut t = Tensor::new(shape, self.data)?;
        t.elem = elem;
        Ok(t)
    }

    /// Slice along the leading axis.
    pub fn row(&self, i: usize) -> &[f64] {
        let stride = self.row_stride();
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let stride = self.row_stride();
        &mut self.data[i * stride..(i + 1) * stride]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let stride = self.row_stride().max(1);
        self.data
            .chunks(stride)
            .take(self.shape.first().copied().unwrap_or(0))
    }

    fn row_stride(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {i} out of bound {d}");
            acc * d + i
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            elem: ElemType::F64,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `[H, W, D]` to `[D, H, W]`.
    pub fn hwc_to_chw(&self) -> Result<Self> {
        let [h, w, c] = self.dims3()?;
        let mut out = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    out[(k * h + y) * w + x] = self.data[(y * w + x) * c + k];
                }
            }
        }
        Tensor::new(vec![c, h, w], out)
    }

    /// `[C, H, W]` to `[H, W, C]`.
    pub fn chw_to_hwc(&self) -> Result<Self> {
        let [c, h, w] = self.dims3()?;
        let mut out = vec![0.0; self.data.len()];
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[(y * w + x) * c + k] = self.data[(k * h + y) * w + x];
                }
            }
        }
        Tensor::new(vec![h, w, c], out)
    }

    pub(crate) fn dims2(&self) -> Result<[usize; 2]> {
        match self.shape[..] {
            [a, b] => Ok([a, b]),
            _ => Err(Error::shape("rank-2 tensor", &self.shape)),
        }
    }

    pub(crate) fn dims3(&self) -> Result<[usize; 3]> {
        match self.shape[..] {
            [a, b, c] => Ok([a, b, c]),
            _ => Err(Error::shape("rank-3 tensor", &self.shape)),
        }
    }
}

/// Inclusive integer pixel rectangle: columns `x0..=x1`, rows `y0..=y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::new(0, 0, width - 1, height - 1)
    }

    pub fn is_valid(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1
    }

    pub fn width(&self) -> usize {
        self.x1 + 1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 + 1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.is_valid() && self.x1 < width && self.y1 < height
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

/// Per-channel mean of a `[C, H, W]` map over `rect`.
pub fn avg_pool_region(t: &Tensor, rect: Rect) -> Result<Vec<f64>> {
    let [c, h, w] = t.dims3()?;
    if !rect.fits(h, w) {
        return Err(Error::invalid(format!(
            "pooling rect {rect:?} outside {h}x{w} map"
        )));
    }
    let count = rect.area() as f64;
    let out = (0..c)
        .map(|k| {
            let plane = &t.data[k * h * w..(k + 1) * h * w];
            let sum: f64 = (rect.y0..=rect.y1)
                .map(|y| plane[y * w + rect.x0..=y * w + rect.x1].iter().sum::<f64>())
                .sum();
            sum / count
        })
        .collect();
    Ok(out)
}

/// Norms below this count as zero for [`cosine`].
pub const ZERO_NORM: f64 = 1e-12;

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity; zero when either vector has (near-)zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(u.len(), v.len()));
    }
    Ok(cosine_unchecked(u, v))
}

pub(crate) fn cosine_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Min-max rescale to `[0, 1]`. A constant input maps to all zeros.
pub fn linear_normalize(t: &Tensor) -> Tensor {
    let (lo, hi) = (t.min(), t.max());
    if t.is_empty() || hi <= lo {
        return Tensor::zeros(&t.shape);
    }
    let span = hi - lo;
    t.map(|v| (v - lo) / span)
}

/// Largest double strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept inside the open interval (0, 1).
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

pub fn sigmoid(t: &Tensor) -> Tensor {
    t.map(sigmoid_scalar)
}

/// 1x1 convolution: per-pixel dot product of `weights` with the channel
/// column of a `[C, H, W]` map.
pub fn dot_conv(weights: &[f64], feat: &Tensor) -> Result<Tensor> {
    let [c, h, w] = feat.dims3()?;
    if weights.len() != c {
        return Err(Error::shape(format!("{c} weights"), weights.len()));
    }
    let plane = h * w;
    let mut out = vec![0.0; plane];
    for (k, &wk) in weights.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        for (o, &f) in out.iter_mut().zip(&feat.data[k * plane..(k + 1) * plane]) {
            *o += wk * f;
        }
    }
    Tensor::new(vec![h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn pooling_examples() {
        let constant = Tensor::full(&[3, 4, 5], 3.0);
        assert_eq!(
            avg_pool_region(&constant, Rect::new(1, 1, 3, 2)).unwrap(),
            vec![3.0; 3]
        );

        let t = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // (1 + 2 + 3 + 4) / 4
        assert_eq!(avg_pool_region(&t, Rect::full(2, 2)).unwrap(), vec![2.5]);
        assert_eq!(
            avg_pool_region(&t, Rect::new(0, 0, 0, 0)).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn pooling_rejects_bad_rects() {
        let t = Tensor::zeros(&[1, 2, 2]);
        assert!(avg_pool_region(&t, Rect::new(0, 0, 2, 1)).is_err());
        assert!(avg_pool_region(&t, Rect::new(1, 0, 0, 1)).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // (12 + 12) / (5 * 5)
        assert!((cosine(&[3.0, 4.0], &[4.0, 3.0]).unwrap() - 0.96).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let t = Tensor::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(linear_normalize(&t).data(), &[1.0, 0.0, 0.0, 1.0]);
        let c = Tensor::full(&[3, 3], 0.7);
        assert!(linear_normalize(&c).data().iter().all(|&v| v == 0.0));
        let unit = Tensor::new(vec![3], vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(linear_normalize(&unit), unit);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((1.0 - sigmoid_scalar(100.0)).abs() < 1e-12);
        assert!(sigmoid_scalar(100.0) < 1.0);
        assert!(sigmoid_scalar(-800.0) > 0.0);
        for x in [-3.0, -0.1, 0.7, 12.0] {
            assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dot_conv_examples() {
        let feat = random_tensor(&[3, 4, 4], 1);
        let zero = dot_conv(&[0.0; 3], &feat).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));

        let f = Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap();
        assert_eq!(dot_conv(&[2.0], &f).unwrap().data(), &[2.0, 6.0]);

        let feat = random_tensor(&[2, 2, 2], 9);
        let w = [0.3, -1.7];
        let got = dot_conv(&w, &feat).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                let want = w[0] * feat.get(&[0, y, x]) + w[1] * feat.get(&[1, y, x]);
                assert!((got.get(&[y, x]) - want).abs() < 1e-15);
            }
        }
        assert!(dot_conv(&[1.0], &feat).is_err());
    }

    #[test]
    fn layout_permutations_invert() {
        let t = random_tensor(&[2, 3, 4], 3);
        let hwc = t.chw_to_hwc().unwrap();
        assert_eq!(hwc.shape(), &[3, 4, 2]);
        assert_eq!(hwc.get(&[1, 2, 1]), t.get(&[1, 1, 2]));
        assert_eq!(hwc.hwc_to_chw().unwrap(), t);
    }

    proptest! {
        #[test]
        fn normalize_spans_unit_interval(values in prop::collection::vec(-50.0f64..50.0, 2..40)) {
            let t = Tensor::vector(values);
            let n = linear_normalize(&t);
            if t.max() > t.min() {
                prop_assert_eq!(n.min(), 0.0);
                prop_assert_eq!(n.max(), 1.0);
            } else {
                prop_assert!(n.data().iter().all(|&v| v == 0.0));
            }
        }

        #[test]
        fn dot_conv_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let feat = random_tensor(&[4, 3, 5], seed);
            let w1 = random_tensor(&[4], seed + 1);
            let w2 = random_tensor(&[4], seed + 2);
            let mix: Vec<f64> = w1.data().iter().zip(w2.data()).map(|(x, y)| a * x + b * y).collect();
            let lhs = dot_conv(&mix, &feat).unwrap();
            let r1 = dot_conv(w1.data(), &feat).unwrap();
            let r2 = dot_conv(w2.data(), &feat).unwrap();
            for i in 0..lhs.len() {
                let rhs = a * r1.data()[i] + b * r2.data()[i];
                prop_assert!((lhs.data()[i] - rhs).abs() <= 1e-10);
            }
        }

        #[test]
        fn cosine_scale_invariant(seed in 0u64..1000, alpha in 1e-3f64..1e3) {
            let u = random_tensor(&[6], seed);
            let v = random_tensor(&[6], seed + 7);
            let scaled: Vec<f64> = u.data().iter().map(|x| alpha * x).collect();
            let c1 = cosine(&scaled, v.data()).unwrap();
            let c0 = cosine(u.data(), v.data()).unwrap();
            prop_assert!((c1 - c0).abs() <= 1e-12);
        }
    }
}
