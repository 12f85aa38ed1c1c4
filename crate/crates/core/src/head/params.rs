use std::hash::Hasher;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Every learnable parameter of the head. The same struct doubles as the
/// gradient and momentum container.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// Initial kernels `[N, C]`.
    pub kernels0: Tensor,
    /// Kernel update map `[C, C]`.
    pub update_weight: Tensor,
    /// `[C]`.
    pub update_bias: Tensor,
    /// Foreground logit weights `[C]`.
    pub cls_weight: Tensor,
    pub cls_bias: f64,
    /// Seed-feature projection `[C, D]` used by the kernel supervision term.
    pub seed_proj_weight: Tensor,
    /// `[C]`.
    pub seed_proj_bias: Tensor,
}

/// Field names in [`HeadParams::fields`] order.
pub const FIELD_NAMES: [&str; 7] = [
    "kernels0",
    "update_weight",
    "update_bias",
    "cls_weight",
    "cls_bias",
    "seed_proj_weight",
    "seed_proj_bias",
];

impl HeadParams {
    /// Seeded init: kernels, update and class weights uniform in
    /// `+-1/sqrt(C)`, seed projection uniform in `+-1/sqrt(D)`, biases zero.
    /// Draw order is kernels0, update_weight, cls_weight, seed_proj_weight.
    pub fn init(num_kernels: usize, channels: usize, seed_channels: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let bc = 1.0 / (channels as f64).sqrt();
        let bd = 1.0 / (seed_channels as f64).sqrt();
        let mut uniform =
            |shape: &[usize], bound: f64| Tensor::from_fn(shape, |_| rng.uniform(-bound, bound));
        let kernels0 = uniform(&[num_kernels, channels], bc);
        let update_weight = uniform(&[channels, channels], bc);
        let cls_weight = uniform(&[channels], bc);
        let seed_proj_weight = uniform(&[channels, seed_channels], bd);
        Self {
            kernels0,
            update_weight,
            update_bias: Tensor::zeros(&[channels]),
            cls_weight,
            cls_bias: 0.0,
            seed_proj_weight,
            seed_proj_bias: Tensor::zeros(&[channels]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.shape());
        Self {
            kernels0: z(&self.kernels0),
            update_weight: z(&self.update_weight),
            update_bias: z(&self.update_bias),
            cls_weight: z(&self.cls_weight),
            cls_bias: 0.0,
            seed_proj_weight: z(&self.seed_proj_weight),
            seed_proj_bias: z(&self.seed_proj_bias),
        }
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels0.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.kernels0.shape()[1]
    }

    pub fn seed_channels(&self) -> usize {
        self.seed_proj_weight.shape()[1]
    }

    pub fn fields(&self) -> [&[f64]; 7] {
        [
            self.kernels0.data(),
            self.update_weight.data(),
            self.update_bias.data(),
            self.cls_weight.data(),
            std::slice::from_ref(&self.cls_bias),
            self.seed_proj_weight.data(),
            self.seed_proj_bias.data(),
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.kernels0.data_mut(),
            self.update_weight.data_mut(),
            self.update_bias.data_mut(),
            self.cls_weight.data_mut(),
            std::slice::from_mut(&mut self.cls_bias),
            self.seed_proj_weight.data_mut(),
            self.seed_proj_bias.data_mut(),
        ]
    }

    pub fn field_shapes(&self) -> [Vec<usize>; 7] {
        [
            self.kernels0.shape().to_vec(),
            self.update_weight.shape().to_vec(),
            self.update_bias.shape().to_vec(),
            self.cls_weight.shape().to_vec(),
            vec![1],
            self.seed_proj_weight.shape().to_vec(),
            self.seed_proj_bias.shape().to_vec(),
        ]
    }

    /// Rebuild from named field tensors (in [`FIELD_NAMES`] order).
    pub fn from_fields(fields: [Tensor; 7]) -> Result<Self> {
        let [kernels0, update_weight, update_bias, cls_weight, cls_bias, seed_proj_weight, seed_proj_bias] =
            fields;
        if cls_bias.len() != 1 {
            return Err(Error::shape("scalar cls_bias", cls_bias.shape()));
        }
        let p = Self {
            kernels0,
            update_weight,
            update_bias,
            cls_weight,
            cls_bias: cls_bias.data()[0],
            seed_proj_weight,
            seed_proj_bias,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let [n, c] = self.kernels0.dims2()?;
        let d = self.seed_proj_weight.dims2()?[1];
        let want: [Vec<usize>; 7] = [
            vec![n, c],
            vec![c, c],
            vec![c],
            vec![c],
            vec![1],
            vec![c, d],
            vec![c],
        ];
        for ((name, shape), want) in FIELD_NAMES.iter().zip(self.field_shapes()).zip(want) {
            if shape != want {
                return Err(Error::shape(format!("{name} {want:?}"), shape));
            }
        }
        if !self
            .fields()
            .iter()
            .all(|f| f.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("head parameters".into()));
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &HeadParams) {
        for (dst, src) in self.fields_mut().into_iter().zip(other.fields()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for dst in self.fields_mut() {
            for d in dst {
                *d *= alpha;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.fields()
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Global L2 norm over every field.
    pub fn l2_norm(&self) -> f64 {
        self.fields()
            .iter()
            .flat_map(|f| f.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn num_scalars(&self) -> usize {
        self.fields().iter().map(|f| f.len()).sum()
    }

    /// Hash of every parameter bit pattern; used to detect stale traces.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for f in self.fields() {
            h.write_usize(f.len());
            for v in f {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}
