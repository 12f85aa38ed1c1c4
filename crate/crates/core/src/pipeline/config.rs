use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::FEATURE_DIM;
use super::scene::{make_synthetic_scene, SceneSpec, SyntheticScene};
use crate::error::{Error, Result};
use crate::head::LossWeights;
use crate::pnm::read_pnm;
use crate::prompting::AssignStrategy;
use crate::proposal::ProposalConfig;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Where pseudo masks come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PseudoLabelSource {
    #[default]
    Saliency,
    /// `count` random rectangles per image.
    Random { count: usize },
    /// One manifest per image, `<dir>/<image id>.json`.
    ExternalManifest { dir: PathBuf },
}

/// Learning rate as a function of the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// `lr * (1 + cos(pi * step / steps)) / 2`.
    #[default]
    Cosine,
}

impl LrSchedule {
    pub fn at(self, base: f64, step: usize, steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = step as f64 / steps.max(1) as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// `count` scenes; scene `i` uses seed `derive(seed, i)`.
    Synthetic {
        count: usize,
        seed: u64,
        #[serde(default)]
        scene: SceneSpec,
    },
    /// PGM/PPM files without ground truth.
    Images { paths: Vec<PathBuf> },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            count: 20,
            seed: 0,
            scene: SceneSpec::default(),
        }
    }
}

/// One loaded image with its ground-truth masks (empty when unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetImage {
    pub id: String,
    pub rgb: Tensor,
    pub gt_masks: Vec<Tensor>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Synthetic { count, scene, .. } => {
                if *count == 0 {
                    return Err(Error::Config("dataset is empty".into()));
                }
                scene.validate()
            }
            DatasetSpec::Images { paths } if paths.is_empty() => {
                Err(Error::Config("dataset is empty".into()))
            }
            DatasetSpec::Images { .. } => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DatasetSpec::Synthetic { count, .. } => *count,
            DatasetSpec::Images { paths } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_instances(&self) -> usize {
        match self {
            DatasetSpec::Synthetic { scene, .. } => scene.max_blobs,
            DatasetSpec::Images { .. } => 0,
        }
    }

    pub fn scene(&self, index: usize) -> Result<SyntheticScene> {
        match self {
            DatasetSpec::Synthetic { seed, scene, .. } => {
                make_synthetic_scene(scene, scene_seed(*seed, index))
            }
            DatasetSpec::Images { .. } => Err(Error::invalid("image datasets have no scenes")),
        }
    }

    pub fn load(&self) -> Result<Vec<DatasetImage>> {
        self.validate()?;
        match self {
            DatasetSpec::Synthetic { count, .. } => (0..*count)
                .map(|i| {
                    let s = self.scene(i)?;
                    Ok(DatasetImage {
                        id: format!("scene-{i:04}"),
                        rgb: s.rgb,
                        gt_masks: s.masks,
                    })
                })
                .collect(),
            DatasetSpec::Images { paths } => paths
                .iter()
                .map(|p| {
                    let id = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string());
                    Ok(DatasetImage {
                        id,
                        rgb: read_pnm(p)?,
                        gt_masks: Vec::new(),
                    })
                })
                .collect(),
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn scene_seed(dataset_seed: u64, index: usize) -> u64 {
    SplitMix64::derive(dataset_seed, index as u64).next_u64()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Kernel count `N`.
    pub num_kernels: usize,
    /// Head channels `C`.
    pub channels: usize,
    /// Extractor channels `D`.
    pub seed_channels: usize,
    /// Kernel update iterations `T`.
    pub stages: usize,
    pub proposal: ProposalConfig,
    pub loss: LossWeights,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    pub steps: usize,
    pub seed: u64,
    pub pseudo_labels: PseudoLabelSource,
    pub assignment: AssignStrategy,
    pub dataset: DatasetSpec,
    /// Images per optimizer step; gradients are averaged.
    pub batch_size: usize,
    /// Rescale the step gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
    /// Record wall time in the loss log (breaks bit-identical logs).
    pub log_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_kernels: 100,
            channels: 16,
            seed_channels: FEATURE_DIM,
            stages: 2,
            proposal: ProposalConfig::default(),
            loss: LossWeights::default(),
            lr: 0.5,
            lr_schedule: LrSchedule::default(),
            momentum: 0.9,
            steps: 200,
            seed: 0,
            pseudo_labels: PseudoLabelSource::default(),
            assignment: AssignStrategy::Cosine,
            dataset: DatasetSpec::default(),
            batch_size: 1,
            grad_clip: Some(3.0),
            log_wall_time: false,
        }
    }
}

impl RunConfig {
    /// Desk-scale defaults used by tests and examples: `N = 16`.
    pub fn small() -> Self {
        Self {
            num_kernels: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_kernels == 0 {
            return bad("num_kernels must be positive".into());
        }
        if self.num_kernels < self.dataset.max_instances() {
            return bad(format!(
                "num_kernels {} below the dataset's {} instances per image",
                self.num_kernels,
                self.dataset.max_instances()
            ));
        }
        if self.seed_channels != FEATURE_DIM {
            return bad(format!(
                "seed_channels must equal the extractor's {FEATURE_DIM}"
            ));
        }
        if self.channels < self.seed_channels + 1 {
            return bad(format!(
                "channels must be at least {}",
                self.seed_channels + 1
            ));
        }
        if self.stages == 0 {
            return bad("stages must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} not in [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("grad_clip {c} must be positive"));
            }
        }
        if let PseudoLabelSource::Random { count: 0 } = self.pseudo_labels {
            return bad("random pseudo labels need count >= 1".into());
        }
        self.proposal.validate()?;
        self.loss.validate()?;
        self.dataset.validate()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = read_json(path.as_ref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
