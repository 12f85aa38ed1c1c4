//! Per-image proposal manifest.
//!
//! ```json
//! {
//!   "image_id": "scene-0003",
//!   "height": 40, "width": 40,
//!   "config": { "grid_h": 10, ... },
//!   "proposals": [
//!     { "seed_index": [2, 5], "score": 0.93, "box": [x0, y0, x1, y1],
//!       "mask_rle": [run0, run1, ...] }
//!   ]
//! }
//! ```
//!
//! `mask_rle` is an uncompressed binary run-length encoding of the mask in
//! row-major order: alternating run lengths of 0s and 1s, always starting
//! with a (possibly empty) run of 0s. Boxes are inclusive pixel coordinates.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MaskProposal, ProposalConfig};
use crate::error::{Error, Result};
use crate::eval::mask_to_box;
use crate::tensor::{Rect, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed_index: Option<[usize; 2]>,
    pub score: f64,
    #[serde(rename = "box")]
    pub rect: [usize; 4],
    pub mask_rle: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalManifest {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub config: ProposalConfig,
    pub proposals: Vec<ManifestEntry>,
}

pub fn rle_encode(mask: &Tensor) -> Vec<usize> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0usize;
    for &v in mask.data() {
        let on = v != 0.0;
        if on != current {
            counts.push(run);
            run = 0;
            current = on;
        }
        run += 1;
    }
    counts.push(run);
    counts
}

pub fn rle_decode(counts: &[usize], height: usize, width: usize) -> Result<Tensor> {
    let total: usize = counts.iter().sum();
    if total != height * width {
        return Err(Error::Format(format!(
            "run lengths sum to {total}, expected {}",
            height * width
        )));
    }
    let mut data = Vec::with_capacity(total);
    for (k, &run) in counts.iter().enumerate() {
        let value = if k % 2 == 0 { 0.0 } else { 1.0 };
        data.extend(std::iter::repeat_n(value, run));
    }
    Tensor::new(vec![height, width], data)
}

impl ProposalManifest {
    pub fn from_proposals(
        image_id: impl Into<String>,
        height: usize,
        width: usize,
        config: &ProposalConfig,
        proposals: &[MaskProposal],
    ) -> Self {
        Self {
            image_id: image_id.into(),
            height,
            width,
            config: config.clone(),
            proposals: proposals
                .iter()
                .map(|p| ManifestEntry {
                    seed_index: p.seed_index.map(|(i, j)| [i, j]),
                    score: p.score,
                    rect: p.rect.as_array(),
                    mask_rle: rle_encode(&p.mask),
                })
                .collect(),
        }
    }

    /// Decode every entry, checking that each stored box bounds its mask.
    pub fn to_proposals(&self) -> Result<Vec<MaskProposal>> {
        self.proposals
            .iter()
            .map(|e| {
                let mask = rle_decode(&e.mask_rle, self.height, self.width)?;
                let [x0, y0, x1, y1] = e.rect;
                let rect = Rect::new(x0, y0, x1, y1);
                if mask_to_box(&mask) != Some(rect) {
                    return Err(Error::Format(format!(
                        "box {:?} does not bound its mask in {}",
                        e.rect, self.image_id
                    )));
                }
                Ok(MaskProposal {
                    mask,
                    score: e.score,
                    rect,
                    seed_index: e.seed_index.map(|[i, j]| (i, j)),
                })
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposal::random_proposals;
    use proptest::prelude::*;

    #[test]
    fn rle_starts_with_zero_run() {
        let m = Tensor::new(vec![2, 3], vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(rle_encode(&m), vec![0, 2, 2, 2]);
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(rle_encode(&z), vec![4]);
        assert!(rle_decode(&[3], 2, 2).is_err());
    }

    #[test]
    fn manifest_round_trip_through_json() {
        let props = random_proposals(12, 9, 4, 5, 0.05).unwrap();
        let cfg = ProposalConfig::default();
        let man = ProposalManifest::from_proposals("img", 12, 9, &cfg, &props);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        man.save(&path).unwrap();
        let back = ProposalManifest::load(&path).unwrap();
        assert_eq!(back, man);
        assert_eq!(back.to_proposals().unwrap(), props);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"box\""));
    }

    #[test]
    fn inconsistent_box_is_rejected() {
        let props = random_proposals(8, 8, 1, 1, 0.0).unwrap();
        let mut man =
            ProposalManifest::from_proposals("x", 8, 8, &ProposalConfig::default(), &props);
        man.proposals[0].rect = [0, 0, 7, 7];
        if props[0].rect != Rect::new(0, 0, 7, 7) {
            assert!(man.to_proposals().is_err());
        }
    }

    proptest! {
        #[test]
        fn rle_round_trip(bits in prop::collection::vec(any::<bool>(), 1..80), w in 1usize..9) {
            let h = bits.len().div_ceil(w);
            let data: Vec<f64> = (0..h * w).map(|i| bits.get(i).copied().unwrap_or(false) as u8 as f64).collect();
            let m = Tensor::new(vec![h, w], data).unwrap();
            let counts = rle_encode(&m);
            prop_assert_eq!(rle_decode(&counts, h, w).unwrap(), m);
        }
    }
}
