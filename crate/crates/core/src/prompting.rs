//! Prompts pooled from proposal boxes and their injection into kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposal::MaskProposal;
use crate::rng::SplitMix64;
use crate::tensor::{avg_pool_region, cosine_unchecked, Rect, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    /// `[L, C]`; `L` may be zero.
    pub prompts: Tensor,
    /// Index of the proposal each prompt was pooled from.
    pub source: Vec<usize>,
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.prompts.shape()[1]
    }

    pub fn prompt(&self, l: usize) -> &[f64] {
        self.prompts.row(l)
    }

    /// Reorder prompts: entry `k` of the result is prompt `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let c = self.channels();
        let data = order
            .iter()
            .flat_map(|&l| self.prompt(l).to_vec())
            .collect();
        Self {
            prompts: Tensor::new(vec![order.len(), c], data).expect("permuted prompt shape"),
            source: order.iter().map(|&l| self.source[l]).collect(),
        }
    }
}

/// Kernel-to-prompt choice `delta[n]`, plus the cosine similarity matrix it
/// was derived from when one was computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub delta: Vec<usize>,
    /// `[N, L]`.
    pub similarity: Option<Tensor>,
}

/// How prompts are handed to kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignStrategy {
    /// Best cosine match per kernel.
    Cosine,
    /// Prompt list repeated cyclically over the kernels.
    Sequential,
    /// Uniform random prompt per kernel.
    Random,
    /// No prompt injection.
    None,
}

impl AssignStrategy {
    pub fn name(self) -> &'static str {
        match self {
            AssignStrategy::Cosine => "cosine",
            AssignStrategy::Sequential => "sequential",
            AssignStrategy::Random => "random",
            AssignStrategy::None => "none",
        }
    }
}

/// Map a rect between grids of different extent, rounding outward so the
/// scaled rect covers the original region.
pub fn rescale_rect(rect: Rect, from: (usize, usize), to: (usize, usize)) -> Rect {
    let (fh, fw) = from;
    let (th, tw) = to;
    let lo = |v: usize, f: usize, t: usize| ((v * t) as f64 / f as f64).floor() as usize;
    let hi = |v: usize, f: usize, t: usize| {
        (((v + 1) * t) as f64 / f as f64).ceil().max(1.0) as usize - 1
    };
    Rect::new(
        lo(rect.x0, fw, tw).min(tw - 1),
        lo(rect.y0, fh, th).min(th - 1),
        hi(rect.x1, fw, tw).min(tw - 1),
        hi(rect.y1, fh, th).min(th - 1),
    )
}

/// Average-pool the `[C, H, W]` feature map over each proposal's tight box.
pub fn make_prompts(feat: &Tensor, proposals: &[MaskProposal]) -> Result<PromptSet> {
    let [c, h, w] = feat.dims3()?;
    let mut data = Vec::with_capacity(proposals.len() * c);
    for p in proposals {
        let [mh, mw] = p.mask.dims2()?;
        let rect = if (mh, mw) == (h, w) {
            p.rect
        } else {
            rescale_rect(p.rect, (mh, mw), (h, w))
        };
        data.extend(avg_pool_region(feat, rect)?);
    }
    Ok(PromptSet {
        prompts: Tensor::new(vec![proposals.len(), c], data)?,
        source: (0..proposals.len()).collect(),
    })
}

/// `E[n, l] = cos(kernel_n, prompt_l)`, shape `[N, L]`.
pub fn similarity_matrix(kernels: &Tensor, prompts: &Tensor) -> Result<Tensor> {
    let [n, c] = kernels.dims2()?;
    let [l, pc] = prompts.dims2()?;
    if c != pc {
        return Err(Error::shape(format!("{c} prompt channels"), pc));
    }
    if l == 0 {
        return Err(Error::invalid(
            "similarity matrix needs at least one prompt",
        ));
    }
    let mut e = Vec::with_capacity(n * l);
    for k in kernels.rows() {
        e.extend(prompts.rows().map(|p| cosine_unchecked(k, p)));
    }
    Tensor::new(vec![n, l], e)
}

/// Per-row argmax, ties to the lowest prompt index.
pub fn match_cosine(similarity: &Tensor) -> Result<Assignment> {
    let [_, l] = similarity.dims2()?;
    if l == 0 {
        return Err(Error::invalid("cosine matching needs at least one prompt"));
    }
    let delta = similarity
        .rows()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(Assignment {
        delta,
        similarity: Some(similarity.clone()),
    })
}

/// `delta[n] = n mod L`.
pub fn match_sequential(kernels: usize, prompts: usize) -> Result<Vec<usize>> {
    if prompts == 0 {
        return Err(Error::invalid(
            "sequential assignment needs at least one prompt",
        ));
    }
    Ok((0..kernels).map(|n| n % prompts).collect())
}

/// `delta[n] = below(L)` drawn in kernel order from `SplitMix64::new(seed)`.
pub fn match_random(kernels: usize, prompts: usize, rng_seed: u64) -> Result<Vec<usize>> {
    if prompts == 0 {
        return Err(Error::invalid(
            "random assignment needs at least one prompt",
        ));
    }
    let mut rng = SplitMix64::new(rng_seed);
    Ok((0..kernels).map(|_| rng.below(prompts)).collect())
}

/// Choose prompts for every kernel with `strategy`. Returns `None` for
/// [`AssignStrategy::None`] or when there are no prompts.
pub fn assign(
    strategy: AssignStrategy,
    kernels: &Tensor,
    prompts: &PromptSet,
    rng_seed: u64,
) -> Result<Option<Assignment>> {
    if prompts.is_empty() || strategy == AssignStrategy::None {
        return Ok(None);
    }
    let n = kernels.dims2()?[0];
    let assignment = match strategy {
        AssignStrategy::Cosine => match_cosine(&similarity_matrix(kernels, &prompts.prompts)?)?,
        AssignStrategy::Sequential => Assignment {
            delta: match_sequential(n, prompts.len())?,
            similarity: None,
        },
        AssignStrategy::Random => Assignment {
            delta: match_random(n, prompts.len(), rng_seed)?,
            similarity: None,
        },
        AssignStrategy::None => unreachable!(),
    };
    Ok(Some(assignment))
}

fn gather(prompts: &PromptSet, delta: &[usize], n: usize, c: usize) -> Result<Vec<f64>> {
    if delta.len() != n {
        return Err(Error::shape(format!("{n} assignments"), delta.len()));
    }
    let mut out = Vec::with_capacity(n * c);
    for &d in delta {
        if d >= prompts.len() {
            return Err(Error::invalid(format!(
                "assignment {d} out of range for {} prompts",
                prompts.len()
            )));
        }
        out.extend_from_slice(prompts.prompt(d));
    }
    Ok(out)
}

/// `K0'[n] = K0[n] + P[delta[n]]`; identity when there are no prompts.
pub fn inject(kernels: &Tensor, prompts: &PromptSet, delta: &[usize]) -> Result<Tensor> {
    if prompts.is_empty() {
        return Ok(kernels.clone());
    }
    let [n, c] = kernels.dims2()?;
    if prompts.channels() != c {
        return Err(Error::shape(
            format!("{c} prompt channels"),
            prompts.channels(),
        ));
    }
    let add = gather(prompts, delta, n, c)?;
    let data = kernels.data().iter().zip(add).map(|(k, p)| k + p).collect();
    Tensor::new(vec![n, c], data)
}

/// Inverse of [`inject`] for a known assignment.
pub fn eject(injected: &Tensor, prompts: &PromptSet, delta: &[usize]) -> Result<Tensor> {
    if prompts.is_empty() {
        return Ok(injected.clone());
    }
    let [n, c] = injected.dims2()?;
    let sub = gather(prompts, delta, n, c)?;
    let data = injected
        .data()
        .iter()
        .zip(sub)
        .map(|(k, p)| k - p)
        .collect();
    Tensor::new(vec![n, c], data)
}

/// Debug record of one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDump {
    pub num_kernels: usize,
    pub num_prompts: usize,
    pub strategy: AssignStrategy,
    pub delta: Vec<usize>,
    /// `max_l E[n, l]` per kernel.
    pub row_maxima: Vec<f64>,
}

impl AssignmentDump {
    /// Row maxima are taken from `similarity`, which is computed from the
    /// kernels and prompts for strategies that do not use it themselves.
    pub fn new(
        strategy: AssignStrategy,
        kernels: &Tensor,
        prompts: &PromptSet,
        delta: &[usize],
    ) -> Result<Self> {
        let row_maxima = if prompts.is_empty() {
            Vec::new()
        } else {
            similarity_matrix(kernels, &prompts.prompts)?
                .rows()
                .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect()
        };
        Ok(Self {
            num_kernels: kernels.dims2()?[0],
            num_prompts: prompts.len(),
            strategy,
            delta: delta.to_vec(),
            row_maxima,
        })
    }
}
