//! Minimum-cost rectangular assignment (Hungarian method with potentials,
//! shortest augmenting paths, O(r^2 c) for r <= c).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(kernel, proposal)` pairs, sorted by proposal index.
    pub pairs: Vec<(usize, usize)>,
    /// Kernels without a proposal, ascending.
    pub unmatched: Vec<usize>,
    /// Sum of the matched costs, accumulated in ascending kernel order.
    pub total_cost: f64,
}

impl MatchResult {
    pub fn empty(num_kernels: usize) -> Self {
        Self {
            pairs: Vec::new(),
            unmatched: (0..num_kernels).collect(),
            total_cost: 0.0,
        }
    }

    pub fn proposal_of(&self, kernel: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == kernel).map(|p| p.1)
    }
}

/// Solve for rows <= cols; returns the column assigned to each row.
fn solve(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    debug_assert!(rows <= cols);
    let a = |i: usize, j: usize| cost[(i - 1) * cols + (j - 1)];
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = a(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assigned = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assigned[owner[j] - 1] = j - 1;
        }
    }
    assigned
}

/// Optimal injective matching of `min(N, L)` pairs for an `[N, L]` cost
/// matrix (kernels by proposals).
pub fn match_hungarian(cost: &Tensor) -> Result<MatchResult> {
    let [n, l] = cost.dims2()?;
    if n == 0 || l == 0 {
        return Err(Error::invalid(
            "matching needs at least one kernel and one proposal",
        ));
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("matching cost matrix".into()));
    }
    let mut pairs: Vec<(usize, usize)> = if n <= l {
        solve(cost.data(), n, l).into_iter().enumerate().collect()
    } else {
        let mut t = vec![0.0; n * l];
        for i in 0..n {
            for j in 0..l {
                t[j * n + i] = cost.data()[i * l + j];
            }
        }
        solve(&t, l, n)
            .into_iter()
            .enumerate()
            .map(|(prop, kernel)| (kernel, prop))
            .collect()
    };
    pairs.sort_by_key(|&(k, _)| k);
    let total_cost = pairs.iter().map(|&(k, p)| cost.data()[k * l + p]).sum();
    pairs.sort_by_key(|&(_, p)| p);

    let mut is_matched = vec![false; n];
    for &(k, _) in &pairs {
        is_matched[k] = true;
    }
    let unmatched = (0..n).filter(|&k| !is_matched[k]).collect();
    let result = MatchResult {
        pairs,
        unmatched,
        total_cost,
    };
    debug_assert!(is_injective(&result, n, l));
    Ok(result)
}

fn is_injective(m: &MatchResult, n: usize, l: usize) -> bool {
    let mut kernels = vec![false; n];
    let mut props = vec![false; l];
    for &(k, p) in &m.pairs {
        if kernels[k] || props[p] {
            return false;
        }
        kernels[k] = true;
        props[p] = true;
    }
    m.pairs.len() == n.min(l)
}
