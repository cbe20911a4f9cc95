//! Rank score transforms of the pooled response: mid-ranks (location),
//! Ansari-Bradley scores (scale) and Savage scores (shape).
//!
//! All three are computed on the pooled sample. Tied observations share the
//! mean of the scores of the positions they jointly occupy.

use serde::Serialize;

use crate::error::{Error, Result};

/// The three score vectors of one response, aligned with its observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSet {
    pub midrank: Vec<f64>,
    pub ansari: Vec<f64>,
    pub savage: Vec<f64>,
    /// Sizes of every tie group with two or more members, ascending.
    pub tie_pattern: Vec<usize>,
}

impl ScoreSet {
    pub fn compute(values: &[f64]) -> Result<Self> {
        let ties = TieBlocks::new(values)?;
        let mut tie_pattern: Vec<usize> = ties.blocks.iter().map(|b| b.len()).filter(|&t| t > 1).collect();
        tie_pattern.sort_unstable();
        Ok(Self {
            midrank: ties.midranks(),
            ansari: ties.ansari(),
            savage: ties.savage(),
            tie_pattern,
        })
    }
}

/// Sorted order of the sample, split into runs of equal values.
struct TieBlocks {
    order: Vec<usize>,
    /// Half-open ranges into `order`.
    blocks: Vec<std::ops::Range<usize>>,
}

impl TieBlocks {
    fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("cannot score an empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("scores need finite values".into()));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..=order.len() {
            if i == order.len() || values[order[i]] != values[order[start]] {
                blocks.push(start..i);
                start = i;
            }
        }
        Ok(Self { order, blocks })
    }

    /// Assigns to each tie block the mean of `positional(l)` over the 1-based
    /// positions l the block occupies.
    fn averaged(&self, positional: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.order.len()];
        for block in &self.blocks {
            let mean = block.clone().map(|p| positional(p + 1)).sum::<f64>() / block.len() as f64;
            for &i in &self.order[block.clone()] {
                out[i] = mean;
            }
        }
        out
    }

    fn midranks(&self) -> Vec<f64> {
        // mean of consecutive integers is exact
        let mut out = vec![0.0; self.order.len()];
        for block in &self.blocks {
            let mid = (block.start + 1 + block.end) as f64 / 2.0;
            for &i in &self.order[block.clone()] {
                out[i] = mid;
            }
        }
        out
    }

    fn ansari(&self) -> Vec<f64> {
        let n1 = self.order.len() as f64 + 1.0;
        self.midranks().into_iter().map(|r| r.min(n1 - r)).collect()
    }

    fn savage(&self) -> Vec<f64> {
        let n = self.order.len();
        // cum[l] = sum_{i=1}^{l} 1/(n - i + 1)
        let mut cum = vec![0.0; n + 1];
        for l in 1..=n {
            cum[l] = cum[l - 1] + 1.0 / (n - l + 1) as f64;
        }
        self.averaged(|l| cum[l] - 1.0)
    }
}

/// Ranks with ties replaced by the mean of the ranks they occupy.
pub fn midranks(values: &[f64]) -> Result<Vec<f64>> {
    Ok(TieBlocks::new(values)?.midranks())
}

/// Ansari-Bradley scores `min(r, N + 1 - r)` on mid-ranks `r`.
pub fn ansari_scores(values: &[f64]) -> Result<Vec<f64>> {
    Ok(TieBlocks::new(values)?.ansari())
}

/// Savage scores `sum_{l <= r} 1/(N - l + 1) - 1`, averaged over tied positions.
pub fn savage_scores(values: &[f64]) -> Result<Vec<f64>> {
    Ok(TieBlocks::new(values)?.savage())
}

/// Sizes of all tie blocks, including singletons.
pub(crate) fn tie_sizes(values: &[f64]) -> Result<Vec<usize>> {
    Ok(TieBlocks::new(values)?.blocks.iter().map(|b| b.len()).collect())
}
