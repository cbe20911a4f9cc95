//! Contrast matrices acting on group effects (in dataset group order).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContrastKind {
    /// Each group against the average of all groups.
    GrandMean,
    /// Each treatment against the first (control) group.
    Dunnett,
}

/// Weighting of the grand mean in [`ContrastKind::GrandMean`] rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrandMeanWeights {
    /// 1/k for every group.
    #[default]
    Equal,
    /// n_j / N.
    SampleSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    rows: DMatrix<f64>,
    row_labels: Vec<String>,
    kind: ContrastKind,
}

impl ContrastMatrix {
    pub fn kind(&self) -> ContrastKind {
        self.kind
    }

    /// m x k coefficient matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn n_contrasts(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.rows.row(i).iter().copied().collect()
    }

    /// Applies the contrasts to a vector of group effects.
    pub fn apply(&self, effects: &[f64]) -> Vec<f64> {
        assert_eq!(effects.len(), self.n_groups(), "one effect per group");
        (0..self.n_contrasts())
            .map(|i| self.rows.row(i).iter().zip(effects).map(|(c, e)| c * e).sum())
            .collect()
    }

    /// Replaces the positional labels with the given group labels.
    pub fn with_group_labels(mut self, groups: &[String]) -> Result<Self> {
        if groups.len() != self.n_groups() {
            return Err(Error::Validation(format!(
                "{} group labels for a {}-group contrast matrix",
                groups.len(),
                self.n_groups()
            )));
        }
        self.row_labels = labels_for(self.kind, groups);
        Ok(self)
    }

    /// Builds the matrix of the given kind for a dataset's groups, labelled
    /// with the dataset's group names.
    pub fn for_groups(kind: ContrastKind, groups: &[String]) -> Result<Self> {
        let cm = match kind {
            ContrastKind::GrandMean => grand_mean_contrasts(groups.len())?,
            ContrastKind::Dunnett => dunnett_contrasts(groups.len())?,
        };
        cm.with_group_labels(groups)
    }
}

fn labels_for(kind: ContrastKind, groups: &[String]) -> Vec<String> {
    match kind {
        ContrastKind::GrandMean => groups.to_vec(),
        ContrastKind::Dunnett => groups[1..].iter().map(|g| format!("{g} - {}", groups[0])).collect(),
    }
}

fn positional_labels(k: usize) -> Vec<String> {
    (0..k).map(|j| j.to_string()).collect()
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Validation(format!("contrasts need k >= 2 groups, got {k}")));
    }
    Ok(())
}

/// Row j is `e_j - (1/k) 1`.
pub fn grand_mean_contrasts(k: usize) -> Result<ContrastMatrix> {
    check_k(k)?;
    grand_mean_with_weights(&vec![1.0 / k as f64; k])
}

/// Grand-mean contrasts where the grand mean weights groups by `sizes`
/// (equal sizes give the same matrix as [`grand_mean_contrasts`]).
pub fn grand_mean_contrasts_weighted(sizes: &[usize]) -> Result<ContrastMatrix> {
    check_k(sizes.len())?;
    let total: usize = sizes.iter().sum();
    if sizes.contains(&0) {
        return Err(Error::Validation("group sizes must be positive".into()));
    }
    let w: Vec<f64> = sizes.iter().map(|&n| n as f64 / total as f64).collect();
    grand_mean_with_weights(&w)
}

fn grand_mean_with_weights(w: &[f64]) -> Result<ContrastMatrix> {
    let k = w.len();
    let rows = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 - w[j] } else { -w[j] });
    Ok(ContrastMatrix {
        rows,
        row_labels: labels_for(ContrastKind::GrandMean, &positional_labels(k)),
        kind: ContrastKind::GrandMean,
    })
}

/// Row j is `e_{j+1} - e_1`; the first group is the control.
pub fn dunnett_contrasts(k: usize) -> Result<ContrastMatrix> {
    check_k(k)?;
    let rows = DMatrix::from_fn(k - 1, k, |i, j| {
        if j == 0 {
            -1.0
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    });
    Ok(ContrastMatrix {
        rows,
        row_labels: labels_for(ContrastKind::Dunnett, &positional_labels(k)),
        kind: ContrastKind::Dunnett,
    })
}
