//! Per-score cell-means models and their stacked sandwich covariance.
//!
//! Each score vector gets a least-squares fit on group indicators. The joint
//! covariance of all contrast estimates across models comes from stacking the
//! per-observation estimating functions `x_i e_i` of every model, so the
//! cross-model blocks reflect that all models share the same observations.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contrasts::ContrastMatrix;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    /// Mid-ranks.
    Location,
    /// Ansari-Bradley scores.
    Scale,
    /// Savage scores.
    Shape,
}

impl EffectKind {
    pub const ALL: [EffectKind; 3] = [EffectKind::Location, EffectKind::Scale, EffectKind::Shape];

    pub fn as_str(self) -> &'static str {
        match self {
            EffectKind::Location => "location",
            EffectKind::Scale => "scale",
            EffectKind::Shape => "shape",
        }
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Degrees of freedom attached to the joint t distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfPolicy {
    /// sum_j (n_j - 4).
    #[default]
    SizeMinusFour,
    /// N - k.
    Residual,
    /// Infinite: multivariate normal.
    Asymptotic,
}

impl DfPolicy {
    pub fn degrees_of_freedom(self, sizes: &[usize]) -> Result<f64> {
        let df = match self {
            DfPolicy::SizeMinusFour => sizes.iter().map(|&n| n as f64 - 4.0).sum(),
            DfPolicy::Residual => (sizes.iter().sum::<usize>() - sizes.len()) as f64,
            DfPolicy::Asymptotic => f64::INFINITY,
        };
        if df <= 0.0 {
            return Err(Error::Validation(format!(
                "{self:?} gives non-positive degrees of freedom ({df}) for group sizes {sizes:?}"
            )));
        }
        Ok(df)
    }
}

/// Least-squares fit of one score vector on group indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    pub score_kind: EffectKind,
    /// Group means of the scored response.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual variance with divisor N - k.
    pub sigma2: f64,
    groups: Vec<usize>,
    sizes: Vec<usize>,
}

impl MarginalFit {
    /// N x k indicator matrix.
    pub fn design(&self) -> DMatrix<f64> {
        let k = self.coefficients.len();
        DMatrix::from_fn(self.groups.len(), k, |i, j| f64::from(u8::from(self.groups[i] == j)))
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_obs(&self) -> usize {
        self.groups.len()
    }
}

pub fn fit_marginal(ds: &Dataset, scored: &[f64], kind: EffectKind) -> Result<MarginalFit> {
    if scored.len() != ds.len() {
        return Err(Error::Validation(format!(
            "{} scores for {} observations",
            scored.len(),
            ds.len()
        )));
    }
    let k = ds.n_groups();
    let sizes = ds.group_sizes();
    if let Some(g) = sizes.iter().position(|&n| n < 2) {
        return Err(Error::Validation(format!("group {g} has fewer than 2 observations")));
    }
    let groups = ds.group_indices().to_vec();
    let mut sums = vec![0.0; k];
    for (&g, &y) in groups.iter().zip(scored) {
        sums[g] += y;
    }
    let coefficients: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect();
    let residuals: Vec<f64> = groups.iter().zip(scored).map(|(&g, &y)| y - coefficients[g]).collect();
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / (ds.len() - k) as f64;
    Ok(MarginalFit {
        score_kind: kind,
        coefficients,
        residuals,
        sigma2,
        groups,
        sizes,
    })
}

/// Stacked contrast estimates of several marginal models with their joint
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedInference {
    pub estimates: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub correlation: DMatrix<f64>,
    pub df: f64,
    /// One (effect, hypothesis) pair per estimate, model blocks in fit order.
    pub labels: Vec<(EffectKind, String)>,
}

impl StackedInference {
    pub fn std_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// estimate / std_error; a zero estimate with zero standard error gives 0.
    pub fn statistics(&self) -> Vec<f64> {
        self.estimates
            .iter()
            .zip(self.std_errors())
            .map(|(&e, s)| if e == 0.0 { 0.0 } else { e / s })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Indices of the rows belonging to one effect block.
    pub fn block(&self, kind: EffectKind) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, (k, _))| *k == kind)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Covariance normalized to unit diagonal. Coordinates with zero variance get
/// zero correlation with everything else.
pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sd: Vec<f64> = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    })
}

/// Sandwich covariance of the stacked contrast estimates, HC0 meat without
/// small-sample scaling.
pub fn stacked_covariance(fits: &[MarginalFit], cm: &ContrastMatrix, df_rule: DfPolicy) -> Result<StackedInference> {
    let first = fits
        .first()
        .ok_or_else(|| Error::Validation("need at least one marginal fit".into()))?;
    let n = first.n_obs();
    let k = first.coefficients.len();
    for f in fits {
        if f.n_obs() != n || f.groups != first.groups {
            return Err(Error::Validation(
                "marginal fits do not share the same observations".into(),
            ));
        }
    }
    if cm.n_groups() != k {
        return Err(Error::Validation(format!(
            "contrast matrix has {} columns for {k} groups",
            cm.n_groups()
        )));
    }
    if first.sizes.contains(&0) {
        return Err(Error::Numerical("singular information matrix: empty group".into()));
    }

    let s = fits.len();
    let p = s * k;
    let mut psi = DMatrix::<f64>::zeros(n, p);
    for (t, f) in fits.iter().enumerate() {
        for i in 0..n {
            psi[(i, t * k + f.groups[i])] = f.residuals[i];
        }
    }
    let meat = psi.transpose() * &psi;

    let xtx = first.design().transpose() * first.design();
    let xtx_inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular information matrix".into()))?;
    let mut bread = DMatrix::<f64>::zeros(p, p);
    let mut c_full = DMatrix::<f64>::zeros(s * cm.n_contrasts(), p);
    let m = cm.n_contrasts();
    for t in 0..s {
        bread.view_mut((t * k, t * k), (k, k)).copy_from(&xtx_inv);
        c_full.view_mut((t * m, t * k), (m, k)).copy_from(cm.matrix());
    }
    let v = &bread * meat * &bread;
    let mut covariance = &c_full * v * c_full.transpose();
    // exact symmetry
    covariance = (&covariance + covariance.transpose()) * 0.5;

    let beta = DVector::from_iterator(p, fits.iter().flat_map(|f| f.coefficients.iter().copied()));
    let estimates: Vec<f64> = (&c_full * beta).iter().copied().collect();
    let labels = fits
        .iter()
        .flat_map(|f| cm.labels().iter().map(move |l| (f.score_kind, l.clone())))
        .collect();

    Ok(StackedInference {
        estimates,
        correlation: correlation_from_covariance(&covariance),
        covariance,
        df: df_rule.degrees_of_freedom(&first.sizes)?,
        labels,
    })
}
