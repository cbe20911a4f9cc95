//! Single-step max-T inference over stacked contrasts: adjusted p-values,
//! simultaneous confidence limits, and the joint double maximum test that
//! ties the score, model and integration layers together.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contrasts::ContrastMatrix;
use crate::data::Dataset;
use crate::dist::t_sf;
use crate::error::{Error, Result};
use crate::marginal::{fit_marginal, stacked_covariance, DfPolicy, EffectKind, StackedInference};
use crate::mvt::{equicoordinate_quantile, mvt_probability_versus, mvt_probability_with, MvtOptions, MvtSpec, Tail};
use crate::scores::ScoreSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Greater,
    Less,
}

impl Alternative {
    pub fn as_str(self) -> &'static str {
        match self {
            Alternative::TwoSided => "two-sided",
            Alternative::Greater => "greater",
            Alternative::Less => "less",
        }
    }

    /// Unadjusted p-value of one statistic.
    pub fn marginal_p(self, t: f64, df: f64) -> f64 {
        match self {
            Alternative::TwoSided => (2.0 * t_sf(t.abs(), df)).min(1.0),
            Alternative::Greater => t_sf(t, df),
            Alternative::Less => t_sf(-t, df),
        }
    }

    fn tail(self) -> Tail {
        match self {
            Alternative::TwoSided => Tail::TwoSided,
            Alternative::Greater => Tail::Upper,
            Alternative::Less => Tail::Lower,
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    pub effect: EffectKind,
    pub hypothesis: String,
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_adjusted: f64,
}

/// Simultaneous confidence interval; `None` marks an unbounded side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub label: String,
    pub estimate: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower.is_none_or(|l| l <= x) && self.upper.is_none_or(|u| x <= u)
    }
}

/// Writes `label,estimate,lower,upper` rows; an unbounded side is an empty
/// field.
pub fn write_intervals_csv<W: std::io::Write>(out: W, intervals: &[Interval]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "estimate", "lower", "upper"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for iv in intervals {
        w.write_record([
            iv.label.clone(),
            format!("{:?}", iv.estimate),
            fmt(iv.lower),
            fmt(iv.upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data for the location-block simultaneous limits of a report.
pub fn export_ci_plotdata<W: std::io::Write>(report: &TestReport, out: W) -> Result<()> {
    match report.sci.as_deref() {
        Some(sci) if !sci.is_empty() => write_intervals_csv(out, sci),
        _ => Err(Error::Validation(
            "report has no simultaneous confidence intervals".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub rows: Vec<TestRow>,
    pub global_p: f64,
    pub alternative: Alternative,
    pub level: f64,
    pub df: f64,
    pub critical_value: f64,
    /// Limits for the location block.
    pub sci: Option<Vec<Interval>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOptions {
    pub alternative: Alternative,
    pub level: f64,
    pub df_policy: DfPolicy,
    pub mvt: MvtOptions,
    pub seed: u64,
    /// Score models to stack, in block order.
    pub effects: Vec<EffectKind>,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self {
            alternative: Alternative::TwoSided,
            level: 0.95,
            df_policy: DfPolicy::SizeMinusFour,
            mvt: MvtOptions::default(),
            seed: 42,
            effects: EffectKind::ALL.to_vec(),
        }
    }
}

/// Scores the response, fits one cell-means model per requested effect and
/// stacks the contrast estimates.
pub fn stack_scores(
    ds: &Dataset,
    cm: &ContrastMatrix,
    effects: &[EffectKind],
    df_policy: DfPolicy,
) -> Result<StackedInference> {
    let scores = ScoreSet::compute(ds.values())?;
    let fits = effects
        .iter()
        .map(|&kind| {
            let scored = match kind {
                EffectKind::Location => &scores.midrank,
                EffectKind::Scale => &scores.ansari,
                EffectKind::Shape => &scores.savage,
            };
            fit_marginal(ds, scored, kind)
        })
        .collect::<Result<Vec<_>>>()?;
    stacked_covariance(&fits, cm, df_policy)
}

/// The joint test with default integration settings and the reference
/// degrees-of-freedom rule.
pub fn joint_double_max_test(
    ds: &Dataset,
    cm: &ContrastMatrix,
    alternative: Alternative,
    level: f64,
    seed: u64,
) -> Result<TestReport> {
    joint_double_max_test_with(
        ds,
        cm,
        &JointOptions {
            alternative,
            level,
            seed,
            ..JointOptions::default()
        },
    )
}

pub fn joint_double_max_test_with(ds: &Dataset, cm: &ContrastMatrix, opts: &JointOptions) -> Result<TestReport> {
    if !(opts.level > 0.5 && opts.level < 1.0) {
        return Err(Error::Validation(format!(
            "level must lie in (0.5, 1), got {}",
            opts.level
        )));
    }
    let si = stack_scores(ds, cm, &opts.effects, opts.df_policy)?;
    report_from_stacked(&si, opts)
}

/// Adjusted p-values, critical value and location-block limits for an
/// already stacked inference.
pub fn report_from_stacked(si: &StackedInference, opts: &JointOptions) -> Result<TestReport> {
    let p = adjusted_p_values(si, opts.alternative, &opts.mvt, opts.seed)?;
    let critical_value = critical_value(si, opts.level, opts.alternative, &opts.mvt, opts.seed)?;
    let stats = si.statistics();
    let se = si.std_errors();
    let rows: Vec<TestRow> = (0..si.len())
        .map(|i| TestRow {
            effect: si.labels[i].0,
            hypothesis: si.labels[i].1.clone(),
            estimate: si.estimates[i],
            std_error: se[i],
            statistic: stats[i],
            p_adjusted: p[i],
        })
        .collect();
    let global_p = p.iter().copied().fold(1.0, f64::min);
    let sci = (!si.block(EffectKind::Location).is_empty())
        .then(|| intervals(si, EffectKind::Location, critical_value, opts.alternative));
    Ok(TestReport {
        rows,
        global_p,
        alternative: opts.alternative,
        level: opts.level,
        df: si.df,
        critical_value,
        sci,
    })
}

/// Single-step max-T adjusted p-values.
///
/// Two-sided: `1 - P(max_j |T_j| <= |t_i|)`; one-sided versions use the upper
/// (greater) or lower (less) orthant. Results are kept inside the bounds
/// every max-T p-value satisfies: at least the unadjusted p and at most its
/// Bonferroni multiple.
pub fn adjusted_p_values(
    si: &StackedInference,
    alternative: Alternative,
    opts: &MvtOptions,
    seed: u64,
) -> Result<Vec<f64>> {
    let stats = si.statistics();
    let m = stats.len();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut out = Vec::with_capacity(m);
    for &t in &stats {
        let threshold = match alternative {
            Alternative::TwoSided => t.abs(),
            Alternative::Greater | Alternative::Less => t,
        };
        let p = match cache.get(&threshold.to_bits()) {
            Some(&p) => p,
            None => {
                let p = max_t_p(&si.correlation, si.df, threshold, alternative, opts, seed)?;
                cache.insert(threshold.to_bits(), p);
                p
            }
        };
        let raw = alternative.marginal_p(t, si.df);
        out.push(p.clamp(raw, (raw * m as f64).min(1.0)));
    }
    Ok(out)
}

/// `1 - P(all coordinates inside the acceptance region at threshold)`.
pub fn max_t_p(
    correlation: &DMatrix<f64>,
    df: f64,
    threshold: f64,
    alternative: Alternative,
    opts: &MvtOptions,
    seed: u64,
) -> Result<f64> {
    let m = correlation.nrows();
    let (lo, hi) = acceptance_region(threshold, alternative);
    if lo >= hi {
        // zero-width acceptance region
        return Ok(1.0);
    }
    if threshold.is_nan() {
        return Err(Error::Numerical("statistic is undefined".into()));
    }
    let spec = MvtSpec::new(correlation.clone(), df, vec![lo; m], vec![hi; m])?;
    let r = mvt_probability_with(&spec, opts, seed)?;
    Ok((1.0 - r.value).clamp(0.0, 1.0))
}

/// Equicoordinate critical value over the full stacked correlation.
pub fn critical_value(
    si: &StackedInference,
    level: f64,
    alternative: Alternative,
    opts: &MvtOptions,
    seed: u64,
) -> Result<f64> {
    equicoordinate_quantile(&si.correlation, si.df, level, alternative.tail(), opts, seed)
}

fn intervals(si: &StackedInference, block: EffectKind, c: f64, alternative: Alternative) -> Vec<Interval> {
    let se = si.std_errors();
    si.block(block)
        .into_iter()
        .map(|i| {
            let est = si.estimates[i];
            let half = c * se[i];
            let (lower, upper) = match alternative {
                Alternative::TwoSided => (Some(est - half), Some(est + half)),
                Alternative::Greater => (Some(est - half), None),
                Alternative::Less => (None, Some(est + half)),
            };
            Interval {
                label: si.labels[i].1.clone(),
                estimate: est,
                lower,
                upper,
            }
        })
        .collect()
}

/// Simultaneous limits for one effect block, jointly valid across all blocks
/// of `si`.
pub fn simultaneous_ci(
    si: &StackedInference,
    block: EffectKind,
    level: f64,
    alternative: Alternative,
    opts: &MvtOptions,
    seed: u64,
) -> Result<Vec<Interval>> {
    if si.block(block).is_empty() {
        return Err(Error::Validation(format!("no {block} block in the stacked inference")));
    }
    let c = critical_value(si, level, alternative, opts, seed)?;
    Ok(intervals(si, block, c, alternative))
}

/// Global p-value of the joint test alone: one integration at the most
/// extreme statistic. Equals the minimum of [`adjusted_p_values`].
pub fn joint_global_p(
    ds: &Dataset,
    cm: &ContrastMatrix,
    alternative: Alternative,
    df_policy: DfPolicy,
    opts: &MvtOptions,
    seed: u64,
) -> Result<f64> {
    let si = stack_scores(ds, cm, &EffectKind::ALL, df_policy)?;
    global_p(&si, alternative, opts, seed)
}

fn extreme_statistic(stats: &[f64], alternative: Alternative) -> f64 {
    match alternative {
        Alternative::TwoSided => stats.iter().fold(0.0_f64, |a, t| a.max(t.abs())),
        Alternative::Greater => stats.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Alternative::Less => stats.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

fn acceptance_region(threshold: f64, alternative: Alternative) -> (f64, f64) {
    match alternative {
        Alternative::TwoSided => (-threshold, threshold),
        Alternative::Greater => (f64::NEG_INFINITY, threshold),
        Alternative::Less => (threshold, f64::INFINITY),
    }
}

pub fn global_p(si: &StackedInference, alternative: Alternative, opts: &MvtOptions, seed: u64) -> Result<f64> {
    let stats = si.statistics();
    let threshold = extreme_statistic(&stats, alternative);
    let p = max_t_p(&si.correlation, si.df, threshold, alternative, opts, seed)?;
    let raw = alternative.marginal_p(threshold, si.df);
    Ok(p.clamp(raw, (raw * stats.len() as f64).min(1.0)))
}

/// Whether the global p-value is at most `alpha`. Integrates only until the
/// answer is clear, which is far cheaper than [`global_p`] away from the
/// boundary.
pub fn global_rejects(
    si: &StackedInference,
    alternative: Alternative,
    alpha: f64,
    opts: &MvtOptions,
    seed: u64,
) -> Result<bool> {
    let stats = si.statistics();
    let threshold = extreme_statistic(&stats, alternative);
    let raw = alternative.marginal_p(threshold, si.df);
    let m = stats.len() as f64;
    if raw > alpha {
        return Ok(false);
    }
    if raw * m <= alpha {
        return Ok(true);
    }
    let (lo, hi) = acceptance_region(threshold, alternative);
    if lo >= hi {
        return Ok(false);
    }
    let spec = MvtSpec::new(
        si.correlation.clone(),
        si.df,
        vec![lo; stats.len()],
        vec![hi; stats.len()],
    )?;
    let r = mvt_probability_versus(&spec, 1.0 - alpha, opts, seed)?;
    Ok(1.0 - r.value <= alpha)
}
