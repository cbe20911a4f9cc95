//! Reference competitors: the Kruskal-Wallis test and the global-rank
//! relative-effects multiple contrast test.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::contrasts::ContrastMatrix;
use crate::data::Dataset;
use crate::dist::chi2_sf;
use crate::error::{Error, Result};
use crate::marginal::{correlation_from_covariance, EffectKind, StackedInference};
use crate::maxt::{adjusted_p_values, Alternative};
use crate::mvt::MvtOptions;
use crate::scores::{midranks, tie_sizes};

/// Upper bound on group assignments visited by exhaustive enumeration.
pub const MAX_EXHAUSTIVE: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationPlan {
    /// Random relabelings; replicate `i` draws from stream `i` of the seed.
    MonteCarlo { n_permutations: usize, seed: u64 },
    /// Every distinct assignment of observations to groups.
    Exhaustive,
}

impl PermutationPlan {
    pub fn monte_carlo(n_permutations: usize, seed: u64) -> Self {
        PermutationPlan::MonteCarlo { n_permutations, seed }
    }
}

impl Default for PermutationPlan {
    fn default() -> Self {
        Self::monte_carlo(10_000, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KwResult {
    pub statistic: f64,
    pub df: usize,
    pub p_asymptotic: f64,
    pub p_permutation: Option<f64>,
    pub permutations_used: u64,
}

/// Tie-corrected Kruskal-Wallis statistic from mid-ranks.
struct KwKernel {
    n: f64,
    sizes: Vec<usize>,
    /// 12 / (N (N + 1)) / tie correction
    factor: f64,
}

impl KwKernel {
    fn new(ds: &Dataset) -> Result<Self> {
        let n = ds.len() as f64;
        let ties: f64 = tie_sizes(ds.values())?
            .into_iter()
            .map(|t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum();
        let correction = 1.0 - ties / (n * n * n - n);
        if correction <= 1e-12 {
            return Err(Error::Degenerate(
                "all observations are tied; the Kruskal-Wallis statistic is undefined".into(),
            ));
        }
        Ok(Self {
            n,
            sizes: ds.group_sizes(),
            factor: 12.0 / (n * (n + 1.0)) / correction,
        })
    }

    fn statistic(&self, rank_sums: &[f64]) -> f64 {
        let centre = (self.n + 1.0) / 2.0;
        let ss: f64 = rank_sums
            .iter()
            .zip(&self.sizes)
            .map(|(&r, &nj)| {
                let nj = nj as f64;
                nj * (r / nj - centre).powi(2)
            })
            .sum();
        self.factor * ss
    }

    fn statistic_for(&self, ranks: &[f64], groups: &[usize]) -> f64 {
        let mut sums = vec![0.0; self.sizes.len()];
        for (&r, &g) in ranks.iter().zip(groups) {
            sums[g] += r;
        }
        self.statistic(&sums)
    }
}

/// `h >= observed` up to rounding in the last few bits.
fn at_least(h: f64, observed: f64) -> bool {
    h >= observed - 1e-10 * observed.abs().max(1.0)
}

pub fn kw_statistic(ds: &Dataset) -> Result<f64> {
    let kernel = KwKernel::new(ds)?;
    let ranks = midranks(ds.values())?;
    Ok(kernel.statistic_for(&ranks, ds.group_indices()))
}

pub fn kw_test(ds: &Dataset, plan: Option<PermutationPlan>) -> Result<KwResult> {
    let kernel = KwKernel::new(ds)?;
    let ranks = midranks(ds.values())?;
    let groups = ds.group_indices();
    let statistic = kernel.statistic_for(&ranks, groups);
    let df = ds.n_groups() - 1;
    let p_asymptotic = chi2_sf(statistic, df as f64);

    let (p_permutation, permutations_used) = match plan {
        None => (None, 0),
        Some(PermutationPlan::MonteCarlo { n_permutations, seed }) => {
            if n_permutations == 0 {
                return Err(Error::Validation("need at least one permutation".into()));
            }
            let hits: u64 = (0..n_permutations as u64)
                .into_par_iter()
                .map_init(
                    || groups.to_vec(),
                    |labels, i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(i);
                        labels.copy_from_slice(groups);
                        labels.shuffle(&mut rng);
                        u64::from(at_least(kernel.statistic_for(&ranks, labels), statistic))
                    },
                )
                .sum();
            (
                Some((1 + hits) as f64 / (1 + n_permutations) as f64),
                n_permutations as u64,
            )
        }
        Some(PermutationPlan::Exhaustive) => {
            let (hits, total) = exhaustive_counts(&kernel, &ranks, statistic)?;
            (Some(hits as f64 / total as f64), total)
        }
    };

    Ok(KwResult {
        statistic,
        df,
        p_asymptotic,
        p_permutation,
        permutations_used,
    })
}

/// Number of distinct assignments of N observations to groups of the given
/// sizes: the multinomial coefficient.
pub fn assignment_count(sizes: &[usize]) -> Option<u64> {
    let mut total: u64 = 1;
    let mut placed: u64 = 0;
    for &n in sizes {
        for i in 1..=n as u64 {
            placed += 1;
            // total * placed / i stays integral at every step
            total = total.checked_mul(placed)? / i;
        }
    }
    Some(total)
}

/// (assignments with statistic >= observed, all assignments).
fn exhaustive_counts(kernel: &KwKernel, ranks: &[f64], observed: f64) -> Result<(u64, u64)> {
    let total = assignment_count(&kernel.sizes).unwrap_or(u64::MAX);
    if total > MAX_EXHAUSTIVE {
        return Err(Error::Validation(format!(
            "{total} assignments exceed the exhaustive limit of {MAX_EXHAUSTIVE}"
        )));
    }

    struct Walk<'a> {
        kernel: &'a KwKernel,
        ranks: &'a [f64],
        observed: f64,
        remaining: Vec<usize>,
        sums: Vec<f64>,
        hits: u64,
        visited: u64,
    }

    impl Walk<'_> {
        fn go(&mut self, i: usize) {
            if i == self.ranks.len() {
                self.visited += 1;
                if at_least(self.kernel.statistic(&self.sums), self.observed) {
                    self.hits += 1;
                }
                return;
            }
            for g in 0..self.remaining.len() {
                if self.remaining[g] == 0 {
                    continue;
                }
                self.remaining[g] -= 1;
                self.sums[g] += self.ranks[i];
                self.go(i + 1);
                self.sums[g] -= self.ranks[i];
                self.remaining[g] += 1;
            }
        }
    }

    let mut walk = Walk {
        kernel,
        ranks,
        observed,
        remaining: kernel.sizes.clone(),
        sums: vec![0.0; kernel.sizes.len()],
        hits: 0,
        visited: 0,
    };
    walk.go(0);
    debug_assert_eq!(walk.visited, total);
    Ok((walk.hits, walk.visited))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelEffectResult {
    pub effects: Vec<f64>,
    pub contrast_labels: Vec<String>,
    pub contrast_estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub statistics: Vec<f64>,
    pub p_adjusted: Vec<f64>,
    pub global_p: f64,
    pub df: f64,
    pub alternative: Alternative,
}

/// Global-rank relative effects `p_j = (mean rank_j - 1/2) / N` with a
/// multiple contrast test on them.
///
/// The covariance of the effect estimates is the empirical covariance of
/// their per-observation linearizations: with `w_l = n_l / N` and normalized
/// group distribution functions `F_l`, an observation `x` from group `g`
/// contributes `sum_{l != g} w_l F_l(x)` to effect `g` and `-w_g F_j(x)` to
/// every other effect `j`. Degrees of freedom are the smallest per-contrast
/// Satterthwaite value.
pub fn relative_effects_mctp(
    ds: &Dataset,
    cm: &ContrastMatrix,
    alternative: Alternative,
    opts: &MvtOptions,
    seed: u64,
) -> Result<RelEffectResult> {
    let (effects, si) = relative_effects_stacked(ds, cm)?;
    let p_adjusted = adjusted_p_values(&si, alternative, opts, seed)?;
    let global_p = p_adjusted.iter().copied().fold(1.0, f64::min);
    Ok(RelEffectResult {
        effects,
        contrast_labels: cm.labels().to_vec(),
        std_errors: si.std_errors(),
        statistics: si.statistics(),
        contrast_estimates: si.estimates,
        p_adjusted,
        global_p,
        df: si.df,
        alternative,
    })
}

/// Relative effects and the contrast inference on them, before any
/// multiplicity adjustment.
pub fn relative_effects_stacked(ds: &Dataset, cm: &ContrastMatrix) -> Result<(Vec<f64>, StackedInference)> {
    let k = ds.n_groups();
    if cm.n_groups() != k {
        return Err(Error::Validation(format!(
            "contrast matrix has {} columns for {k} groups",
            cm.n_groups()
        )));
    }
    let n = ds.len() as f64;
    let sizes = ds.group_sizes();
    let weights: Vec<f64> = sizes.iter().map(|&s| s as f64 / n).collect();
    let samples: Vec<Vec<f64>> = (0..k).map(|g| ds.group_values(g)).collect();

    let ranks = midranks(ds.values())?;
    let mut rank_sums = vec![0.0; k];
    for (&r, &g) in ranks.iter().zip(ds.group_indices()) {
        rank_sums[g] += r;
    }
    let effects: Vec<f64> = rank_sums
        .iter()
        .zip(&sizes)
        .map(|(&s, &nj)| (s / nj as f64 - 0.5) / n)
        .collect();

    // per-group covariance of the linearized contributions
    let mut group_cov: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    for g in 0..k {
        let rows: Vec<DVector<f64>> = samples[g]
            .iter()
            .map(|&x| {
                DVector::from_fn(k, |j, _| {
                    if j == g {
                        (0..k)
                            .filter(|&l| l != g)
                            .map(|l| weights[l] * placement(&samples[l], x))
                            .sum()
                    } else {
                        -weights[g] * placement(&samples[j], x)
                    }
                })
            })
            .collect();
        let ng = rows.len() as f64;
        let mean = rows.iter().fold(DVector::zeros(k), |a, r| a + r) / ng;
        let mut s = DMatrix::zeros(k, k);
        for r in &rows {
            let d = r - &mean;
            s += &d * d.transpose();
        }
        group_cov.push(s / (ng - 1.0));
    }
    let mut v = DMatrix::<f64>::zeros(k, k);
    for (g, s) in group_cov.iter().enumerate() {
        v += s / sizes[g] as f64;
    }

    let c = cm.matrix();
    let covariance = c * &v * c.transpose();
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    let estimates = cm.apply(&effects);

    let df = (0..cm.n_contrasts())
        .filter_map(|i| {
            let row = c.row(i).transpose();
            let parts: Vec<f64> = group_cov
                .iter()
                .zip(&sizes)
                .map(|(s, &ng)| (row.transpose() * s * &row)[(0, 0)] / ng as f64)
                .collect();
            let num = parts.iter().sum::<f64>().powi(2);
            let den: f64 = parts.iter().zip(&sizes).map(|(p, &ng)| p * p / (ng as f64 - 1.0)).sum();
            (den > 0.0).then(|| num / den)
        })
        .fold(f64::INFINITY, f64::min)
        .max(1.0);

    let si = StackedInference {
        estimates,
        correlation: correlation_from_covariance(&covariance),
        covariance,
        df,
        labels: cm.labels().iter().map(|l| (EffectKind::Location, l.clone())).collect(),
    };
    Ok((effects, si))
}

/// Normalized empirical distribution function of `sample` at `x`.
fn placement(sample: &[f64], x: f64) -> f64 {
    let mut s = 0.0;
    for &v in sample {
        if v < x {
            s += 1.0;
        } else if v == x {
            s += 0.5;
        }
    }
    s / sample.len() as f64
}
