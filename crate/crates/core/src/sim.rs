//! Fleishman power-method variates and the Monte Carlo size/power study.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{kw_test, relative_effects_mctp, relative_effects_stacked, PermutationPlan};
use crate::contrasts::grand_mean_contrasts;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::marginal::DfPolicy;
use crate::marginal::EffectKind;
use crate::maxt::{global_rejects, joint_global_p, stack_scores, Alternative};
use crate::mvt::MvtOptions;

/// Coefficients of `Y = a + bZ + cZ^2 + dZ^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleishmanCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl FleishmanCoeffs {
    pub const IDENTITY: Self = Self {
        a: 0.0,
        b: 1.0,
        c: 0.0,
        d: 0.0,
    };

    #[inline]
    pub fn transform(&self, z: f64) -> f64 {
        self.a + z * (self.b + z * (self.c + z * self.d))
    }

    /// Residuals of the variance, skewness and kurtosis equations.
    pub fn residuals(&self, skewness: f64, excess_kurtosis: f64) -> [f64; 3] {
        let r = moment_equations(Vector3::new(self.b, self.c, self.d), skewness, excess_kurtosis);
        [r[0], r[1], r[2]]
    }
}

fn moment_equations(x: Vector3<f64>, g1: f64, g2: f64) -> Vector3<f64> {
    let (b, c, d) = (x[0], x[1], x[2]);
    Vector3::new(
        b * b + 6.0 * b * d + 2.0 * c * c + 15.0 * d * d - 1.0,
        2.0 * c * (b * b + 24.0 * b * d + 105.0 * d * d + 2.0) - g1,
        24.0 * (b * d
            + c * c * (1.0 + b * b + 28.0 * b * d)
            + d * d * (12.0 + 48.0 * b * d + 141.0 * c * c + 225.0 * d * d))
            - g2,
    )
}

fn moment_jacobian(x: Vector3<f64>) -> Matrix3<f64> {
    let (b, c, d) = (x[0], x[1], x[2]);
    Matrix3::new(
        2.0 * b + 6.0 * d,
        4.0 * c,
        6.0 * b + 30.0 * d,
        2.0 * c * (2.0 * b + 24.0 * d),
        2.0 * (b * b + 24.0 * b * d + 105.0 * d * d + 2.0),
        2.0 * c * (24.0 * b + 210.0 * d),
        24.0 * (d + c * c * (2.0 * b + 28.0 * d) + 48.0 * d * d * d),
        24.0 * (2.0 * c * (1.0 + b * b + 28.0 * b * d) + 282.0 * c * d * d),
        24.0 * (b
            + 28.0 * b * c * c
            + 2.0 * d * (12.0 + 48.0 * b * d + 141.0 * c * c + 225.0 * d * d)
            + d * d * (48.0 * b + 450.0 * d)),
    )
}

/// Solves the power-method moment equations for the given skewness and
/// excess kurtosis by damped Newton iteration from `(1, skewness / 6, 0)`.
pub fn fleishman_coefficients(skewness: f64, excess_kurtosis: f64) -> Result<FleishmanCoeffs> {
    const MAX_ITER: usize = 200;
    let mut x = Vector3::new(1.0, skewness / 6.0, 0.0);
    let mut f = moment_equations(x, skewness, excess_kurtosis);
    for _ in 0..MAX_ITER {
        if f.amax() < 1e-13 {
            break;
        }
        let Some(step) = moment_jacobian(x).lu().solve(&(-f)) else {
            break;
        };
        let mut lambda = 1.0;
        let norm = f.norm();
        loop {
            let trial = x + step * lambda;
            let ft = moment_equations(trial, skewness, excess_kurtosis);
            if ft.norm() < norm || lambda < 1e-10 {
                x = trial;
                f = ft;
                break;
            }
            lambda *= 0.5;
        }
    }
    if f.amax().is_nan() || f.amax() > 1e-10 {
        return Err(Error::Convergence(format!(
            "no power-method solution for skewness {skewness}, excess kurtosis {excess_kurtosis} \
             (residual {:e})",
            f.amax()
        )));
    }
    Ok(FleishmanCoeffs {
        a: -x[1],
        b: x[0],
        c: x[1],
        d: x[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Normal,
    Fleishman { skewness: f64, excess_kurtosis: f64 },
}

impl Distribution {
    /// The skewed distribution of the reference study: skewness 1.5, excess
    /// kurtosis 3.
    pub const SKEWED: Distribution = Distribution::Fleishman {
        skewness: 1.5,
        excess_kurtosis: 3.0,
    };

    pub fn coefficients(&self) -> Result<FleishmanCoeffs> {
        match *self {
            Distribution::Normal => Ok(FleishmanCoeffs::IDENTITY),
            Distribution::Fleishman {
                skewness,
                excess_kurtosis,
            } => fleishman_coefficients(skewness, excess_kurtosis),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Normal => f.write_str("Normal"),
            Distribution::Fleishman { .. } => f.write_str("Skewed"),
        }
    }
}

/// `location + scale * (a + bZ + cZ^2 + dZ^3)` for `n` standard normal `Z`.
pub fn sample_group<R: Rng + ?Sized>(
    coeffs: &FleishmanCoeffs,
    n: usize,
    location: f64,
    scale: f64,
    rng: &mut R,
) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            location + scale * coeffs.transform(z)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GlobalTest {
    #[serde(rename = "joint")]
    Joint,
    #[serde(rename = "nonparmct")]
    NonparMct,
    #[serde(rename = "kw")]
    Kw,
}

impl GlobalTest {
    pub const ALL: [GlobalTest; 3] = [GlobalTest::Joint, GlobalTest::NonparMct, GlobalTest::Kw];

    pub fn column_name(self) -> &'static str {
        match self {
            GlobalTest::Joint => "Joint Test",
            GlobalTest::NonparMct => "NonparMCT",
            GlobalTest::Kw => "KW-test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub k: usize,
    pub n_per_group: usize,
    pub distribution: Distribution,
    pub location_shift: Vec<f64>,
    pub scale_multiplier: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n_replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Permutations for the Kruskal-Wallis p-value; asymptotic chi-square
    /// when absent.
    #[serde(default)]
    pub kw_permutations: Option<usize>,
    /// Target absolute error of the multivariate t integrals.
    #[serde(default = "default_sim_accuracy")]
    pub mvt_accuracy: f64,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_sim_accuracy() -> f64 {
    1e-3
}

/// Shift of the last group in the location presets: Kruskal-Wallis power in
/// the Gaussian location scenario is about 0.82 (see
/// [`calibrate_location_shift`]).
pub const DEFAULT_LOCATION_SHIFT: f64 = 0.93;
/// Scale multiplier of the last group in the scale presets: joint-test power
/// in the Gaussian scale scenario is about 0.765 (see
/// [`calibrate_scale_multiplier`]).
pub const DEFAULT_SCALE_MULTIPLIER: f64 = 2.5;

impl ScenarioConfig {
    /// Balanced layout with no effect.
    pub fn null(distribution: Distribution, k: usize, n_per_group: usize, n_replicates: usize, seed: u64) -> Self {
        Self {
            name: format!("{distribution} H0/H0"),
            k,
            n_per_group,
            distribution,
            location_shift: vec![0.0; k],
            scale_multiplier: vec![1.0; k],
            alpha: 0.05,
            n_replicates,
            seed,
            kw_permutations: None,
            mvt_accuracy: default_sim_accuracy(),
        }
    }

    /// The reference layout (k = 4, 20 per group) with the last group shifted
    /// by `shift` and scaled by `scale`.
    pub fn last_group(distribution: Distribution, shift: f64, scale: f64, n_replicates: usize, seed: u64) -> Self {
        let mut cfg = Self::null(distribution, 4, 20, n_replicates, seed);
        cfg.location_shift[3] = shift;
        cfg.scale_multiplier[3] = scale;
        let loc = if shift != 0.0 { "H1" } else { "H0" };
        let sc = if scale != 1.0 { "H1" } else { "H0" };
        cfg.name = format!("{distribution} {loc}/{sc}");
        cfg
    }

    /// The eight rows of the reference table with the default effect sizes.
    pub fn presets(n_replicates: usize, seed: u64) -> Vec<Self> {
        let mut out = Vec::new();
        for dist in [Distribution::Normal, Distribution::SKEWED] {
            for (loc, sc) in [(false, false), (true, false), (false, true), (true, true)] {
                out.push(Self::last_group(
                    dist,
                    if loc { DEFAULT_LOCATION_SHIFT } else { 0.0 },
                    if sc { DEFAULT_SCALE_MULTIPLIER } else { 1.0 },
                    n_replicates,
                    seed,
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.n_per_group < 2 {
            return Err(Error::Validation("need k >= 2 groups of at least 2".into()));
        }
        if self.location_shift.len() != self.k || self.scale_multiplier.len() != self.k {
            return Err(Error::Validation("shift and scale vectors must have length k".into()));
        }
        if self.scale_multiplier.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("scale multipliers must be positive".into()));
        }
        if self.location_shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation("location shifts must be finite".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.n_replicates == 0 {
            return Err(Error::Validation("need at least one replicate".into()));
        }
        if !(self.mvt_accuracy > 0.0 && self.mvt_accuracy <= 0.1) {
            return Err(Error::Validation("mvt_accuracy must lie in (0, 0.1]".into()));
        }
        Ok(())
    }

    /// Draws the dataset of replicate `rep`.
    pub fn draw(&self, coeffs: &FleishmanCoeffs, rep: u64) -> Result<Dataset> {
        let mut rng = replicate_rng(self.seed, rep);
        let groups: Vec<Vec<f64>> = (0..self.k)
            .map(|g| {
                sample_group(
                    coeffs,
                    self.n_per_group,
                    self.location_shift[g],
                    self.scale_multiplier[g],
                    &mut rng,
                )
            })
            .collect();
        Dataset::from_groups(&groups)
    }
}

fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestPower {
    pub test: GlobalTest,
    pub rejections: u64,
    pub proportion: f64,
    pub mc_std_error: f64,
    /// Replicates where the test raised an error; excluded from the proportion.
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerReport {
    pub scenario: ScenarioConfig,
    pub results: Vec<TestPower>,
}

impl PowerReport {
    pub fn get(&self, test: GlobalTest) -> Option<&TestPower> {
        self.results.iter().find(|r| r.test == test)
    }
}

/// Global p-value of one test on one dataset.
pub fn global_p_value(test: GlobalTest, ds: &Dataset, cfg: &ScenarioConfig, rep: u64) -> Result<f64> {
    let cm = grand_mean_contrasts(ds.n_groups())?;
    let opts = MvtOptions::with_accuracy(cfg.mvt_accuracy);
    let seed = cfg.seed.wrapping_add(rep);
    match test {
        GlobalTest::Joint => joint_global_p(ds, &cm, Alternative::TwoSided, DfPolicy::SizeMinusFour, &opts, seed),
        GlobalTest::NonparMct => Ok(relative_effects_mctp(ds, &cm, Alternative::TwoSided, &opts, seed)?.global_p),
        GlobalTest::Kw => {
            let plan = cfg.kw_permutations.map(|n| PermutationPlan::monte_carlo(n, seed));
            let r = kw_test(ds, plan)?;
            Ok(r.p_permutation.unwrap_or(r.p_asymptotic))
        }
    }
}

/// Whether one test rejects at the scenario's `alpha`. Same decision as
/// comparing [`global_p_value`] with `alpha`, up to integration error, but
/// the multivariate t integrals stop as soon as the side is clear.
pub fn rejects(test: GlobalTest, ds: &Dataset, cfg: &ScenarioConfig, rep: u64) -> Result<bool> {
    let cm = grand_mean_contrasts(ds.n_groups())?;
    let opts = MvtOptions::with_accuracy(cfg.mvt_accuracy);
    let seed = cfg.seed.wrapping_add(rep);
    match test {
        GlobalTest::Joint => {
            let si = stack_scores(ds, &cm, &EffectKind::ALL, DfPolicy::SizeMinusFour)?;
            global_rejects(&si, Alternative::TwoSided, cfg.alpha, &opts, seed)
        }
        GlobalTest::NonparMct => {
            let (_, si) = relative_effects_stacked(ds, &cm)?;
            global_rejects(&si, Alternative::TwoSided, cfg.alpha, &opts, seed)
        }
        GlobalTest::Kw => Ok(global_p_value(test, ds, cfg, rep)? <= cfg.alpha),
    }
}

/// Runs every replicate of the scenario and tallies rejections at `alpha`.
/// Replicate `i` uses its own random stream, so the report does not depend
/// on the number of worker threads.
pub fn run_power_study(cfg: &ScenarioConfig, tests: &[GlobalTest]) -> Result<PowerReport> {
    cfg.validate()?;
    let coeffs = cfg.distribution.coefficients()?;
    let mut tests = tests.to_vec();
    tests.sort();
    tests.dedup();
    let t = tests.len();

    // per test: [rejections, failures]
    let tallies = (0..cfg.n_replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut tally = vec![[0u64; 2]; t];
            match cfg.draw(&coeffs, rep) {
                Ok(ds) => {
                    for (i, &test) in tests.iter().enumerate() {
                        match rejects(test, &ds, cfg, rep) {
                            Ok(reject) => tally[i][0] += u64::from(reject),
                            Err(e) => {
                                log::debug!("replicate {rep}: {test:?} failed: {e}");
                                tally[i][1] += 1;
                            }
                        }
                    }
                }
                Err(_) => tally.iter_mut().for_each(|x| x[1] += 1),
            }
            tally
        })
        .reduce(
            || vec![[0u64; 2]; t],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x[0] += y[0];
                    x[1] += y[1];
                }
                a
            },
        );

    let results = tests
        .iter()
        .zip(tallies)
        .map(|(&test, [rejections, failures])| {
            let used = cfg.n_replicates as u64 - failures;
            let proportion = if used > 0 {
                rejections as f64 / used as f64
            } else {
                f64::NAN
            };
            TestPower {
                test,
                rejections,
                proportion,
                mc_std_error: (proportion * (1.0 - proportion) / used.max(1) as f64).sqrt(),
                failures,
            }
        })
        .collect();
    Ok(PowerReport {
        scenario: cfg.clone(),
        results,
    })
}

/// Finds the last-group shift at which the Kruskal-Wallis test (asymptotic
/// p-value) reaches `target` power in the Gaussian reference layout.
pub fn calibrate_location_shift(target: f64, n_replicates: usize, seed: u64) -> Result<f64> {
    calibrate(target, 0.0, 4.0, |shift| {
        let cfg = ScenarioConfig::last_group(Distribution::Normal, shift, 1.0, n_replicates, seed);
        Ok(run_power_study(&cfg, &[GlobalTest::Kw])?.results[0].proportion)
    })
}

/// Finds the last-group scale multiplier at which the joint test reaches
/// `target` power in the Gaussian reference layout.
pub fn calibrate_scale_multiplier(target: f64, n_replicates: usize, seed: u64) -> Result<f64> {
    calibrate(target, 1.0, 8.0, |scale| {
        let cfg = ScenarioConfig::last_group(Distribution::Normal, 0.0, scale, n_replicates, seed);
        Ok(run_power_study(&cfg, &[GlobalTest::Joint])?.results[0].proportion)
    })
}

/// Bisection on an increasing power curve; every evaluation reuses the same
/// replicate streams, so the curve is close to monotone in the effect size.
fn calibrate(target: f64, mut lo: f64, mut hi: f64, power: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Validation(format!(
            "target power must lie in (0, 1), got {target}"
        )));
    }
    if power(hi)? < target {
        return Err(Error::Convergence(format!(
            "target power {target} not reached at effect size {hi}"
        )));
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if power(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// CSV in the layout of the reference table: one row per scenario.
pub fn write_power_table<W: std::io::Write>(out: W, reports: &[PowerReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["Distribution".to_string(), "location".to_string(), "scale".to_string()];
    let tests: Vec<GlobalTest> = GlobalTest::ALL
        .into_iter()
        .filter(|t| reports.iter().any(|r| r.get(*t).is_some()))
        .collect();
    header.extend(tests.iter().map(|t| t.column_name().to_string()));
    header.extend([
        "shift".to_string(),
        "scale_multiplier".to_string(),
        "replicates".to_string(),
    ]);
    w.write_record(&header)?;
    for r in reports {
        let s = &r.scenario;
        let shifted = s.location_shift.iter().any(|&v| v != s.location_shift[0]);
        let scaled = s.scale_multiplier.iter().any(|&v| v != s.scale_multiplier[0]);
        let mut row = vec![
            s.distribution.to_string(),
            if shifted { "H1" } else { "H0" }.to_string(),
            if scaled { "H1" } else { "H0" }.to_string(),
        ];
        for t in &tests {
            row.push(r.get(*t).map(|p| format!("{:.3}", p.proportion)).unwrap_or_default());
        }
        row.push(format!("{:?}", s.location_shift));
        row.push(format!("{:?}", s.scale_multiplier));
        row.push(s.n_replicates.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
