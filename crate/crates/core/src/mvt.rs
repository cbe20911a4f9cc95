//! Rectangle probabilities and equicoordinate quantiles of central
//! multivariate normal and t distributions.
//!
//! The integral is reduced to the unit cube by sequential conditioning on a
//! pivoted Cholesky factor (Genz's separation of variables), with the
//! multivariate t written as a normal scale mixture whose radial variable is
//! the first integration coordinate. The cube integral is estimated with
//! randomly shifted Kronecker lattices (square roots of primes) under the
//! baker's transform plus antithetic pairs; the spread across shifts gives
//! the error estimate.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{norm_cdf, norm_cdf_fast, norm_pdf, norm_quantile, t_cdf, t_quantile, ChiScale};
use crate::error::{Error, Result};

/// Eigenvalue floor used when repairing a (near-)singular correlation.
const EIGEN_FLOOR: f64 = 1e-10;
/// Most negative eigenvalue accepted before a matrix is declared not PSD.
const PSD_TOLERANCE: f64 = 1e-8;
/// Conditional variances below this are treated as exactly determined.
const SINGULAR_VARIANCE: f64 = 1e-8;
/// Loadings below this do not tie a determined row to a pivot variable.
const NEGLIGIBLE_LOADING: f64 = 1e-7;
/// Error estimate = this many standard errors across shifts.
const ERROR_SIGMAS: f64 = 3.5;

#[derive(Debug, Clone, PartialEq)]
pub struct MvtSpec {
    pub correlation: DMatrix<f64>,
    /// Degrees of freedom; `f64::INFINITY` selects the multivariate normal.
    pub df: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl MvtSpec {
    pub fn new(correlation: DMatrix<f64>, df: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let spec = Self {
            correlation,
            df,
            lower,
            upper,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.lower.len();
        if m == 0 {
            return Err(Error::Validation("empty rectangle".into()));
        }
        if self.upper.len() != m || self.correlation.nrows() != m || self.correlation.ncols() != m {
            return Err(Error::Validation(format!(
                "dimension mismatch: {} lower, {} upper, {}x{} correlation",
                m,
                self.upper.len(),
                self.correlation.nrows(),
                self.correlation.ncols()
            )));
        }
        if self.df.is_nan() || self.df <= 0.0 {
            return Err(Error::Validation(format!(
                "degrees of freedom must be positive, got {}",
                self.df
            )));
        }
        for i in 0..m {
            if self.lower[i].is_nan() || self.upper[i].is_nan() || self.lower[i] >= self.upper[i] {
                return Err(Error::Validation(format!(
                    "empty interval [{}, {}] in coordinate {i}",
                    self.lower[i], self.upper[i]
                )));
            }
            if (self.correlation[(i, i)] - 1.0).abs() > 1e-8 {
                return Err(Error::Validation(format!("correlation diagonal {i} is not 1")));
            }
            for j in 0..i {
                let (a, b) = (self.correlation[(i, j)], self.correlation[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-8 {
                    return Err(Error::Validation("correlation is not symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbResult {
    pub value: f64,
    /// 3.5 standard errors of the randomized estimate.
    pub error_estimate: f64,
    pub points_used: u64,
    /// False when the point budget ran out before the target accuracy.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvtOptions {
    /// Target absolute error.
    pub accuracy: f64,
    /// Maximum number of integrand evaluations.
    pub max_points: u64,
    /// Number of independent random shifts.
    pub shifts: usize,
}

impl Default for MvtOptions {
    fn default() -> Self {
        Self {
            accuracy: 1e-4,
            max_points: 10_000_000,
            shifts: 12,
        }
    }
}

impl MvtOptions {
    pub fn with_accuracy(accuracy: f64) -> Self {
        Self {
            accuracy,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    /// P(max |T_i| <= c).
    TwoSided,
    /// P(min T_i >= -c).
    Lower,
    /// P(max T_i <= c).
    Upper,
}

impl Tail {
    fn bounds(self, c: f64) -> (f64, f64) {
        match self {
            Tail::TwoSided => (-c, c),
            Tail::Lower => (-c, f64::INFINITY),
            Tail::Upper => (f64::NEG_INFINITY, c),
        }
    }
}

/// P(lower <= X <= upper) with the default point budget.
pub fn mvt_probability(spec: &MvtSpec, accuracy: f64, seed: u64) -> Result<ProbResult> {
    mvt_probability_with(spec, &MvtOptions::with_accuracy(accuracy), seed)
}

pub fn mvt_probability_with(spec: &MvtSpec, opts: &MvtOptions, seed: u64) -> Result<ProbResult> {
    probability(spec, opts, seed, None)
}

/// Like [`mvt_probability_with`], but stops refining as soon as the error
/// band excludes `cutoff`. Use when only the side of `cutoff` matters.
pub fn mvt_probability_versus(spec: &MvtSpec, cutoff: f64, opts: &MvtOptions, seed: u64) -> Result<ProbResult> {
    probability(spec, opts, seed, Some(cutoff))
}

fn probability(spec: &MvtSpec, opts: &MvtOptions, seed: u64, cutoff: Option<f64>) -> Result<ProbResult> {
    check_options(opts)?;
    spec.validate()?;
    let corr = repair_correlation(&spec.correlation)?;
    let exact = |value: f64| ProbResult {
        value,
        error_estimate: 0.0,
        points_used: 0,
        converged: true,
    };
    let Some(reduced) = Reduced::new(&corr, &spec.lower, &spec.upper) else {
        return Ok(exact(1.0));
    };
    if reduced.dim() == 1 {
        let cdf = |x: f64| match x {
            f64::NEG_INFINITY => 0.0,
            f64::INFINITY => 1.0,
            x => t_cdf(x, spec.df),
        };
        return Ok(exact((cdf(reduced.upper[0]) - cdf(reduced.lower[0])).max(0.0)));
    }
    let order = reduced.pivot_order();
    let plan = Plan::new(&reduced, &order, spec.df);
    Ok(Integrator::new(&plan, opts.shifts, seed).adaptive(&plan, opts, cutoff))
}

/// The scalar `c` whose equicoordinate probability under `tail` equals
/// `level`.
///
/// All probability evaluations share one variable order and one fixed point
/// set, so the estimated probability is monotone in `c` and the root is well
/// defined.
pub fn equicoordinate_quantile(
    correlation: &DMatrix<f64>,
    df: f64,
    level: f64,
    tail: Tail,
    opts: &MvtOptions,
    seed: u64,
) -> Result<f64> {
    check_options(opts)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!("level must lie in (0, 1), got {level}")));
    }
    let m = correlation.nrows();
    // validates shape and symmetry
    MvtSpec::new(correlation.clone(), df, vec![-1.0; m], vec![1.0; m])?;
    let corr = repair_correlation(correlation)?;

    let (marginal, bonferroni) = match tail {
        Tail::TwoSided => (
            t_quantile(0.5 + level / 2.0, df),
            t_quantile(1.0 - (1.0 - level) / (2.0 * m as f64), df),
        ),
        Tail::Lower | Tail::Upper => (t_quantile(level, df), t_quantile(1.0 - (1.0 - level) / m as f64, df)),
    };
    if m == 1 {
        return Ok(marginal);
    }

    let start = 0.5 * (marginal + bonferroni);
    let (l0, u0) = tail.bounds(start);
    let reduced = Reduced::new(&corr, &vec![l0; m], &vec![u0; m]).expect("bounded");
    let order = reduced.pivot_order();
    let plan_at = |c: f64| {
        let (l, u) = tail.bounds(c);
        let red = Reduced::new(&corr, &vec![l; m], &vec![u; m]).expect("bounded");
        Plan::new(&red, &order, df)
    };
    let shifts: Vec<Vec<f64>> = Integrator::new(&plan_at(start), opts.shifts, seed)
        .accs
        .into_iter()
        .map(|a| a.shift)
        .collect();
    let prob_at = |c: f64, n: u64| -> f64 {
        let plan = plan_at(c);
        let mut integ = Integrator::with_shifts(&plan, shifts.clone());
        integ.advance(&plan, n);
        integ.estimate().0
    };

    // coarse root on a small common point set
    const COARSE_POINTS: u64 = 256;
    let coarse = |c: f64| prob_at(c, COARSE_POINTS) - level;
    let c0 = illinois(&coarse, bracket(&coarse, marginal, bonferroni)?, 1e-4);

    // point count that meets the accuracy at the coarse root
    let plan = plan_at(c0);
    let mut integ = Integrator::with_shifts(&plan, shifts.clone());
    let at_c0 = integ.adaptive(&plan, opts, None);
    let n = integ.n.max(COARSE_POINTS);

    // secant polish on the full point set; g0 is exactly fine(c0)
    let fine = |c: f64| prob_at(c, n) - level;
    let tol = 1e-5 * c0.abs().max(1.0);
    let h = 1e-3 * c0.abs().max(1.0);
    let slope = (coarse(c0 + h) - coarse(c0 - h)) / (2.0 * h);
    let (mut x0, mut g0) = (c0, at_c0.value - level);
    if slope > 0.0 {
        let mut x1 = c0 - g0 / slope;
        for _ in 0..8 {
            let g1 = fine(x1);
            let step = if g1 != g0 { g1 * (x1 - x0) / (g1 - g0) } else { f64::NAN };
            if !(step.is_finite() && (g1 - g0) * (x1 - x0) > 0.0) {
                break;
            }
            (x0, g0) = (x1, g1);
            x1 -= step;
            if step.abs() < tol {
                return Ok(x1);
            }
        }
    }
    let width = 10.0 * tol;
    Ok(illinois(&fine, bracket(&fine, x0 - width, x0 + width)?, 1e-6))
}

/// Widens `[a, b]` until the increasing function `g` changes sign on it.
/// Returns `(a, g(a), b, g(b))`.
fn bracket(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> Result<(f64, f64, f64, f64)> {
    let mut ga = g(a);
    let mut gb = g(b);
    let mut widen = 0;
    while ga > 0.0 && widen < 60 {
        let step = (b - a).max(0.1);
        b = a;
        gb = ga;
        a -= step;
        ga = g(a);
        widen += 1;
    }
    while gb < 0.0 && widen < 120 {
        let step = (b - a).max(0.1);
        a = b;
        ga = gb;
        b += step;
        gb = g(b);
        widen += 1;
    }
    if ga > 0.0 || gb < 0.0 {
        return Err(Error::Numerical("could not bracket the equicoordinate quantile".into()));
    }
    Ok((a, ga, b, gb))
}

/// Illinois-modified regula falsi for an increasing `g` with `g(a) <= 0 <= g(b)`,
/// given as `(a, g(a), b, g(b))`.
fn illinois(g: &dyn Fn(f64) -> f64, (mut a, mut ga, mut b, mut gb): (f64, f64, f64, f64), rel_tol: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        if b - a < rel_tol * b.abs().max(1.0) {
            break;
        }
        let mut c = if gb != ga {
            b - gb * (b - a) / (gb - ga)
        } else {
            0.5 * (a + b)
        };
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc == 0.0 {
            return c;
        }
        if gc < 0.0 {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    if ga.abs() < gb.abs() {
        a
    } else {
        b
    }
}

fn check_options(opts: &MvtOptions) -> Result<()> {
    if !(opts.accuracy > 0.0 && opts.accuracy <= 0.1) {
        return Err(Error::Validation(format!(
            "accuracy must lie in (0, 0.1], got {}",
            opts.accuracy
        )));
    }
    if opts.shifts < 2 {
        return Err(Error::Validation("need at least two random shifts".into()));
    }
    Ok(())
}

/// Clips eigenvalues below the floor and rescales to unit diagonal.
pub fn repair_correlation(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (corr + corr.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE {
        return Err(Error::Numerical(format!(
            "correlation matrix is not positive semidefinite (smallest eigenvalue {min:e})"
        )));
    }
    if min >= EIGEN_FLOOR {
        return Ok(sym);
    }
    log::debug!("repairing correlation matrix: smallest eigenvalue {min:e} clipped to {EIGEN_FLOOR:e}");
    let clipped = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = rebuilt.diagonal().iter().map(|v| v.sqrt()).collect();
    Ok(DMatrix::from_fn(rebuilt.nrows(), rebuilt.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            rebuilt[(i, j)] / (d[i] * d[j])
        }
    }))
}

/// Problem restricted to coordinates with at least one finite bound.
struct Reduced {
    corr: DMatrix<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Reduced {
    fn new(corr: &DMatrix<f64>, lower: &[f64], upper: &[f64]) -> Option<Self> {
        let keep: Vec<usize> = (0..lower.len())
            .filter(|&i| lower[i].is_finite() || upper[i].is_finite())
            .collect();
        if keep.is_empty() {
            return None;
        }
        Some(Self {
            corr: corr.select_rows(&keep).select_columns(&keep),
            lower: keep.iter().map(|&i| lower[i]).collect(),
            upper: keep.iter().map(|&i| upper[i]).collect(),
        })
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Greedy ordering: at each step, the remaining variable with the smallest
    /// conditional interval probability given the expected values of the
    /// variables already placed. Exactly determined variables go last.
    fn pivot_order(&self) -> Vec<usize> {
        let m = self.dim();
        let mut order: Vec<usize> = (0..m).collect();
        let mut chol = vec![0.0_f64; m * m];
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut best = i;
            let mut best_p = f64::INFINITY;
            for j in i..m {
                let v = order[j];
                let var = self.corr[(v, v)] - (0..i).map(|l| chol[j * m + l].powi(2)).sum::<f64>();
                if var < SINGULAR_VARIANCE {
                    continue;
                }
                let sd = var.sqrt();
                let mu: f64 = (0..i).map(|l| chol[j * m + l] * y[l]).sum();
                let p = norm_cdf((self.upper[v] - mu) / sd) - norm_cdf((self.lower[v] - mu) / sd);
                if p < best_p {
                    best_p = p;
                    best = j;
                }
            }
            if best != i {
                order.swap(i, best);
                for l in 0..i {
                    chol.swap(i * m + l, best * m + l);
                }
            }
            let v = order[i];
            let var = self.corr[(v, v)] - (0..i).map(|l| chol[i * m + l].powi(2)).sum::<f64>();
            if var < SINGULAR_VARIANCE {
                // everything left is determined by the variables already placed
                break;
            }
            let d = var.sqrt();
            chol[i * m + i] = d;
            for r in i + 1..m {
                let w = order[r];
                let s: f64 = (0..i).map(|l| chol[r * m + l] * chol[i * m + l]).sum();
                chol[r * m + i] = (self.corr[(w, v)] - s) / d;
            }
            let mu: f64 = (0..i).map(|l| chol[i * m + l] * y[l]).sum();
            let (a, b) = ((self.lower[v] - mu) / d, (self.upper[v] - mu) / d);
            y[i] = truncated_mean(a, b);
        }
        order
    }
}

fn truncated_mean(a: f64, b: f64) -> f64 {
    let p = norm_cdf(b) - norm_cdf(a);
    if p > 1e-12 {
        (norm_pdf(a) - norm_pdf(b)) / p
    } else if a.is_finite() && (a > 0.0 || !b.is_finite()) {
        a
    } else if b.is_finite() {
        b
    } else {
        0.0
    }
}

/// Cholesky factor and bounds in integration order.
struct Plan {
    m: usize,
    chol: Vec<f64>,
    singular: Vec<bool>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Singular rows whose constraint becomes a bound on each pivot variable:
    /// the last pivot with a non-negligible loading.
    attached: Vec<Vec<usize>>,
    /// Singular rows with no loading at all.
    detached: Vec<usize>,
    /// Cube coordinate used to draw each variable, if it needs drawing.
    coord: Vec<Option<usize>>,
    dims: usize,
    chi: Option<ChiScale>,
}

impl Plan {
    fn new(red: &Reduced, order: &[usize], df: f64) -> Self {
        let m = red.dim();
        let mut chol = vec![0.0_f64; m * m];
        let mut singular = vec![false; m];
        for i in 0..m {
            let v = order[i];
            let var = red.corr[(v, v)] - (0..i).map(|l| chol[i * m + l].powi(2)).sum::<f64>();
            if var < SINGULAR_VARIANCE {
                singular[i] = true;
                continue;
            }
            let d = var.sqrt();
            chol[i * m + i] = d;
            for r in i + 1..m {
                let w = order[r];
                let s: f64 = (0..i).map(|l| chol[r * m + l] * chol[i * m + l]).sum();
                chol[r * m + i] = (red.corr[(w, v)] - s) / d;
            }
        }
        let mut attached = vec![Vec::new(); m];
        let mut detached = Vec::new();
        for r in (0..m).filter(|&r| singular[r]) {
            match (0..r)
                .rev()
                .find(|&l| !singular[l] && chol[r * m + l].abs() > NEGLIGIBLE_LOADING)
            {
                Some(l) => attached[l].push(r),
                None => detached.push(r),
            }
        }
        let chi = df.is_finite().then(|| ChiScale::new(df));
        let mut dims = usize::from(chi.is_some());
        let mut coord = vec![None; m];
        // a draw is only needed when a later pivot conditions on it
        let last_pivot = (0..m).rev().find(|&i| !singular[i]);
        for i in 0..m {
            if !singular[i] && Some(i) != last_pivot {
                coord[i] = Some(dims);
                dims += 1;
            }
        }
        Self {
            m,
            chol,
            singular,
            attached,
            detached,
            lower: order.iter().map(|&v| red.lower[v]).collect(),
            upper: order.iter().map(|&v| red.upper[v]).collect(),
            coord,
            dims,
            chi,
        }
    }

    /// `sum_{l < upto} L[row, l] z_l`
    #[inline]
    fn conditional_mean(&self, row: usize, upto: usize, z: &[f64]) -> f64 {
        let start = row * self.m;
        self.chol[start..start + upto]
            .iter()
            .zip(&z[..upto])
            .map(|(l, y)| l * y)
            .sum()
    }

    fn eval(&self, w: &[f64], z: &mut [f64]) -> f64 {
        let m = self.m;
        let scale = match &self.chi {
            Some(chi) => chi.quantile(w[0]).max(1e-300),
            None => 1.0,
        };
        for &r in &self.detached {
            if self.lower[r] > 0.0 || self.upper[r] < 0.0 {
                return 0.0;
            }
        }
        let mut f = 1.0;
        for i in 0..m {
            if self.singular[i] {
                z[i] = 0.0;
                continue;
            }
            let mu = self.conditional_mean(i, i, z);
            let d = self.chol[i * m + i];
            let (mut lo, mut hi) = ((self.lower[i] * scale - mu) / d, (self.upper[i] * scale - mu) / d);
            for &r in &self.attached[i] {
                let load = self.chol[r * m + i];
                let mu_r = self.conditional_mean(r, i, z);
                let (x, y) = (
                    (self.lower[r] * scale - mu_r) / load,
                    (self.upper[r] * scale - mu_r) / load,
                );
                let (x, y) = if load > 0.0 { (x, y) } else { (y, x) };
                lo = lo.max(x);
                hi = hi.min(y);
            }
            if lo >= hi {
                return 0.0;
            }
            let u = self.coord[i].map(|c| w[c]);
            let (p, draw) = interval_draw(lo, hi, u);
            f *= p;
            if f == 0.0 {
                return 0.0;
            }
            z[i] = draw;
        }
        f
    }
}

/// Probability of (lo, hi) under N(0,1) and, given u, the inverse-CDF draw
/// from the truncated distribution. Works in the lower tail of whichever side
/// the interval lies on to keep precision.
#[inline]
fn interval_draw(lo: f64, hi: f64, u: Option<f64>) -> (f64, f64) {
    let mirrored = lo > 0.0;
    let (l, h) = if mirrored { (-hi, -lo) } else { (lo, hi) };
    let pl = norm_cdf_fast(l);
    let ph = norm_cdf_fast(h);
    let p = (ph - pl).max(0.0);
    let Some(u) = u else {
        return (p, 0.0);
    };
    let mut x = norm_quantile(pl + u * p);
    if !x.is_finite() || x < l || x > h {
        // l <= 0 here, so the bounds can only cross when h < -40
        let (a, b) = (l.max(-40.0), h.min(40.0));
        x = if a <= b { x.clamp(a, b) } else { h };
    }
    (p, if mirrored { -x } else { x })
}

struct ShiftAcc {
    shift: Vec<f64>,
    sum: f64,
}

struct Integrator {
    gen: Vec<f64>,
    accs: Vec<ShiftAcc>,
    /// Lattice indices consumed per shift.
    n: u64,
}

impl Integrator {
    fn new(plan: &Plan, shifts: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts = (0..shifts)
            .map(|_| (0..plan.dims).map(|_| rng.random::<f64>()).collect())
            .collect();
        Self::with_shifts(plan, shifts)
    }

    fn with_shifts(plan: &Plan, shifts: Vec<Vec<f64>>) -> Self {
        Self {
            gen: richtmyer_generator(plan.dims),
            accs: shifts.into_iter().map(|shift| ShiftAcc { shift, sum: 0.0 }).collect(),
            n: 0,
        }
    }

    fn advance(&mut self, plan: &Plan, upto: u64) {
        let from = self.n;
        let gen = &self.gen;
        self.accs.par_iter_mut().for_each(|acc| {
            let mut w = vec![0.0; plan.dims];
            let mut wa = vec![0.0; plan.dims];
            let mut z = vec![0.0; plan.m];
            for j in from + 1..=upto {
                for c in 0..plan.dims {
                    let x = (j as f64 * gen[c] + acc.shift[c]).fract();
                    let t = 1.0 - (2.0 * x - 1.0).abs();
                    w[c] = t.clamp(1e-15, 1.0 - 1e-15);
                    wa[c] = 1.0 - w[c];
                }
                acc.sum += 0.5 * (plan.eval(&w, &mut z) + plan.eval(&wa, &mut z));
            }
        });
        self.n = self.n.max(upto);
    }

    /// (mean, error estimate)
    fn estimate(&self) -> (f64, f64) {
        let k = self.accs.len() as f64;
        let means: Vec<f64> = self.accs.iter().map(|a| a.sum / self.n as f64).collect();
        let mean = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k * (k - 1.0));
        (mean.clamp(0.0, 1.0), ERROR_SIGMAS * var.sqrt())
    }

    fn points(&self) -> u64 {
        2 * self.n * self.accs.len() as u64
    }

    fn adaptive(&mut self, plan: &Plan, opts: &MvtOptions, cutoff: Option<f64>) -> ProbResult {
        if plan.dims == 0 {
            let mut z = vec![0.0; plan.m];
            return ProbResult {
                value: plan.eval(&[], &mut z).clamp(0.0, 1.0),
                error_estimate: 0.0,
                points_used: 1,
                converged: true,
            };
        }
        let per_round = 2 * self.accs.len() as u64;
        let mut target = 64u64;
        loop {
            self.advance(plan, target);
            let (value, err) = self.estimate();
            let exhausted = (2 * target) * per_round > opts.max_points;
            let decided = cutoff.is_some_and(|c| (value - c).abs() > err);
            if err <= opts.accuracy || exhausted || decided {
                if err > opts.accuracy && !decided {
                    log::warn!(
                        "integration stopped at point budget with error {err:e} > {:e}",
                        opts.accuracy
                    );
                }
                return ProbResult {
                    value,
                    error_estimate: err,
                    points_used: self.points(),
                    converged: err <= opts.accuracy || decided,
                };
            }
            target *= 2;
        }
    }
}

fn richtmyer_generator(d: usize) -> Vec<f64> {
    primes(d).into_iter().map(|p| (p as f64).sqrt().fract()).collect()
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}
