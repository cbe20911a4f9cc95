//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::fs::File;
use std::path::PathBuf;

use jointmax::{load_dataset, Dataset};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// The vendored reaction-time data: four groups of ten mice.
pub fn reaction() -> Dataset {
    let file = File::open(fixture_path("reaction.csv")).expect("fixture present");
    load_dataset(file, "Time", "Group").expect("fixture parses")
}

pub fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// P(lower_i <= T_i <= upper_i for all i) for a multivariate t with identity
/// correlation: independent normals divided by one shared chi scale, so the
/// probability is a one-dimensional mixture of normal products.
pub fn identity_rectangle(lower: &[f64], upper: &[f64], df: f64) -> f64 {
    let nd = std_normal();
    let product = |s: f64| -> f64 {
        lower
            .iter()
            .zip(upper)
            .map(|(&a, &b)| nd.cdf(b * s) - nd.cdf(a * s))
            .product()
    };
    if df.is_infinite() {
        return product(1.0);
    }
    // S = sqrt(X / df), X ~ chi2(df); density of S is 2 df s f_X(df s^2)
    let chi = ChiSquared::new(df).unwrap();
    let density = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            2.0 * df * s * chi.pdf(df * s * s)
        }
    };
    simpson(|s| product(s) * density(s), 0.0, 8.0, 40_000)
}

/// Brute-force double integral of the standard bivariate normal density with
/// correlation `rho` over (-inf, b1] x (-inf, b2].
pub fn bivariate_normal_lower(rho: f64, b1: f64, b2: f64) -> f64 {
    let det = 1.0 - rho * rho;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let density = |x: f64, y: f64| norm * (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * det)).exp();
    let lo = -10.0;
    simpson(|x| simpson(|y| density(x, y), lo, b2, 2000), lo, b1, 2000)
}

/// Every permutation of `0..n` in lexicographic order.
pub fn for_each_permutation<F: FnMut(&[usize])>(n: usize, mut f: F) {
    fn go<F: FnMut(&[usize])>(perm: &mut Vec<usize>, used: &mut [bool], f: &mut F) {
        if perm.len() == used.len() {
            f(perm);
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                perm.push(i);
                go(perm, used, f);
                perm.pop();
                used[i] = false;
            }
        }
    }
    go(&mut Vec::with_capacity(n), &mut vec![false; n], &mut f);
}

/// Exact Kruskal-Wallis permutation p-value by enumerating all N! orderings
/// of the observations, using integer arithmetic on doubled mid-ranks so
/// ties in the statistic are compared exactly.
pub fn kw_exhaustive_oracle(groups: &[Vec<f64>]) -> f64 {
    let values: Vec<f64> = groups.iter().flatten().copied().collect();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let n = values.len();
    // doubled mid-rank: (#less) * 2 + (#equal) + 1
    let twice_rank: Vec<i64> = values
        .iter()
        .map(|&v| {
            let less = values.iter().filter(|&&w| w < v).count() as i64;
            let equal = values.iter().filter(|&&w| w == v).count() as i64;
            2 * less + equal + 1
        })
        .collect();
    let lcm = sizes.iter().fold(1i64, |acc, &s| {
        let s = s as i64;
        acc / gcd(acc, s) * s
    });
    // H is an increasing affine function of sum_j R_j^2 / n_j
    let score = |order: &[usize]| -> i64 {
        let mut pos = 0;
        sizes
            .iter()
            .map(|&s| {
                let r: i64 = order[pos..pos + s].iter().map(|&i| twice_rank[i]).sum();
                pos += s;
                r * r * (lcm / s as i64)
            })
            .sum()
    };
    let identity: Vec<usize> = (0..n).collect();
    let observed = score(&identity);
    let (mut hits, mut total) = (0u64, 0u64);
    for_each_permutation(n, |p| {
        total += 1;
        if score(p) >= observed {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sample skewness and excess kurtosis.
pub fn shape_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Multiplicative/absolute closeness used for p-value comparisons.
pub fn p_close(got: f64, want: f64, abs: f64, rel: f64) -> bool {
    (got - want).abs() <= abs.max(rel * want)
}

pub fn quantile_of(samples: &mut [f64], p: f64) -> f64 {
    let idx = ((samples.len() as f64) * p).ceil() as usize - 1;
    let (_, v, _) = samples.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}
