//! Univariate distribution helpers shared by the integrator and the tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal CDF with about 1e-10 relative accuracy, for integrands
/// where speed matters more than the last digits.
#[inline]
pub(crate) fn norm_cdf_fast(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// CDF of Student's t; `df = inf` is the standard normal.
pub fn t_cdf(x: f64, df: f64) -> f64 {
    if df.is_infinite() {
        norm_cdf(x)
    } else {
        StudentsT::new(0.0, 1.0, df).expect("positive df").cdf(x)
    }
}

/// Upper tail P(T > x).
pub fn t_sf(x: f64, df: f64) -> f64 {
    if df.is_infinite() {
        norm_cdf(-x)
    } else {
        StudentsT::new(0.0, 1.0, df).expect("positive df").sf(x)
    }
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    if df.is_infinite() {
        norm_quantile(p)
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        StudentsT::new(0.0, 1.0, df).expect("positive df").inverse_cdf(p)
    }
}

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").sf(x)
}

/// Quantiles of `sqrt(W / df)` with `W ~ chi^2(df)`, the radial scale of the
/// multivariate t.
///
/// Called once per integration point, so the central range is served from a
/// cubic Hermite table of `ln q` against `z = Phi^-1(u)`, with derivatives
/// taken from the density; the far tails fall back to Halley iterations on
/// the regularized incomplete gamma function.
#[derive(Debug, Clone)]
pub(crate) struct ChiScale {
    df: f64,
    shape: f64,
    ln_gamma_shape: f64,
    /// `(ln q, d ln q / dz)` at `z = -TABLE_Z + i * h`.
    table: Vec<(f64, f64)>,
}

const TABLE_Z: f64 = 8.0;
const TABLE_INTERVALS: usize = 512;

impl ChiScale {
    pub fn new(df: f64) -> Self {
        let shape = df / 2.0;
        let mut cs = Self {
            df,
            shape,
            ln_gamma_shape: ln_gamma(shape),
            table: Vec::new(),
        };
        let h = 2.0 * TABLE_Z / TABLE_INTERVALS as f64;
        cs.table = (0..=TABLE_INTERVALS)
            .map(|i| {
                let z = -TABLE_Z + i as f64 * h;
                let y = if z > 0.0 {
                    cs.gamma_quantile(norm_cdf(-z), true, z)
                } else {
                    cs.gamma_quantile(norm_cdf(z), false, z)
                };
                let dlnq = norm_pdf(z) / (2.0 * y * cs.density(y));
                (0.5 * (2.0 * y / df).ln(), dlnq)
            })
            .collect();
        cs
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let z = norm_quantile(u);
        if z.abs() < TABLE_Z {
            let h = 2.0 * TABLE_Z / TABLE_INTERVALS as f64;
            let t = (z + TABLE_Z) / h;
            let i = (t as usize).min(TABLE_INTERVALS - 1);
            let s = t - i as f64;
            let (y0, m0) = self.table[i];
            let (y1, m1) = self.table[i + 1];
            let s2 = s * s;
            let s3 = s2 * s;
            let lnq = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                + (s3 - 2.0 * s2 + s) * h * m0
                + (3.0 * s2 - 2.0 * s3) * y1
                + (s3 - s2) * h * m1;
            return lnq.exp();
        }
        self.quantile_exact(u)
    }

    fn quantile_exact(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        let upper = u > 0.5;
        let y = self.gamma_quantile(if upper { 1.0 - u } else { u }, upper, norm_quantile(u));
        (2.0 * y / self.df).sqrt()
    }

    /// Solves P(shape, y) = target (lower tail) or Q(shape, y) = target
    /// (upper tail) for y; `z` is the matching standard normal quantile.
    fn gamma_quantile(&self, target: f64, upper: bool, z: f64) -> f64 {
        let a = self.shape;
        if target <= 0.0 {
            return if upper { f64::INFINITY } else { 0.0 };
        }

        // Wilson-Hilferty on y = W/2
        let c = 1.0 / (9.0 * a);
        let wh = 1.0 - c + z * c.sqrt();
        let mut y = if wh > 0.0 { a * wh.powi(3) } else { 0.0 };
        // lower-tail series start: P(a, y) ~ y^a / Gamma(a + 1)
        if !upper && (y <= 0.0 || (a < 5.0 && target < 1e-3)) {
            y = ((target.ln() + ln_gamma(a + 1.0)) / a).exp();
        }
        if !(y.is_finite() && y > 0.0) {
            y = a.max(1e-300);
        }

        // g(y) = P(a, y) - u, written via the upper tail when u > 1/2; g is increasing
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        for _ in 0..60 {
            let g = if upper {
                target - gamma_ur(a, y)
            } else {
                gamma_lr(a, y) - target
            };
            if g == 0.0 {
                return y;
            }
            if g > 0.0 {
                hi = hi.min(y);
            } else {
                lo = lo.max(y);
            }
            let newton = g / self.density(y);
            let halley = 1.0 - 0.5 * newton * ((a - 1.0) / y - 1.0);
            let step = if (halley - 1.0).abs() < 0.5 {
                newton / halley
            } else {
                newton
            };
            let mut next = y - step;
            if !next.is_finite() || next <= lo || next >= hi {
                next = if hi.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    2.0 * y.max(lo) + 1.0
                };
            }
            if (next - y).abs() <= 1e-14 * y {
                return next;
            }
            y = next;
        }
        y
    }

    fn density(&self, y: f64) -> f64 {
        ((self.shape - 1.0) * y.ln() - y - self.ln_gamma_shape).exp()
    }
}
