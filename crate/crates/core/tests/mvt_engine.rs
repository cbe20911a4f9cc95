mod common;

use jointmax::{equicoordinate_quantile, mvt_probability, MvtOptions, MvtSpec, Tail};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

fn equicorr(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho })
}

fn prob(corr: &DMatrix<f64>, df: f64, lower: Vec<f64>, upper: Vec<f64>) -> f64 {
    let spec = MvtSpec::new(corr.clone(), df, lower, upper).unwrap();
    mvt_probability(&spec, 1e-4, 5).unwrap().value
}

#[test]
fn bivariate_normal_matches_double_integral() {
    let got = prob(
        &equicorr(2, 0.5),
        f64::INFINITY,
        vec![f64::NEG_INFINITY; 2],
        vec![1.0; 2],
    );
    let want = common::bivariate_normal_lower(0.5, 1.0, 1.0);
    assert!((got - want).abs() < 5e-4, "{got} vs {want}");
}

#[test]
fn product_of_normal_probabilities() {
    let got = prob(
        &DMatrix::identity(2, 2),
        f64::INFINITY,
        vec![-1.959964; 2],
        vec![1.959964; 2],
    );
    assert!((got - 0.9025).abs() < 5e-4, "{got}");
}

#[test]
fn large_df_approaches_normal() {
    let corr = equicorr(3, 0.4);
    let (lo, hi) = (vec![-1.5, -2.0, f64::NEG_INFINITY], vec![2.0, 1.0, 0.5]);
    let t = prob(&corr, 1e6, lo.clone(), hi.clone());
    let z = prob(&corr, f64::INFINITY, lo, hi);
    assert!((t - z).abs() < 1e-3, "{t} vs {z}");
}

#[test]
fn quantile_matches_simulated_max() {
    let corr = equicorr(3, 0.3);
    let c = equicoordinate_quantile(&corr, 24.0, 0.95, Tail::TwoSided, &MvtOptions::default(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let chi = ChiSquared::<f64>::new(24.0).unwrap();
    let (a, b) = (0.3f64.sqrt(), 0.7f64.sqrt());
    let mut maxima: Vec<f64> = (0..10_000_000)
        .map(|_| {
            let shared: f64 = StandardNormal.sample(&mut rng);
            let s = (chi.sample(&mut rng) / 24.0).sqrt();
            (0..3)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    ((a * shared + b * e) / s).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let simulated = common::quantile_of(&mut maxima, 0.95);
    assert!((c - simulated).abs() < 0.01, "{c} vs {simulated}");
}

#[test]
fn one_sided_quantile_below_two_sided() {
    let corr = equicorr(4, 0.5);
    let opts = MvtOptions::default();
    let upper = equicoordinate_quantile(&corr, 30.0, 0.95, Tail::Upper, &opts, 1).unwrap();
    let lower = equicoordinate_quantile(&corr, 30.0, 0.95, Tail::Lower, &opts, 1).unwrap();
    let two = equicoordinate_quantile(&corr, 30.0, 0.95, Tail::TwoSided, &opts, 1).unwrap();
    assert!((upper - lower).abs() < 2e-3, "{upper} vs {lower}");
    assert!(upper < two);
    let p = prob(&corr, 30.0, vec![f64::NEG_INFINITY; 4], vec![upper; 4]);
    assert!((p - 0.95).abs() < 1e-3, "{p}");
}

#[test]
fn seed_reproducibility() {
    let spec = MvtSpec::new(equicorr(5, 0.2), 12.0, vec![-2.0; 5], vec![2.0; 5]).unwrap();
    let a = mvt_probability(&spec, 1e-4, 17).unwrap();
    let b = mvt_probability(&spec, 1e-4, 17).unwrap();
    assert_eq!(a, b);
    assert!(a.converged && a.error_estimate <= 1e-4);
}

fn correlation(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, m * (m + 1)).prop_map(move |w| {
        let a = DMatrix::from_vec(m, m + 1, w);
        let s = &a * a.transpose() + DMatrix::identity(m, m) * 0.05;
        let d: Vec<f64> = (0..m).map(|i| s[(i, i)].sqrt()).collect();
        DMatrix::from_fn(m, m, |i, j| s[(i, j)] / (d[i] * d[j]))
    })
}

fn scenario() -> impl Strategy<Value = (DMatrix<f64>, f64, Vec<f64>, Vec<f64>)> {
    (2usize..=4).prop_flat_map(|m| {
        (
            correlation(m),
            prop_oneof![Just(f64::INFINITY), 3.0f64..40.0],
            prop::collection::vec(-2.5f64..0.0, m),
            prop::collection::vec(0.0f64..2.5, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn widening_bounds_never_lowers_probability((corr, df, lo, hi) in scenario(), extra in 0.1f64..1.0) {
        let base = prob(&corr, df, lo.clone(), hi.clone());
        let wider = prob(&corr, df, lo, hi.iter().map(|h| h + extra).collect());
        prop_assert!(wider >= base - 4e-4, "{} then {}", base, wider);
    }

    #[test]
    fn reflection_symmetry((corr, df, lo, hi) in scenario()) {
        let p = prob(&corr, df, lo.clone(), hi.clone());
        let q = prob(&corr, df, hi.iter().map(|h| -h).collect(), lo.iter().map(|l| -l).collect());
        prop_assert!((p - q).abs() < 4e-4, "{} vs {}", p, q);
    }

    #[test]
    fn stays_in_unit_interval((corr, df, lo, hi) in scenario()) {
        let p = prob(&corr, df, lo, hi);
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
