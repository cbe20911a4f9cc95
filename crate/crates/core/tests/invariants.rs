mod common;

use jointmax::classical::relative_effects_stacked;
use jointmax::maxt::{max_t_p, stack_scores};
use jointmax::{
    adjusted_p_values, fit_marginal, kw_test, load_dataset, relative_effects_mctp, stacked_covariance, Alternative,
    ContrastKind, ContrastMatrix, Dataset, DfPolicy, EffectKind, MvtOptions, PermutationPlan, ScoreSet,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

const CASES: u32 = 256;
const COSTLY_CASES: u32 = 200;

fn layout() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec((-40i32..40).prop_map(|v| f64::from(v) / 4.0), 5..=9),
        2..=4,
    )
}

fn contrasts(ds: &Dataset, kind: ContrastKind) -> ContrastMatrix {
    ContrastMatrix::for_groups(kind, ds.group_order()).unwrap()
}

fn kind() -> impl Strategy<Value = ContrastKind> {
    prop_oneof![Just(ContrastKind::GrandMean), Just(ContrastKind::Dunnett)]
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn csv_round_trip(
        values in prop::collection::vec(-1e6f64..1e6, 4..40),
        labels in prop::collection::vec(prop::sample::select(vec!["ctl", "low dose", "high, dose", "x\"y"]), 4..40),
    ) {
        let n = values.len().min(labels.len());
        let ds = match Dataset::new(values[..n].to_vec(), &labels[..n]) {
            Ok(ds) => ds,
            Err(_) => return Ok(()), // a group with a single observation
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, "response", "arm").unwrap();
        let back = load_dataset(buf.as_slice(), "response", "arm").unwrap();
        prop_assert_eq!(back.values(), ds.values());
        prop_assert_eq!(back.group_order(), ds.group_order());
        prop_assert_eq!(back.group_indices(), ds.group_indices());
        prop_assert_eq!(back.group_sizes().iter().sum::<usize>(), back.len());
    }

    #[test]
    fn score_shift_and_rescale((groups, kind, c, lambda) in (layout(), kind(), -50.0f64..50.0, 0.1f64..10.0)) {
        let ds = Dataset::from_groups(&groups).unwrap();
        let cm = contrasts(&ds, kind);
        let s = ScoreSet::compute(ds.values()).unwrap();
        let shifted: Vec<f64> = s.ansari.iter().map(|v| v + c).collect();
        let scaled: Vec<f64> = s.savage.iter().map(|v| v * lambda).collect();
        let fits = |a: &[f64], b: &[f64]| vec![
            fit_marginal(&ds, &s.midrank, EffectKind::Location).unwrap(),
            fit_marginal(&ds, a, EffectKind::Scale).unwrap(),
            fit_marginal(&ds, b, EffectKind::Shape).unwrap(),
        ];
        let base = stacked_covariance(&fits(&s.ansari, &s.savage), &cm, DfPolicy::Residual).unwrap();
        let other = stacked_covariance(&fits(&shifted, &scaled), &cm, DfPolicy::Residual).unwrap();
        let m = cm.n_contrasts();
        prop_assert_eq!(base.len(), 3 * m);
        let factor = |i: usize| if i >= 2 * m { lambda } else { 1.0 };
        let top = base.covariance.abs().max();
        for i in 0..3 * m {
            prop_assert!(close(other.estimates[i], factor(i) * base.estimates[i], 100.0));
            for j in 0..3 * m {
                prop_assert!(close(other.covariance[(i, j)], factor(i) * factor(j) * base.covariance[(i, j)], top * lambda * lambda));
            }
        }
        let (sa, sb) = (base.statistics(), other.statistics());
        for (a, b) in sa.iter().zip(&sb) {
            if a.is_finite() {
                prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn correlation_ignores_observation_order((groups, kind, seed) in (layout(), kind(), any::<u64>())) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let ds = Dataset::from_groups(&groups).unwrap();
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let values: Vec<f64> = idx.iter().map(|&i| ds.values()[i]).collect();
        let labels: Vec<&str> = idx.iter().map(|&i| ds.group_order()[ds.group_indices()[i]].as_str()).collect();
        let order = ds.group_order().to_vec();
        let shuffled = Dataset::with_order(values, &labels, Some(&order)).unwrap();
        let a = stack_scores(&ds, &contrasts(&ds, kind), &EffectKind::ALL, DfPolicy::SizeMinusFour);
        let b = stack_scores(&shuffled, &contrasts(&shuffled, kind), &EffectKind::ALL, DfPolicy::SizeMinusFour);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.correlation.iter().zip(b.correlation.iter()) {
                prop_assert!((x - y).abs() <= 1e-9 || (x.is_nan() && y.is_nan()), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn grand_mean_joint_dimension_is_three_k(k in 2usize..8) {
        let groups: Vec<Vec<f64>> = (0..k).map(|g| (0..5).map(|i| (g * 5 + i) as f64).collect()).collect();
        let ds = Dataset::from_groups(&groups).unwrap();
        let si = stack_scores(&ds, &contrasts(&ds, ContrastKind::GrandMean), &EffectKind::ALL, DfPolicy::SizeMinusFour).unwrap();
        prop_assert_eq!(si.len(), 3 * k);
        prop_assert_eq!(si.correlation.nrows(), 3 * k);
    }

    #[test]
    fn relative_effects_average_one_half(groups in layout()) {
        let ds = Dataset::from_groups(&groups).unwrap();
        let n = ds.len() as f64;
        let (effects, _) = relative_effects_stacked(&ds, &contrasts(&ds, ContrastKind::Dunnett)).unwrap();
        let weighted: f64 = effects.iter().zip(ds.group_sizes()).map(|(p, s)| p * s as f64 / n).sum();
        prop_assert!((weighted - 0.5).abs() < 1e-12);
    }
}

fn correlation(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, m * (m + 1)).prop_map(move |w| {
        let a = DMatrix::from_vec(m, m + 1, w);
        let s = &a * a.transpose() + DMatrix::identity(m, m) * 0.05;
        let d: Vec<f64> = (0..m).map(|i| s[(i, i)].sqrt()).collect();
        DMatrix::from_fn(m, m, |i, j| s[(i, j)] / (d[i] * d[j]))
    })
}

fn alternative() -> impl Strategy<Value = Alternative> {
    prop_oneof![
        Just(Alternative::TwoSided),
        Just(Alternative::Greater),
        Just(Alternative::Less)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(COSTLY_CASES))]

    #[test]
    fn adjusted_p_falls_as_threshold_grows(
        corr in (2usize..7).prop_flat_map(correlation),
        df in prop_oneof![Just(f64::INFINITY), 4.0f64..60.0],
        t in 0.0f64..3.5,
        step in 0.05f64..1.0,
        alt in alternative(),
    ) {
        let opts = MvtOptions::with_accuracy(1e-3);
        let (t1, t2) = match alt {
            Alternative::Less => (-t, -t - step),
            _ => (t, t + step),
        };
        let p1 = max_t_p(&corr, df, t1, alt, &opts, 3).unwrap();
        let p2 = max_t_p(&corr, df, t2, alt, &opts, 3).unwrap();
        prop_assert!(p2 <= p1 + 2e-3, "{} at {}, {} at {}", p1, t1, p2, t2);
    }

    #[test]
    fn response_scale_leaves_report_unchanged((groups, lambda, alt) in (layout(), 0.01f64..100.0, alternative())) {
        let ds = Dataset::from_groups(&groups).unwrap();
        let scaled = ds.with_values(ds.values().iter().map(|v| v * lambda).collect()).unwrap();
        let cm = contrasts(&ds, ContrastKind::GrandMean);
        let (Ok(a), Ok(b)) = (
            stack_scores(&ds, &cm, &EffectKind::ALL, DfPolicy::SizeMinusFour),
            stack_scores(&scaled, &cm, &EffectKind::ALL, DfPolicy::SizeMinusFour),
        ) else {
            return Ok(());
        };
        prop_assert_eq!(a.statistics(), b.statistics());
        if a.statistics().iter().all(|t| t.is_finite()) {
            let opts = MvtOptions::with_accuracy(1e-3);
            prop_assert_eq!(
                adjusted_p_values(&a, alt, &opts, 9).unwrap(),
                adjusted_p_values(&b, alt, &opts, 9).unwrap()
            );
        }
    }

    #[test]
    fn joint_p_at_least_single_block_p((groups, kind, alt) in (layout(), kind(), alternative())) {
        let ds = Dataset::from_groups(&groups).unwrap();
        let cm = contrasts(&ds, kind);
        let opts = MvtOptions::with_accuracy(1e-3);
        let Ok(joint) = stack_scores(&ds, &cm, &EffectKind::ALL, DfPolicy::SizeMinusFour) else {
            return Ok(());
        };
        if !joint.statistics().iter().all(|t| t.is_finite()) {
            return Ok(());
        }
        let full = adjusted_p_values(&joint, alt, &opts, 1).unwrap();
        for (b, effect) in EffectKind::ALL.into_iter().enumerate() {
            let single = stack_scores(&ds, &cm, &[effect], DfPolicy::SizeMinusFour).unwrap();
            let part = adjusted_p_values(&single, alt, &opts, 1).unwrap();
            let m = part.len();
            for i in 0..m {
                prop_assert!(full[b * m + i] >= part[i] - 2e-3, "{:?} row {}: {} < {}", effect, i, full[b * m + i], part[i]);
            }
        }
    }

    #[test]
    fn mctp_global_p_is_smallest_adjusted_p((groups, kind, alt) in (layout(), kind(), alternative())) {
        let ds = Dataset::from_groups(&groups).unwrap();
        let cm = contrasts(&ds, kind);
        let Ok(r) = relative_effects_mctp(&ds, &cm, alt, &MvtOptions::with_accuracy(1e-3), 5) else {
            return Ok(());
        };
        prop_assert!(r.p_adjusted.iter().all(|&p| r.global_p <= p));
        prop_assert!(r.p_adjusted.contains(&r.global_p));
    }
}

#[test]
fn monte_carlo_kw_converges_to_exhaustive() {
    let layouts = [
        vec![vec![1.0, 2.0, 2.0], vec![3.0, 5.0, 4.0]],
        vec![vec![1.0, 3.0], vec![2.0, 6.0], vec![4.0, 5.0, 5.0]],
        vec![vec![0.5, 0.7, 0.1, 0.2], vec![0.9, 0.3, 1.1, 1.0]],
    ];
    for groups in layouts {
        let ds = Dataset::from_groups(&groups).unwrap();
        let exact = kw_test(&ds, Some(PermutationPlan::Exhaustive))
            .unwrap()
            .p_permutation
            .unwrap();
        let n = 200_000;
        let mc = kw_test(&ds, Some(PermutationPlan::monte_carlo(n, 3)))
            .unwrap()
            .p_permutation
            .unwrap();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(
            (mc - exact).abs() <= 4.0 * se + 1.0 / n as f64,
            "{groups:?}: {mc} vs {exact}"
        );
        assert_eq!(exact, common::kw_exhaustive_oracle(&groups));
    }
}

#[test]
fn monte_carlo_kw_reproducible() {
    let ds = common::reaction();
    let plan = Some(PermutationPlan::monte_carlo(5_000, 12));
    assert_eq!(kw_test(&ds, plan).unwrap(), kw_test(&ds, plan).unwrap());
}
