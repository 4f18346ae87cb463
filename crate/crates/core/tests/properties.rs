mod common;

use common::*;
use proptest::prelude::*;

use uhc::experiment::{Method, TrialSeeds};
use uhc::fusion::{ce_objective, mf_logit_als, mf_prob_als, ALSConfig, Fusion};
use uhc::trainer::compute_balance_weights;
use uhc::bench::{HCConfigSpec, HCMode};
use uhc::{restrict, softmax_t, ClassSubset};

fn argmax(x: &[f64]) -> usize {
    (0..x.len()).fold(0, |b, i| if x[i] > x[b] { i } else { b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_lands_on_simplex_and_keeps_argmax(
        logits in prop::collection::vec(-30.0..30.0f64, 1..10),
        t in 0.05..50.0f64,
    ) {
        let q = softmax_t(&logits, t).unwrap();
        prop_assert!(on_simplex(&q, 1e-12));
        prop_assert_eq!(argmax(&q), argmax(&logits));
    }

    #[test]
    fn restriction_is_a_distribution_proportional_to_q(seed in any::<u64>(), classes in 2usize..9) {
        let mut r = rng(seed);
        let q = dirichlet(&mut r, classes, 1.0);
        let subset = ClassSubset::new(classes, covering_subsets(&mut r, classes, 1).remove(0)).unwrap();
        let p = restrict(&q, &subset).unwrap();
        prop_assert!(on_simplex(&p, 1e-12));
        let mass: f64 = subset.members().iter().map(|&l| q[l]).sum();
        for (k, &l) in subset.members().iter().enumerate() {
            prop_assert!((p[k] * mass - q[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn profiles_are_zero_off_mask_with_unit_columns(seed in any::<u64>(), classes in 2usize..9, n in 1usize..6) {
        let prof = random_profile(&mut rng(seed), classes, n, 3.0);
        for i in 0..n {
            let mut sum = 0.0;
            for l in 0..classes {
                let m = prof.mask().get(l, i);
                if m == 0.0 {
                    prop_assert_eq!(prof.p().get(l, i), 0.0);
                    prop_assert_eq!(prof.z().get(l, i), 0.0);
                } else {
                    sum += prof.p().get(l, i);
                }
            }
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
        for l in 0..classes {
            prop_assert!((0..n).any(|i| prof.mask().get(l, i) == 1.0));
        }
    }

    #[test]
    fn every_method_returns_a_distribution(seed in any::<u64>(), classes in 2usize..8, n in 1usize..5) {
        let prof = random_profile(&mut rng(seed), classes, n, 2.0);
        for name in ["sd", "ce", "mf-p", "mf-lv", "mf-lf"] {
            let fused = Fusion::from_name(name, 0.01).unwrap().fuse(&prof).unwrap();
            prop_assert!(on_simplex(&fused.q, 1e-8), "{} gave {:?}", name, fused.q);
            prop_assert!(fused.diagnostics.final_objective.is_finite());
        }
    }

    #[test]
    fn ce_objective_ignores_constant_shifts(seed in any::<u64>(), shift in -50.0..50.0f64) {
        let mut r = rng(seed);
        let prof = random_profile(&mut r, 5, 3, 2.0);
        let u = normal_vec(&mut r, 5, 2.0);
        let shifted: Vec<f64> = u.iter().map(|x| x + shift).collect();
        let (a, b) = (ce_objective(&u, &prof), ce_objective(&shifted, &prof));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn consistent_labels_are_recovered_by_ce(seed in any::<u64>(), classes in 2usize..6) {
        let mut r = rng(seed);
        let pbar = dirichlet(&mut r, classes, 2.0);
        let prof = consistent_profile(&pbar, &connected_subsets(&mut r, classes, 3));
        let q = Fusion::from_name("ce", 0.0).unwrap().fuse(&prof).unwrap().q;
        prop_assert!(max_abs_diff(&q, &pbar) < 1e-3);
    }

    #[test]
    fn als_objectives_never_increase(seed in any::<u64>(), classes in 2usize..8, n in 1usize..5) {
        let prof = random_profile(&mut rng(seed), classes, n, 2.0);
        let run = mf_prob_als(&prof, &ALSConfig::default());
        prop_assert!(run.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(run.u.iter().chain(&run.v).all(|x| *x >= 0.0));
        let (run, _) = mf_logit_als(&prof, 0.01, 1e-3, 3000);
        prop_assert!(run.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn balance_weights_invert_mean_mass(seed in any::<u64>(), classes in 2usize..8, n in 1usize..40) {
        let mut r = rng(seed);
        let labels: Vec<Vec<f64>> = (0..n).map(|_| dirichlet(&mut r, classes, 1.0)).collect();
        let w = compute_balance_weights(&labels).unwrap();
        for l in 0..classes {
            let mean = labels.iter().map(|q| q[l]).sum::<f64>() / n as f64;
            prop_assert!(w.weights[l] > 0.0);
            if mean >= 1e-6 {
                prop_assert!((w.weights[l] * mean - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn assigned_subsets_cover_the_universe(seed in any::<u64>(), classes in 3usize..10, count in 2usize..7, overlap in any::<bool>()) {
        let spec = HCConfigSpec {
            count,
            min_classes: 2,
            max_classes: classes,
            mode: if overlap { HCMode::CompletelyOverlapping } else { HCMode::RandomClasses },
            seed,
            ..Default::default()
        };
        let subsets = spec.assign_subsets(classes).unwrap();
        prop_assert_eq!(subsets.len(), count);
        let mut covered = vec![false; classes];
        for s in &subsets {
            s.members().iter().for_each(|&l| covered[l] = true);
            if overlap {
                prop_assert_eq!(s.len(), classes);
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn trial_seeds_are_a_pure_function(base in any::<u64>(), trial in 0usize..1000) {
        prop_assert_eq!(TrialSeeds::derive(base, trial), TrialSeeds::derive(base, trial));
    }
}

#[test]
fn method_names_parse_back() {
    for m in Method::all() {
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }
    assert!("mf-q-e".parse::<Method>().is_err());
}
