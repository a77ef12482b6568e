use proptest::prelude::*;

use sebays::data::{split_train_val, Dataset, Split};
use sebays::layers::{bernoulli_kl, gaussian_kl_entry};
use sebays::metrics::*;
use sebays::numeric::{log_sum_exp, softmax_rows, softplus, softplus_inverse, DenseMatrix, RngStream};
use sebays::schedule::{PhasePlan, Schedule};

fn probs(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-6.0f64..6.0, rows * cols).prop_map(move |v| softmax_rows(&DenseMatrix::from_vec(rows, cols, v).unwrap()))
}

fn learners() -> impl Strategy<Value = (Vec<DenseMatrix>, Vec<usize>)> {
    (2usize..5, 1usize..30, 2usize..6).prop_flat_map(|(m, n, k)| (prop::collection::vec(probs(n, k), m), prop::collection::vec(0..k, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_rows_are_distributions(m in probs(7, 4)) {
        for r in m.iter_rows() {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(r.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn log_sum_exp_shift(v in prop::collection::vec(-50.0f64..50.0, 1..20), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = log_sum_exp(&v).unwrap() + c;
        prop_assert!((log_sum_exp(&shifted).unwrap() - a).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn softplus_round_trip(x in -20.0f64..30.0) {
        prop_assert!((softplus_inverse(softplus(x)) - x).abs() < 1e-8 * x.abs().max(1.0));
    }

    #[test]
    fn kl_terms_nonnegative(mu in -3.0f64..3.0, s in 1e-4f64..3.0, s0 in 0.05f64..3.0, g in 0.0f64..=1.0, l in 0.01f64..0.99) {
        prop_assert!(gaussian_kl_entry(mu, s, s0) >= -1e-12);
        prop_assert!(bernoulli_kl(g, l) >= -1e-12);
        prop_assert!(gaussian_kl_entry(0.0, s0, s0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_average_stays_in_hull((preds, _) in learners()) {
        let refs: Vec<&DenseMatrix> = preds.iter().collect();
        let ens = ensemble_average(&refs).unwrap();
        for i in 0..ens.rows() {
            prop_assert!((ens.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for c in 0..ens.cols() {
                let lo = preds.iter().map(|p| p.get(i, c)).fold(f64::INFINITY, f64::min);
                let hi = preds.iter().map(|p| p.get(i, c)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(ens.get(i, c) >= lo * (1.0 - 1e-12) && ens.get(i, c) <= hi * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn scalar_metrics_in_range((preds, labels) in learners(), bins in 1usize..20) {
        let p = &preds[0];
        let a = accuracy(p, &labels).unwrap();
        let e = ece(p, &labels, bins).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!(nll(p, &labels).unwrap() >= 0.0);
    }

    #[test]
    fn jensen_holds((preds, labels) in learners()) {
        let refs: Vec<&DenseMatrix> = preds.iter().collect();
        let j = check_jensen(&refs, &labels).unwrap();
        prop_assert!(j.ensemble_nll <= j.mean_individual_nll);
    }

    #[test]
    fn pairwise_measures((preds, _) in learners()) {
        let (a, b) = (&preds[0], &preds[1]);
        prop_assert_eq!(disagreement(a, b).unwrap(), disagreement(b, a).unwrap());
        prop_assert!(pairwise_kl(a, b).unwrap() >= -1e-12);
        prop_assert_eq!(pairwise_kl(a, a).unwrap(), 0.0);
        prop_assert_eq!(disagreement(a, a).unwrap(), 0.0);
    }

    #[test]
    fn diversity_ignores_row_order((preds, _) in learners(), seed in any::<u64>()) {
        let n = preds[0].rows();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = RngStream::new(seed, 0);
        for i in (1..n).rev() {
            order.swap(i, rng.below(i + 1));
        }
        let perm: Vec<DenseMatrix> = preds.iter().map(|p| p.select_rows(&order)).collect();
        let d1 = ensemble_diversity(&preds.iter().collect::<Vec<_>>()).unwrap();
        let d2 = ensemble_diversity(&perm.iter().collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(d1.d_dis, d2.d_dis);
        prop_assert!((d1.d_kl - d2.d_kl).abs() <= 1e-12 * d1.d_kl.max(1e-300));
    }

    #[test]
    fn auroc_matches_pair_count(a in prop::collection::vec(0u8..8, 1..40), b in prop::collection::vec(0u8..8, 1..40)) {
        let (fa, fb): (Vec<f64>, Vec<f64>) = (a.iter().map(|&x| x as f64).collect(), b.iter().map(|&x| x as f64).collect());
        let mut twice = 0u64;
        for x in &a {
            for y in &b {
                twice += match x.cmp(y) {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        let expected = twice as f64 / (2 * a.len() * b.len()) as f64;
        prop_assert_eq!(auroc_scores(&fa, &fb).unwrap(), expected);
        prop_assert!((auroc_scores(&fa, &fb).unwrap() + auroc_scores(&fb, &fa).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lr_within_bounds(t0 in 1usize..40, half in 1usize..20, m in 1usize..5, hi in 0.01f64..1.0, mid_f in 0.01f64..1.0, low_f in 0.01f64..1.0, s in 0usize..4) {
        let plan = PhasePlan {
            t0,
            t_ex: 2 * half,
            m,
            lr_high: hi,
            lr_mid: hi * mid_f,
            lr_low: hi * mid_f * low_f,
            schedule: Schedule::ALL[s],
        };
        plan.validate().unwrap();
        let table = plan.lr_table().unwrap();
        prop_assert_eq!(table.len(), plan.total_epochs());
        for lr in table {
            prop_assert!(lr >= plan.lr_low * (1.0 - 1e-12) && lr <= plan.lr_high * (1.0 + 1e-12));
        }
        prop_assert_eq!(plan.snapshot_epochs().len(), m);
    }

    #[test]
    fn split_partitions(labels in prop::collection::vec(0usize..4, 4..80), f in 0.05f64..0.95, seed in any::<u64>()) {
        let n = labels.len();
        let x = DenseMatrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let ds = Dataset::new(x, labels.clone(), 4, None, Split::Train).unwrap();
        let (tr, va) = split_train_val(&ds, f, &mut RngStream::new(seed, 10)).unwrap();
        prop_assert_eq!(va.len(), (n as f64 * f).round() as usize);
        let mut ids: Vec<usize> = tr.features.data().iter().chain(va.features.data()).map(|&v| v as usize).collect();
        ids.sort();
        prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
        for (set, d) in [(&tr, &tr.labels), (&va, &va.labels)] {
            for (row, &l) in set.features.iter_rows().zip(d) {
                prop_assert_eq!(labels[row[0] as usize], l);
            }
        }
    }
}
