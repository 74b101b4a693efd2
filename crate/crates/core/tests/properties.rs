//! Property tests for the evaluator and ledger invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use causal_evolve::archive::{Archive, ProgramRecord, RecordSource};
use causal_evolve::factor_ledger::{estimate_ate, AteOutcome};
use causal_evolve::tasks::hadamard::exact_det;
use causal_evolve::tasks::{autocorr, TaskId};

fn pm1_matrix(max_n: usize) -> impl Strategy<Value = Vec<Vec<i8>>> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(
            proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n),
            n,
        )
    })
}

fn step_function(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.0..4.0f64, n).prop_map(|mut v| {
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
            v
        })
    })
}

proptest! {
    #[test]
    fn det_invariant_under_row_swap_up_to_sign(m in pm1_matrix(6), swap in any::<(usize, usize)>()) {
        let n = m.len();
        let (i, j) = (swap.0 % n, swap.1 % n);
        let base = exact_det(&m).unwrap();
        let mut swapped = m.clone();
        swapped.swap(i, j);
        let got = exact_det(&swapped).unwrap();
        if i == j {
            prop_assert_eq!(got, base);
        } else {
            prop_assert_eq!(got, -base);
        }
    }

    #[test]
    fn abs_det_invariant_under_row_negation(m in pm1_matrix(6), row in any::<usize>()) {
        use num_traits::Signed;
        let n = m.len();
        let base = exact_det(&m).unwrap();
        let mut negated = m.clone();
        for v in &mut negated[row % n] {
            *v = -*v;
        }
        prop_assert_eq!(exact_det(&negated).unwrap().abs(), base.abs());
    }

    #[test]
    fn hadamard_inequality_holds(m in pm1_matrix(6)) {
        use num_traits::ToPrimitive;
        use num_traits::Signed;
        let n = m.len() as f64;
        let det = exact_det(&m).unwrap().abs().to_f64().unwrap();
        prop_assert!(det <= n.powf(n / 2.0) + 1e-9);
    }

    #[test]
    fn autocorr_ratio_in_unit_interval(f in step_function(48)) {
        let r = autocorr::ratio(&f).unwrap();
        prop_assert!(r > 0.0 && r <= 1.0 + 1e-12, "R = {}", r);
    }

    #[test]
    fn autocorr_ratio_scale_and_reflect_invariant(f in step_function(32), c in 0.01..50.0f64) {
        let r = autocorr::ratio(&f).unwrap();
        let scaled: Vec<f64> = f.iter().map(|v| v * c).collect();
        prop_assert!((autocorr::ratio(&scaled).unwrap() - r).abs() <= 1e-12);
        let reflected: Vec<f64> = f.iter().rev().cloned().collect();
        prop_assert!((autocorr::ratio(&reflected).unwrap() - r).abs() <= 1e-12);
    }

    #[test]
    fn ate_order_preserved_under_positive_affine(
        scores in proptest::collection::vec(0.0..1.0f64, 12..30),
        flags_a in proptest::collection::vec(any::<bool>(), 30),
        flags_b in proptest::collection::vec(any::<bool>(), 30),
        alpha in 0.01..10.0f64,
        beta in -5.0..5.0f64,
    ) {
        let records: Vec<ProgramRecord> = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| {
                let mut factor_flags = BTreeMap::new();
                factor_flags.insert("a".to_string(), flags_a[i]);
                factor_flags.insert("b".to_string(), flags_b[i]);
                ProgramRecord {
                    id: i as u64,
                    parent_id: None,
                    generation: i as u64,
                    payload: None,
                    source: RecordSource::Direct,
                    score,
                    valid: true,
                    metrics: BTreeMap::new(),
                    factor_flags,
                    action_used: None,
                    violation: None,
                    wall_time_ms: 0,
                }
            })
            .collect();
        let ate = |recs: &[ProgramRecord], f: &str| match estimate_ate(recs, f, 1, 0) {
            AteOutcome::Estimate(e) => Some(e.ate),
            AteOutcome::InsufficientContrast { .. } => None,
        };
        if let (Some(a0), Some(b0)) = (ate(&records, "a"), ate(&records, "b")) {
            let mut transformed = records.clone();
            for r in &mut transformed {
                r.score = alpha * r.score + beta;
            }
            let a1 = ate(&transformed, "a").unwrap();
            let b1 = ate(&transformed, "b").unwrap();
            // Strict order must be preserved outside float noise.
            if (a0 - b0).abs() > 1e-9 {
                prop_assert_eq!(a0 < b0, a1 < b1);
            }
        }
    }

    #[test]
    fn archive_snapshot_round_trip_is_lossless(
        scores in proptest::collection::vec(0.0..1.0f64, 1..20),
        metric in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 20),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        let mut archive = Archive::new("prop", TaskId::Autocorr);
        for (i, &score) in scores.iter().enumerate() {
            let mut metrics = BTreeMap::new();
            metrics.insert("entropy".to_string(), metric[i]);
            archive
                .append_record(ProgramRecord {
                    id: i as u64,
                    parent_id: if i > 0 { Some(0) } else { None },
                    generation: i as u64,
                    payload: None,
                    source: RecordSource::Direct,
                    score,
                    valid: i % 4 != 3,
                    metrics,
                    factor_flags: BTreeMap::new(),
                    action_used: None,
                    violation: None,
                    wall_time_ms: i as u64,
                })
                .unwrap();
        }
        archive.save_snapshot(&path).unwrap();
        let loaded = Archive::load_snapshot(&path).unwrap();
        // Bit-exact: every field, including the f64s, survives the trip.
        prop_assert_eq!(archive.records(), loaded.records());
        prop_assert_eq!(archive.best_so_far(), loaded.best_so_far());
    }
}
