//! Property-based invariants for the statistics, metrics, and standardizer.

use fraudkit::linalg::Matrix;
use fraudkit::metrics::{auc_prc, auc_roc, pr_curve, roc_curve};
use fraudkit::pipeline::{first_order_stats, Standardizer};
use proptest::prelude::*;

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 1..64)
}

fn scored_labels() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0.0..1.0f64, any::<bool>()), 4..128).prop_filter(
        "needs both classes",
        |v| v.iter().any(|&(_, y)| y) && v.iter().any(|&(_, y)| !y),
    )
}

proptest! {
    #[test]
    fn stats_are_permutation_invariant(v in values(), seed in any::<u64>()) {
        let mut shuffled = v.clone();
        // deterministic Fisher-Yates driven by the seed
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let a = first_order_stats(&v);
        let b = first_order_stats(&shuffled);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn stats_respect_order_bounds(v in values()) {
        let s = first_order_stats(&v);
        prop_assert!(s[5] <= s[0] + 1e-9 && s[0] <= s[4] + 1e-9); // min <= mean <= max
        prop_assert!(s[2] >= 0.0); // variance
        prop_assert!((s[1] * s[1] - s[2]).abs() <= 1e-6 * (1.0 + s[2]));
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms(data in scored_labels()) {
        let scores: Vec<f64> = data.iter().map(|&(s, _)| s).collect();
        let labels: Vec<f64> = data.iter().map(|&(_, y)| f64::from(y)).collect();
        // strictly increasing map; ranking (and hence both AUCs) unchanged
        let squashed: Vec<f64> = scores.iter().map(|s| 0.25 + s / (2.0 * (1.0 + s))).collect();
        let r1 = auc_roc(&roc_curve(&scores, &labels).unwrap());
        let r2 = auc_roc(&roc_curve(&squashed, &labels).unwrap());
        prop_assert!((r1 - r2).abs() <= 1e-12);
        let p1 = auc_prc(&pr_curve(&scores, &labels).unwrap());
        let p2 = auc_prc(&pr_curve(&squashed, &labels).unwrap());
        prop_assert!((p1 - p2).abs() <= 1e-12);
    }

    #[test]
    fn standardizer_round_trips(rows in prop::collection::vec(
        prop::collection::vec(-1e3..1e3f64, 3), 2..40,
    )) {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = Matrix::from_vec(n, 3, flat).unwrap();
        let std = Standardizer::fit(&m).unwrap();
        for row in &rows {
            let mut z = row.clone();
            std.apply_row(&mut z);
            std.invert_row(&mut z);
            for (a, b) in z.iter().zip(row) {
                prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
            }
        }
    }
}
