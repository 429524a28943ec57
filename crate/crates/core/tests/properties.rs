//! Property-based invariants for the measure and weight machinery.

use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;

use mfglab::measures::{self, Method};
use mfglab::model::MeasureSummary;

fn summary(points: &[f64]) -> MeasureSummary {
    let arr = Array2::from_shape_vec((points.len(), 1), points.to_vec()).unwrap();
    MeasureSummary::from_points(Arc::new(arr), &[1.0, 2.0]).unwrap()
}

fn atom_set() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(192))]

    #[test]
    fn triangle_inequality_in_the_exact_regime(
        a in atom_set(),
        b in atom_set(),
        c in atom_set(),
        r in prop::sample::select(vec![1.0, 2.0]),
    ) {
        let (ma, mb, mc) = (summary(&a), summary(&b), summary(&c));
        let ab = measures::wasserstein(&ma, &mb, r).unwrap().value;
        let bc = measures::wasserstein(&mb, &mc, r).unwrap().value;
        let ac = measures::wasserstein(&ma, &mc, r).unwrap().value;
        prop_assert!(ac <= ab + bc + 1e-9, "W_{r}: {ac} > {ab} + {bc}");
    }

    #[test]
    fn translation_moves_w1_by_the_shift(a in atom_set(), shift in -20.0..20.0f64) {
        let m = summary(&a);
        let shifted: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let d = measures::wasserstein(&m, &summary(&shifted), 1.0).unwrap();
        prop_assert!((d.value - shift.abs()).abs() < 1e-9);
        prop_assert_eq!(d.method, Method::Exact);
    }

    #[test]
    fn lp_is_below_the_monotone_coupling_for_truncated_cost(
        a in prop::collection::vec(-5.0..5.0f64, 1..10),
        b in prop::collection::vec(-5.0..5.0f64, 1..10),
    ) {
        // W_0 via the LP versus the feasible quantile coupling
        let ma = summary(&a);
        let mb = summary(&b);
        let lp = measures::wasserstein(&ma, &mb, 0.0).unwrap();
        prop_assert_eq!(lp.method, Method::Exact);
        // quantile coupling cost under 1 ^ |x - y|
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (mut i, mut j) = (0usize, 0usize);
        let (mut ra, mut rb) = (1.0 / sa.len() as f64, 1.0 / sb.len() as f64);
        let mut monotone = 0.0;
        loop {
            let m = ra.min(rb);
            monotone += m * (sa[i] - sb[j]).abs().min(1.0);
            ra -= m;
            rb -= m;
            if ra <= 1e-15 {
                i += 1;
                if i >= sa.len() { break; }
                ra = 1.0 / sa.len() as f64;
            }
            if rb <= 1e-15 {
                j += 1;
                if j >= sb.len() { break; }
                rb = 1.0 / sb.len() as f64;
            }
        }
        prop_assert!(lp.value <= monotone + 1e-9, "lp {} > monotone {}", lp.value, monotone);
    }

    #[test]
    fn lp_matches_the_quantile_coupling_for_w1(
        a in prop::collection::vec(-5.0..5.0f64, 1..8),
        b in prop::collection::vec(-5.0..5.0f64, 1..8),
    ) {
        // for convex cost the two independent routes must agree exactly
        let ma = summary(&a);
        let mb = summary(&b);
        let sorted = measures::wasserstein(&ma, &mb, 1.0).unwrap().value;
        let lp = measures::wasserstein(&ma, &mb, 0.9999999).unwrap().value;
        // r slightly below one forces the LP route with cost ~ |x-y|
        prop_assert!((sorted - lp).abs() < 1e-4, "sorted {sorted} vs lp {lp}");
    }

    #[test]
    fn weight_paths_stay_positive(
        xi in prop::collection::vec(-8.0..8.0f64, 1..30),
        dw in prop::collection::vec(-0.9..0.9f64, 30),
    ) {
        let steps = xi.len();
        let xi_arr = Array2::from_shape_vec((steps, 1), xi).unwrap();
        let dw_arr = Array2::from_shape_vec((steps, 1), dw[..steps].to_vec()).unwrap();
        let w = mfglab::girsanov::zeta_process(&xi_arr, dw_arr.view(), 0.05).unwrap();
        prop_assert_eq!(w.log_zeta[0], 0.0);
        for z in w.zeta_path() {
            prop_assert!(z > 0.0 && z.is_finite());
        }
    }

    #[test]
    fn measure_mass_is_preserved_under_augmentation(
        pts in atom_set(),
        x in -10.0..10.0f64,
        w in 0.0..1.0f64,
    ) {
        let m = summary(&pts).with_atom(&[x], w);
        prop_assert!((m.total_weight() - 1.0).abs() < 1e-12);
        prop_assert!(m.moment(2.0) >= 0.0);
    }
}
