use proptest::prelude::*;

use epl_core::diagnostics::{kendall_distance, normalized_kendall, summarize_posterior};
use epl_core::model::{epl_log_prob, pl_log_prob, SupportParams};
use epl_core::perm::{
    applicable_swaps, is_constrained, ordering_to_ranking, ranking_to_ordering,
    reference_order_from_index, Ordering, ReferenceOrder, TopBottomCode,
};
use epl_core::sampler::Sample;

fn permutation(max_k: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=max_k).prop_flat_map(|k| Just((0..k).collect::<Vec<_>>()).prop_shuffle())
}

fn constrained(max_k: usize) -> impl Strategy<Value = ReferenceOrder> {
    (1..=max_k)
        .prop_flat_map(|k| (Just(k), 0..1usize << (k - 1)))
        .prop_map(|(k, i)| reference_order_from_index(k, i).unwrap())
}

fn weights(k: usize) -> impl Strategy<Value = SupportParams> {
    prop::collection::vec(0.01f64..10.0, k).prop_map(|v| SupportParams::new(v).unwrap())
}

proptest! {
    #[test]
    fn code_round_trips(rho in constrained(16)) {
        let code = TopBottomCode::from_w(rho.code().w().to_vec()).unwrap();
        prop_assert_eq!(ReferenceOrder::from_code(code), rho.clone());
        prop_assert_eq!(ReferenceOrder::from_bits(&rho.bits()).unwrap(), rho.clone());
        let f = rho.code().f();
        let b = rho.code().b();
        for t in 0..rho.len() {
            prop_assert_eq!(f[t] + b[t], t);
        }
    }

    #[test]
    fn membership_matches_construction(ranks in permutation(8)) {
        let built = ReferenceOrder::new(ranks.clone());
        prop_assert_eq!(built.is_ok(), is_constrained(&ranks));
    }

    #[test]
    fn swaps_stay_in_space_and_invert(rho in constrained(10)) {
        for t in applicable_swaps(&rho) {
            let next = rho.swapped(t).expect("applicable swap");
            prop_assert!(is_constrained(next.ranks()));
            prop_assert_ne!(&next, &rho);
            prop_assert!(applicable_swaps(&next).contains(&t));
            prop_assert_eq!(next.swapped(t).unwrap(), rho.clone());
        }
    }

    #[test]
    fn ranking_ordering_inverse(v in permutation(9)) {
        let o = Ordering::new(v).unwrap();
        let r = ordering_to_ranking(&o);
        prop_assert_eq!(ranking_to_ordering(&r), o.clone());
        for (rank, &item) in o.as_slice().iter().enumerate() {
            prop_assert_eq!(r.as_slice()[item], rank);
        }
    }

    #[test]
    fn kendall_is_a_bounded_metric(
        (a, b) in (2usize..9).prop_flat_map(|k| {
            let base: Vec<usize> = (0..k).collect();
            (Just(base.clone()).prop_shuffle(), Just(base).prop_shuffle())
        })
    ) {
        let d = normalized_kendall(&a, &b).unwrap();
        prop_assert_eq!(d, normalized_kendall(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d == 0.0, a == b);
        prop_assert_eq!(kendall_distance(&a, &a).unwrap(), 0);
    }

    #[test]
    fn epl_is_scale_invariant(
        (rho, o, p) in (2usize..8).prop_flat_map(|k| (
            (0..1usize << (k - 1)).prop_map(move |i| reference_order_from_index(k, i).unwrap()),
            Just((0..k).collect::<Vec<_>>()).prop_shuffle(),
            weights(k),
        )),
        scale in 0.001f64..1000.0,
    ) {
        let o = Ordering::new(o).unwrap();
        let a = epl_log_prob(&o, &rho, &p).unwrap();
        let b = epl_log_prob(&o, &rho, &p.scaled(scale).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        prop_assert!(a <= 0.0);
    }

    #[test]
    fn forward_order_is_plackett_luce(
        (o, p) in (2usize..8).prop_flat_map(|k| (Just((0..k).collect::<Vec<_>>()).prop_shuffle(), weights(k)))
    ) {
        let k = o.len();
        let o = Ordering::new(o).unwrap();
        let epl = epl_log_prob(&o, &ReferenceOrder::forward(k), &p).unwrap();
        prop_assert!((epl - pl_log_prob(&o, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn summary_is_a_distribution(codes in prop::collection::vec(0usize..16, 1..60)) {
        let samples: Vec<Sample> = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| Sample {
                iteration: i + 1,
                log_posterior: 0.0,
                rho: reference_order_from_index(5, c).unwrap(),
                p: SupportParams::new(vec![1.0, 2.0, 3.0, 4.0, 5.0 + c as f64]).unwrap(),
            })
            .collect();
        let s = summarize_posterior(&samples).unwrap();
        let total: f64 = s.rho_table.iter().map(|r| r.prob).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(s.rho_table.iter().all(|r| r.prob > 0.0 && r.prob <= s.rho_mode_mass));
        prop_assert!((s.p_mean.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for w in s.rho_table.windows(2) {
            prop_assert!(w[0].prob > w[1].prob || w[0].rho.code_index() < w[1].rho.code_index());
        }
    }
}
