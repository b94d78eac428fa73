//! Randomized property tests for the exact-arithmetic building blocks:
//! bitstrings, rational helpers, and finite-distribution algebra.

use num::{One, Signed, Zero};
use proptest::prelude::*;
use sfe_core::prob::{
    condition, key, product, statistical_distance, statistical_distance_joint,
    FiniteDistribution, JointDistribution,
};
use sfe_core::ratio::{cmp_vs_root, parse_ratio, pow, rat, ratio_str};
use sfe_core::{Bits, Rational};

/// Distribution over a fixed 4-outcome alphabet from random non-negative
/// weights (at least one positive).
fn dist_strategy() -> impl Strategy<Value = FiniteDistribution> {
    proptest::collection::vec(0i64..20, 4)
        .prop_filter("needs positive total", |w| w.iter().sum::<i64>() > 0)
        .prop_map(|w| {
            let total: i64 = w.iter().sum();
            FiniteDistribution::from_pairs(
                ["a", "b", "c", "d"]
                    .iter()
                    .zip(&w)
                    .map(|(o, wi)| (key(o), rat(*wi, total))),
            )
            .unwrap()
        })
}

fn joint_strategy() -> impl Strategy<Value = JointDistribution> {
    proptest::collection::vec(0i64..20, 9)
        .prop_filter("needs positive total", |w| w.iter().sum::<i64>() > 0)
        .prop_map(|w| {
            let total: i64 = w.iter().sum();
            let mut pairs = Vec::new();
            for (i, l) in ["a", "b", "c"].iter().enumerate() {
                for (j, r) in ["u", "v", "w"].iter().enumerate() {
                    pairs.push(((key(l), key(r)), rat(w[i * 3 + j], total)));
                }
            }
            JointDistribution::from_pairs(pairs).unwrap()
        })
}

fn rational_strategy() -> impl Strategy<Value = Rational> {
    (0i64..1000, 1i64..1000).prop_map(|(n, d)| rat(n, d))
}

proptest! {
    #[test]
    fn bits_round_trip(value in 0u64..1024, extra in 0usize..6) {
        let width = 10 + extra;
        let b = Bits::from_u64(value, width);
        prop_assert_eq!(b.width(), width);
        prop_assert_eq!(b.to_u64(), value);
    }

    #[test]
    fn bits_concat_slices_back(a in 0u64..64, b in 0u64..64) {
        let (wa, wb) = (6, 6);
        let ba = Bits::from_u64(a, wa);
        let bb = Bits::from_u64(b, wb);
        let c = Bits::concat(&[ba.clone(), bb.clone()]);
        prop_assert_eq!(c.width(), wa + wb);
        prop_assert_eq!(c.slice(0, wa - 1), ba);
        prop_assert_eq!(c.slice(wa, wa + wb - 1), bb);
    }

    #[test]
    fn ratio_string_round_trip(r in rational_strategy()) {
        prop_assert_eq!(parse_ratio(&ratio_str(&r)), Some(r));
    }

    #[test]
    fn root_comparison_matches_equal_base(a in rational_strategy(), b in rational_strategy(), t in 1u32..6) {
        // With base 1 the t-th power comparison is just the direct order.
        prop_assert_eq!(cmp_vs_root(&a, &b, &Rational::one(), t), a.cmp(&b));
    }

    #[test]
    fn power_is_multiplicative(r in rational_strategy(), s in 0u32..5, t in 0u32..5) {
        prop_assert_eq!(pow(&r, s + t), pow(&r, s) * pow(&r, t));
    }

    #[test]
    fn statistical_distance_is_a_metric_within_bounds(
        p in dist_strategy(),
        q in dist_strategy(),
        r in dist_strategy(),
    ) {
        let pq = statistical_distance(&p, &q);
        prop_assert!(!pq.is_negative() && pq <= Rational::one());
        prop_assert_eq!(&pq, &statistical_distance(&q, &p));
        prop_assert_eq!(pq.is_zero(), p == q);
        let pr = statistical_distance(&p, &r);
        let rq = statistical_distance(&r, &q);
        prop_assert!(pq <= pr + rq, "triangle inequality");
    }

    #[test]
    fn conditioning_restricts_and_normalizes(p in dist_strategy()) {
        let event = |k: &Vec<u8>| k == &key("a") || k == &key("b");
        if p.event_mass(event).is_positive() {
            let c = condition(&p, event).unwrap();
            let total: Rational = c.iter().map(|(_, m)| m.clone()).sum();
            prop_assert!(total.is_one());
            prop_assert!(c.support().all(|k| event(k)));
        }
    }

    #[test]
    fn product_marginals_recover_factors(p in dist_strategy(), q in dist_strategy()) {
        let j = product(&p, &q);
        prop_assert_eq!(j.marginal_left(), p);
        prop_assert_eq!(j.marginal_right(), q);
    }

    #[test]
    fn joint_is_at_least_as_far_from_any_product_as_sd_of_marginals(
        j in joint_strategy(),
        u in dist_strategy(),
    ) {
        // Data-processing: projecting to the left marginal cannot increase
        // statistical distance.
        let u3 = FiniteDistribution::from_pairs(
            [("a", u.mass(&key("a"))), ("b", u.mass(&key("b"))),
             ("c", u.mass(&key("c")) + u.mass(&key("d")))]
            .into_iter()
            .map(|(k, m)| (key(k), m)),
        )
        .unwrap();
        let v = j.marginal_right();
        let dist_joint = statistical_distance_joint(&j, &product(&u3, &v));
        let dist_left = statistical_distance(&j.marginal_left(), &u3);
        prop_assert!(dist_left <= dist_joint);
    }
}
