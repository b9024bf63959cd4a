mod common;

use std::collections::BTreeSet;

use cream_core::harness::{recall_at_k, success_at_k};
use cream_core::lshproto::{sufficient_bits, ClusterPrototype, LshFamily};
use cream_core::sampler::cluster_quotas;
use cream_core::simkernel::{maxsim, ItemKind};
use cream_core::softmem::{retained_query_count, ClusterSummary};
use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn maxsim_ignores_document_row_order(seed in any::<u64>(), n in 1usize..10, m in 1usize..10, d in 1usize..20) {
        let mut rng = rng(seed);
        let q = unit_rows(&mut rng, n, d);
        let mut x = unit_rows(&mut rng, m, d);
        let before = maxsim(&matrix(&q), &matrix(&x)).unwrap();
        x.shuffle(&mut rng);
        let after = maxsim(&matrix(&q), &matrix(&x)).unwrap();
        prop_assert!((before - after).abs() < 1e-12);
        prop_assert!((before - brute_maxsim(&q, &x)).abs() < 1e-10);
    }

    #[test]
    fn maxsim_grows_with_document_rows(seed in any::<u64>(), n in 1usize..10, m in 1usize..10, extra in 1usize..5) {
        let mut rng = rng(seed);
        let q = unit_rows(&mut rng, n, 12);
        let x = unit_rows(&mut rng, m, 12);
        let mut sup = x.clone();
        sup.extend(unit_rows(&mut rng, extra, 12));
        let a = maxsim(&matrix(&q), &matrix(&x)).unwrap();
        let b = maxsim(&matrix(&q), &matrix(&sup)).unwrap();
        prop_assert!(b >= a - 1e-12);
        prop_assert!(a <= n as f64 + 1e-9 && a >= -(n as f64) - 1e-9);
    }

    #[test]
    fn summary_matches_the_multiset(xs in prop::collection::vec(0.0f64..128.0, 1..200), drop in 0usize..200) {
        let s = xs.iter().fold(ClusterSummary::default(), |s, &x| s.add(x));
        let (m, sd) = mean_std(&xs);
        prop_assert!((s.mean() - m).abs() < 1e-9 && (s.std() - sd).abs() < 1e-9);
        let direct = ClusterSummary::from_distances(&xs);
        prop_assert!((direct.mean() - m).abs() < 1e-9 && (direct.std() - sd).abs() < 1e-9);

        let k = drop.min(xs.len() - 1);
        let mut s = s;
        for x in &xs[..k] {
            s = s.remove(*x).unwrap();
        }
        // The variance left after removals is a difference of the full sums,
        // so its error scales with them rather than with what remains.
        let (m, sd) = mean_std(&xs[k..]);
        let ss_all: f64 = xs.iter().map(|x| x * x).sum();
        let var_tol = 1e-12 * ss_all / (xs.len() - k) as f64;
        prop_assert!((s.mean() - m).abs() < 1e-9);
        prop_assert!((s.std() * s.std() - sd * sd).abs() <= var_tol);
        if k + 1 == xs.len() {
            prop_assert_eq!(s.std(), 0.0);
        }
    }

    #[test]
    fn prototype_ignores_insertion_order(seed in any::<u64>(), count in 1usize..25, bits in 0u32..14) {
        let mut rng = rng(seed);
        let fam = LshFamily::new(bits, 10, seed).unwrap();
        let mut items: Vec<_> = (0..count)
            .map(|i| item(&format!("i{i}"), ItemKind::Document, &unit_rows(&mut rng, 1 + i % 5, 10)))
            .collect();
        let a = ClusterPrototype::from_items(&items, &fam).unwrap();
        items.shuffle(&mut rng);
        let b = ClusterPrototype::from_items(&items, &fam).unwrap();
        let (sa, ca) = a.to_dense(&fam);
        let (sb, cb) = b.to_dense(&fam);
        prop_assert_eq!(ca, cb);
        for (x, y) in sa.as_slice().iter().zip(sb.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_agree_with_set_intersection(
        ranked in prop::collection::vec(0u8..30, 0..20),
        relevant in prop::collection::btree_set(0u8..30, 1..6),
        k in 1usize..15,
    ) {
        let mut seen = BTreeSet::new();
        let ranked: Vec<String> = ranked.into_iter().filter(|r| seen.insert(*r)).map(|r| r.to_string()).collect();
        let rel: BTreeSet<String> = relevant.iter().map(|r| r.to_string()).collect();
        let top: BTreeSet<String> = ranked.iter().take(k).cloned().collect();
        let hits = top.intersection(&rel).count();
        prop_assert_eq!(success_at_k(&ranked, &rel, k), Some(if hits > 0 { 1.0 } else { 0.0 }));
        prop_assert_eq!(recall_at_k(&ranked, &rel, k), Some(hits as f64 / rel.len() as f64));
    }

    #[test]
    fn retained_queries_stay_in_range(q in 0usize..50, before in 1usize..50, after_frac in 0.0f64..=1.0) {
        let after = (before as f64 * after_frac).floor() as usize;
        let kept = retained_query_count(q, before, after);
        prop_assert!(kept <= q);
        if after == 0 {
            prop_assert_eq!(kept, 0);
        } else if q > 0 {
            prop_assert!(kept >= 1);
        }
        if after == before {
            prop_assert_eq!(kept, q);
        }
    }

    #[test]
    fn quotas_respect_cluster_sizes(
        budget in 0usize..300,
        shape in prop::collection::vec((0usize..40, 0usize..40), 1..10),
    ) {
        let quotas = cluster_quotas(budget, &shape);
        prop_assert_eq!(quotas.len(), shape.len());
        let usable: usize = shape.iter().filter(|(d, _)| *d > 0).map(|(_, q)| q).sum();
        for (quota, (d, q)) in quotas.iter().zip(&shape) {
            prop_assert!(quota <= q);
            if *d == 0 {
                prop_assert_eq!(*quota, 0);
            }
        }
        // Per-cluster half-up rounding may overshoot by at most half a
        // query per cluster; clamping never leaves budget unspent.
        let total = quotas.iter().sum::<usize>();
        let with_docs = shape.iter().filter(|(d, _)| *d > 0).count();
        prop_assert!(total >= budget.min(usable));
        prop_assert!(total <= (budget + with_docs / 2).min(usable));
    }

    #[test]
    fn bit_count_is_monotone(tokens in 2u64..1_000_000_000, eps in 0.01f64..0.33) {
        let base = sufficient_bits(tokens, eps).unwrap();
        prop_assert!(sufficient_bits(tokens.saturating_mul(2), eps).unwrap().bits >= base.bits);
        prop_assert!(sufficient_bits(tokens, eps * 0.9).unwrap().bits >= base.bits);
        prop_assert_eq!(base.buckets, 1u64 << base.bits);
    }
}
