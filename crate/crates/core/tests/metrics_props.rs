mod common;

use common::recall_oracle::{brute_force_recall, random_case};
use common::rng;
use fan_core::metrics::{relation_recall, top_k_pairs, word_importance};
use fan_core::numeric::softmax_matrix;
use proptest::prelude::*;

#[test]
fn recall_matches_brute_force() {
    let mut r = rng(8);
    let (mut partial, mut full) = (0, 0);
    for case_id in 0..300 {
        let c = random_case(&mut r);
        let n = c.entities.len();
        let max_k = (n * (n.saturating_sub(1)) / 2).max(1) + 1;
        let pairs = top_k_pairs(&c.focus, max_k, false).unwrap();
        for k in 1..=max_k {
            let got = relation_recall(&pairs, &c.entities, &c.gt, &c.relations, k).unwrap();
            let want = brute_force_recall(&c.focus, c.entities.boxes().unwrap(), &c.gt, &c.relations, k);
            assert_eq!(got, want, "case {case_id}, k={k}");
            partial += usize::from(got.matched > 0 && got.matched < got.total);
            full += usize::from(got.total > 0 && got.matched == got.total);
        }
    }
    // The generator must exercise both outcomes for the comparison to mean anything.
    assert!(partial > 20 && full > 20, "partial={partial} full={full}");
}

#[test]
fn recall_is_non_decreasing_in_k() {
    let mut r = rng(9);
    for _ in 0..200 {
        let c = random_case(&mut r);
        let pairs = top_k_pairs(&c.focus, 20, false).unwrap();
        let mut last = 0.0;
        for k in 1..=20 {
            let v = relation_recall(&pairs, &c.entities, &c.gt, &c.relations, k).unwrap().value();
            assert!(v >= last || c.relations.iter().all(|x| x.subject == x.object));
            last = v;
        }
    }
}

#[test]
fn top_k_is_reproducible_under_ties() {
    let mut r = rng(10);
    for _ in 0..50 {
        let c = random_case(&mut r);
        let a = top_k_pairs(&c.focus, 10, false).unwrap();
        let b = top_k_pairs(&c.focus.clone(), 10, false).unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn word_importance_sums_to_one(seed in any::<u64>(), n in 1usize..9) {
        let mut r = rng(seed);
        let logits = common::random_matrix(n, n, 4.0, &mut r);
        let beta = word_importance(&softmax_matrix(&logits));
        prop_assert_eq!(beta.len(), n);
        prop_assert!((beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unordered_proposals_are_distinct_pairs(seed in any::<u64>(), n in 2usize..8, k in 1usize..40) {
        let mut r = rng(seed);
        let w = softmax_matrix(&common::random_matrix(n, n, 2.0, &mut r));
        let pairs = top_k_pairs(&w, k, false).unwrap();
        prop_assert_eq!(pairs.len(), k.min(n * (n - 1) / 2));
        let mut seen = std::collections::BTreeSet::new();
        for p in &pairs {
            prop_assert!(p.subject != p.object);
            prop_assert!(seen.insert((p.subject.min(p.object), p.subject.max(p.object))));
        }
        for w2 in pairs.windows(2) {
            prop_assert!(w2[0].weight >= w2[1].weight);
        }
    }
}
