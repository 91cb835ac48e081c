mod common;

use common::{random_matrix, rel_err, rng};
use fan_core::attention::{
    aggregate, attention_logits, backward, forward, forward_with_axis, AggAxis, AttentionParams,
    EntitySet,
};
use fan_core::numeric::{softmax_cols, softmax_rows, softmax_rows_backward, RealMatrix};
use proptest::prelude::*;

fn setup(seed: u64, n: usize, d: usize, d_k: usize) -> (EntitySet, AttentionParams, RealMatrix) {
    let mut r = rng(seed);
    let f = random_matrix(n, d, 1.0, &mut r);
    let params = AttentionParams::new(random_matrix(d_k, d, 1.0, &mut r), random_matrix(d_k, d, 1.0, &mut r)).unwrap();
    let g = random_matrix(n, n, 1.0, &mut r);
    (EntitySet::new(f), params, g)
}

// A nonlinear scalar of the logits so the check exercises curvature.
fn probe_loss(entities: &EntitySet, params: &AttentionParams, g: &RealMatrix) -> f64 {
    let w = attention_logits(entities, params).unwrap();
    softmax_rows(&w).hadamard(g).unwrap().sum()
}

fn perturb(m: &RealMatrix, idx: usize, delta: f64) -> RealMatrix {
    let mut data = m.data().to_vec();
    data[idx] += delta;
    RealMatrix::new(m.rows(), m.cols(), data).unwrap()
}

#[test]
fn backward_matches_finite_differences() {
    let step = 1e-5;
    let mut worst = 0.0_f64;
    for seed in 0..20 {
        let (ent, params, g) = setup(seed, 4, 3, 2);
        let state = forward(&ent, &params).unwrap();
        let d_logits = softmax_rows_backward(&state.agg_weights, &g).unwrap();
        let grads = backward(&state, &d_logits, &ent, &params).unwrap();

        for i in 0..params.w_k.data().len() {
            let plus = AttentionParams::new(perturb(&params.w_k, i, step), params.w_q.clone()).unwrap();
            let minus = AttentionParams::new(perturb(&params.w_k, i, -step), params.w_q.clone()).unwrap();
            let num = (probe_loss(&ent, &plus, &g) - probe_loss(&ent, &minus, &g)) / (2.0 * step);
            worst = worst.max(rel_err(grads.w_k.data()[i], num, 1e-8));
        }
        for i in 0..params.w_q.data().len() {
            let plus = AttentionParams::new(params.w_k.clone(), perturb(&params.w_q, i, step)).unwrap();
            let minus = AttentionParams::new(params.w_k.clone(), perturb(&params.w_q, i, -step)).unwrap();
            let num = (probe_loss(&ent, &plus, &g) - probe_loss(&ent, &minus, &g)) / (2.0 * step);
            worst = worst.max(rel_err(grads.w_q.data()[i], num, 1e-8));
        }
        let f = ent.features();
        for i in 0..f.data().len() {
            let plus = EntitySet::new(perturb(f, i, step));
            let minus = EntitySet::new(perturb(f, i, -step));
            let num = (probe_loss(&plus, &params, &g) - probe_loss(&minus, &params, &g)) / (2.0 * step);
            worst = worst.max(rel_err(grads.features.data()[i], num, 1e-8));
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn scaling_both_projections_scales_logits_quadratically() {
    let (ent, params, _) = setup(3, 5, 4, 3);
    let base = attention_logits(&ent, &params).unwrap();
    let c = 1.7;
    let scaled = AttentionParams::new(params.w_k.scale(c), params.w_q.scale(c)).unwrap();
    let w = attention_logits(&ent, &scaled).unwrap();
    for (a, b) in w.data().iter().zip(base.data()) {
        assert!((a - c * c * b).abs() < 1e-12);
    }
}

#[test]
fn column_axis_normalizes_columns() {
    let (ent, params, _) = setup(9, 5, 3, 2);
    let s = forward_with_axis(&ent, &params, AggAxis::Col).unwrap();
    for v in s.agg_weights.col_sums() {
        assert!((v - 1.0).abs() < 1e-12);
    }
    assert_eq!(s.agg_weights, softmax_cols(&s.logits));
}

fn perm_strategy() -> impl Strategy<Value = (u64, Vec<usize>)> {
    (2usize..7).prop_flat_map(|n| (any::<u64>(), Just((0..n).collect::<Vec<_>>()).prop_shuffle()))
}

proptest! {
    #[test]
    fn permutation_equivariance((seed, perm) in perm_strategy()) {
        let n = perm.len();
        let (ent, params, _) = setup(seed, n, 3, 2);
        let s = forward(&ent, &params).unwrap();
        let pe = ent.permuted(&perm);
        let ps = forward(&pe, &params).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                prop_assert!((ps.logits.get(i, j) - s.logits.get(pi, pj)).abs() < 1e-12);
            }
        }
        let out = aggregate(&s, ent.features()).unwrap();
        let pout = aggregate(&ps, pe.features()).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for c in 0..3 {
                prop_assert!((pout.get(i, c) - out.get(pi, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_positive_and_aggregate_in_hull(seed in any::<u64>(), n in 1usize..8) {
        let (ent, params, _) = setup(seed, n, 4, 3);
        let s = forward(&ent, &params).unwrap();
        prop_assert!(s.agg_weights.data().iter().all(|&v| v > 0.0));
        prop_assert!(s.focus_weights.data().iter().all(|&v| v > 0.0));
        let f = ent.features();
        let out = aggregate(&s, f).unwrap();
        for c in 0..f.cols() {
            let col: Vec<f64> = (0..n).map(|r| f.get(r, c)).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for r in 0..n {
                let v = out.get(r, c);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
