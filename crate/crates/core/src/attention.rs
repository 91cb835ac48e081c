//! Scaled dot-product attention between entities, with the matrix-wise
//! (focus) and row-wise (aggregation) normalizations and exact backward
//! passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::numeric::{
    softmax_cols, softmax_cols_backward, softmax_matrix, softmax_rows, softmax_rows_backward,
    RealMatrix,
};
use crate::supervision::BBox;

/// The vertex set of the attention graph: one embedding row per entity,
/// optionally with boxes and category ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySet {
    features: RealMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boxes: Option<Vec<BBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<usize>>,
}

impl EntitySet {
    pub fn new(features: RealMatrix) -> Self {
        Self {
            features,
            boxes: None,
            categories: None,
        }
    }

    pub fn with_boxes(mut self, boxes: Vec<BBox>) -> Result<Self> {
        if boxes.len() != self.len() {
            return Err(Error::InvalidArgument {
                arg: "boxes",
                reason: format!("expected {} boxes, got {}", self.len(), boxes.len()),
            });
        }
        for b in &boxes {
            b.validate()?;
        }
        self.boxes = Some(boxes);
        Ok(self)
    }

    pub fn with_categories(mut self, categories: Vec<usize>) -> Result<Self> {
        if categories.len() != self.len() {
            return Err(Error::InvalidArgument {
                arg: "categories",
                reason: format!(
                    "expected {} categories, got {}",
                    self.len(),
                    categories.len()
                ),
            });
        }
        self.categories = Some(categories);
        Ok(self)
    }

    /// Re-checks the invariants after deserialization.
    pub fn validate(&self) -> Result<()> {
        if let Some(boxes) = &self.boxes {
            if boxes.len() != self.len() {
                return Err(Error::InvalidArgument {
                    arg: "boxes",
                    reason: format!("expected {} boxes, got {}", self.len(), boxes.len()),
                });
            }
            for b in boxes {
                b.validate()?;
            }
        }
        if let Some(c) = &self.categories {
            if c.len() != self.len() {
                return Err(Error::InvalidArgument {
                    arg: "categories",
                    reason: format!("expected {} categories, got {}", self.len(), c.len()),
                });
            }
        }
        Ok(())
    }

    /// Number of entities.
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &RealMatrix {
        &self.features
    }

    pub fn boxes(&self) -> Option<&[BBox]> {
        self.boxes.as_deref()
    }

    pub fn categories(&self) -> Option<&[usize]> {
        self.categories.as_deref()
    }

    /// Reorders entities so that entity `i` of the result is entity `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            features: self.features.permuted(perm, false),
            boxes: self
                .boxes
                .as_ref()
                .map(|b| perm.iter().map(|&i| b[i]).collect()),
            categories: self
                .categories
                .as_ref()
                .map(|c| perm.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Which index the aggregation softmax normalizes over.
///
/// `Row` makes every row of `W_agg` a distribution, so each aggregated
/// feature is a convex combination of inputs. `Col` normalizes over the
/// first index for a fixed second index instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggAxis {
    #[default]
    Row,
    Col,
}

/// Key and query projections, each `d_k x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_k: RealMatrix,
    pub w_q: RealMatrix,
}

impl AttentionParams {
    pub fn new(w_k: RealMatrix, w_q: RealMatrix) -> Result<Self> {
        if w_k.shape() != w_q.shape() {
            return Err(shape_mismatch("AttentionParams::new", w_k.shape(), w_q.shape()));
        }
        Ok(Self { w_k, w_q })
    }

    /// Draws both projections uniformly from `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn init(d: usize, d_k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let w_k = RealMatrix::from_fn(d_k, d, |_, _| rng.gen_range(-bound..=bound));
        let w_q = RealMatrix::from_fn(d_k, d, |_, _| rng.gen_range(-bound..=bound));
        Self { w_k, w_q }
    }

    pub fn zeros(d: usize, d_k: usize) -> Self {
        Self {
            w_k: RealMatrix::zeros(d_k, d),
            w_q: RealMatrix::zeros(d_k, d),
        }
    }

    pub fn d_k(&self) -> usize {
        self.w_k.rows()
    }

    pub fn d(&self) -> usize {
        self.w_k.cols()
    }
}

/// Everything the forward pass produces, plus what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    pub logits: RealMatrix,
    pub agg_weights: RealMatrix,
    pub focus_weights: RealMatrix,
    pub axis: AggAxis,
    keys: RealMatrix,
    queries: RealMatrix,
}

impl AttentionState {
    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Gradients of a scalar loss w.r.t. the projections and the input features.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub w_k: RealMatrix,
    pub w_q: RealMatrix,
    pub features: RealMatrix,
}

fn check_dims(entities: &EntitySet, params: &AttentionParams) -> Result<()> {
    if entities.dim() != params.d() {
        return Err(Error::ShapeMismatch {
            op: "attention",
            expected: format!("features with {} columns", params.d()),
            found: format!("{}x{}", entities.len(), entities.dim()),
        });
    }
    Ok(())
}

fn project(entities: &EntitySet, params: &AttentionParams) -> Result<(RealMatrix, RealMatrix)> {
    check_dims(entities, params)?;
    let keys = entities.features().matmul_t(&params.w_k)?;
    let queries = entities.features().matmul_t(&params.w_q)?;
    Ok((keys, queries))
}

fn logits_from(keys: &RealMatrix, queries: &RealMatrix) -> Result<RealMatrix> {
    let scale = 1.0 / (keys.cols() as f64).sqrt();
    Ok(keys.matmul_t(queries)?.scale(scale))
}

/// `W[m][n] = <W_K f_m, W_Q f_n> / sqrt(d_k)`.
pub fn attention_logits(entities: &EntitySet, params: &AttentionParams) -> Result<RealMatrix> {
    let (keys, queries) = project(entities, params)?;
    logits_from(&keys, &queries)
}

/// Forward pass with row-wise aggregation weights.
pub fn forward(entities: &EntitySet, params: &AttentionParams) -> Result<AttentionState> {
    forward_with_axis(entities, params, AggAxis::Row)
}

pub fn forward_with_axis(
    entities: &EntitySet,
    params: &AttentionParams,
    axis: AggAxis,
) -> Result<AttentionState> {
    let (keys, queries) = project(entities, params)?;
    let logits = logits_from(&keys, &queries)?;
    let focus_weights = softmax_matrix(&logits);
    let agg_weights = match axis {
        AggAxis::Row => softmax_rows(&logits),
        AggAxis::Col => softmax_cols(&logits),
    };
    Ok(AttentionState {
        logits,
        agg_weights,
        focus_weights,
        axis,
        keys,
        queries,
    })
}

/// Contextual features `F_c = W_agg F`.
pub fn aggregate(state: &AttentionState, features: &RealMatrix) -> Result<RealMatrix> {
    if features.rows() != state.len() {
        return Err(Error::ShapeMismatch {
            op: "aggregate",
            expected: format!("{} rows", state.len()),
            found: format!("{}x{}", features.rows(), features.cols()),
        });
    }
    state.agg_weights.matmul(features)
}

/// `F + F_c`.
pub fn residual_combine(features: &RealMatrix, context: &RealMatrix) -> Result<RealMatrix> {
    features
        .add(context)
        .map_err(|_| shape_mismatch("residual_combine", features.shape(), context.shape()))
}

/// Maps a gradient w.r.t. `W_agg` back to the logits, honoring the axis the
/// aggregation weights were normalized over.
pub fn agg_weights_backward(state: &AttentionState, d_agg: &RealMatrix) -> Result<RealMatrix> {
    match state.axis {
        AggAxis::Row => softmax_rows_backward(&state.agg_weights, d_agg),
        AggAxis::Col => softmax_cols_backward(&state.agg_weights, d_agg),
    }
}

/// Chain rule through the bilinear logits.
///
/// With `K = F W_K^T`, `Q = F W_Q^T` and `W = K Q^T / sqrt(d_k)`:
/// `dK = G Q / s`, `dQ = G^T K / s`, `dW_K = dK^T F`, `dW_Q = dQ^T F` and
/// `dF = dK W_K + dQ W_Q`.
pub fn backward(
    state: &AttentionState,
    d_logits: &RealMatrix,
    entities: &EntitySet,
    params: &AttentionParams,
) -> Result<AttentionGrads> {
    check_dims(entities, params)?;
    if d_logits.shape() != state.logits.shape() {
        return Err(shape_mismatch("attention::backward", state.logits.shape(), d_logits.shape()));
    }
    if entities.len() != state.len() {
        return Err(shape_mismatch(
            "attention::backward",
            state.logits.shape(),
            (entities.len(), entities.len()),
        ));
    }
    let scale = 1.0 / (params.d_k() as f64).sqrt();
    let d_keys = d_logits.matmul(&state.queries)?.scale(scale);
    let d_queries = d_logits.t_matmul(&state.keys)?.scale(scale);
    let f = entities.features();
    Ok(AttentionGrads {
        w_k: d_keys.t_matmul(f)?,
        w_q: d_queries.t_matmul(f)?,
        features: d_keys.matmul(&params.w_k)?.add(&d_queries.matmul(&params.w_q)?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn entities(rows: &[Vec<f64>]) -> EntitySet {
        EntitySet::new(RealMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn logits_examples() {
        let e = entities(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let p = AttentionParams::init(2, 3, 1);
        assert!(attention_logits(&e, &p).unwrap().data().iter().all(|&v| v == 0.0));

        let e = entities(&[vec![1.0, 0.0]]);
        let id = AttentionParams::new(RealMatrix::identity(2), RealMatrix::identity(2)).unwrap();
        let w = attention_logits(&e, &id).unwrap();
        assert_abs_diff_eq!(w.get(0, 0), 0.7071067811865475, epsilon = 1e-15);
    }

    #[test]
    fn logits_scale_quadratically() {
        let e = entities(&[vec![0.3, -1.0, 0.5], vec![1.2, 0.4, -0.7]]);
        let p = AttentionParams::init(3, 2, 9);
        let c = 1.7;
        let base = attention_logits(&e, &p).unwrap();
        let scaled = attention_logits(&EntitySet::new(e.features().scale(c)), &p).unwrap();
        for (a, b) in base.data().iter().zip(scaled.data()) {
            assert_abs_diff_eq!(a * c * c, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let e = entities(&[vec![1.0, 2.0, 3.0]]);
        let p = AttentionParams::init(2, 2, 0);
        assert!(matches!(
            attention_logits(&e, &p),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn forward_on_zero_features_is_uniform() {
        let e = EntitySet::new(RealMatrix::zeros(3, 2));
        let s = forward(&e, &AttentionParams::init(2, 2, 4)).unwrap();
        for &v in s.agg_weights.data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        for &v in s.focus_weights.data() {
            assert_abs_diff_eq!(v, 1.0 / 9.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn identical_entities_give_uniform_aggregation() {
        let e = entities(&vec![vec![0.4, -2.0]; 4]);
        let s = forward(&e, &AttentionParams::init(2, 3, 5)).unwrap();
        for &v in s.agg_weights.data() {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn column_axis_normalizes_columns() {
        let e = entities(&[vec![0.4, -2.0], vec![1.0, 0.5], vec![-0.3, 0.9]]);
        let s = forward_with_axis(&e, &AttentionParams::init(2, 2, 6), AggAxis::Col).unwrap();
        for total in s.agg_weights.col_sums() {
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn aggregate_examples() {
        let f = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.0], vec![5.0, 0.0]]).unwrap();
        let zero = EntitySet::new(RealMatrix::zeros(3, 2));
        let s = forward(&zero, &AttentionParams::init(2, 2, 0)).unwrap();
        let out = aggregate(&s, &f).unwrap();
        for r in 0..3 {
            assert_abs_diff_eq!(out.get(r, 0), 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(out.get(r, 1), -2.0 / 3.0, epsilon = 1e-12);
        }

        // Large diagonal logits push the aggregation towards the identity.
        let big = entities(&[vec![40.0, 0.0], vec![0.0, 40.0]]);
        let id = AttentionParams::new(RealMatrix::identity(2), RealMatrix::identity(2)).unwrap();
        let s = forward(&big, &id).unwrap();
        let out = aggregate(&s, big.features()).unwrap();
        for (a, b) in out.data().iter().zip(big.features().data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }

        assert!(aggregate(&s, &f).is_err());
    }

    #[test]
    fn residual_examples() {
        let f = RealMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let z = RealMatrix::zeros(1, 2);
        assert_eq!(residual_combine(&f, &z).unwrap(), f);
        assert_eq!(residual_combine(&z, &f).unwrap(), f);
        assert_eq!(residual_combine(&f, &f).unwrap(), f.scale(2.0));
        assert!(residual_combine(&f, &RealMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let e = entities(&[vec![0.3, -1.0, 0.5], vec![1.2, 0.4, -0.7]]);
        let p = AttentionParams::init(3, 2, 2);
        let s = forward(&e, &p).unwrap();
        let g = backward(&s, &RealMatrix::zeros(2, 2), &e, &p).unwrap();
        assert_eq!(g.w_k.max_abs(), 0.0);
        assert_eq!(g.w_q.max_abs(), 0.0);
        assert_eq!(g.features.max_abs(), 0.0);
    }
}
