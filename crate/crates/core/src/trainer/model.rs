use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{HeadMode, Strategy, TrainConfig};
use crate::attention::{
    agg_weights_backward, aggregate, backward, forward_with_axis, AttentionParams, AttentionState,
};
use crate::error::{shape_mismatch, Error, Result};
use crate::focus_loss::{
    loss_derivative, loss_of_center_mass, mass_on, relation_loss,
    relation_loss_backward, FocusLossConfig, TargetMatrix,
};
use crate::numeric::{softmax_rows, RealMatrix};
use crate::synthgen::Instance;

/// Attention projections plus a linear classifier on the pooled feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub attention: AttentionParams,
    /// `num_classes x pooled_dim`.
    pub classifier_w: RealMatrix,
    pub classifier_b: Vec<f64>,
}

impl ModelParams {
    /// Attention entries uniform in `[-1/sqrt(d), 1/sqrt(d)]`; classifier
    /// weights uniform in `[-1/sqrt(p), 1/sqrt(p)]` for pooled dimension `p`;
    /// zero bias.
    pub fn init(d: usize, num_classes: usize, config: &TrainConfig) -> Self {
        let attention = AttentionParams::init(d, config.d_k, config.seed);
        let p = pooled_dim(d, config.head_mode);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x636c_6173_7369_6679);
        let bound = 1.0 / (p as f64).sqrt();
        let classifier_w = RealMatrix::from_fn(num_classes, p, |_, _| rng.gen_range(-bound..=bound));
        Self {
            attention,
            classifier_w,
            classifier_b: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classifier_w.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.attention.d()
    }

    pub fn head_mode(&self) -> HeadMode {
        if self.classifier_w.cols() == 2 * self.feature_dim() {
            HeadMode::Concat
        } else {
            HeadMode::Residual
        }
    }

    pub fn num_values(&self) -> usize {
        2 * self.attention.w_k.data().len() + self.classifier_w.data().len() + self.classifier_b.len()
    }

    /// Flattened as `w_k, w_q, classifier_w, classifier_b`, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_values());
        v.extend_from_slice(self.attention.w_k.data());
        v.extend_from_slice(self.attention.w_q.data());
        v.extend_from_slice(self.classifier_w.data());
        v.extend_from_slice(&self.classifier_b);
        v
    }

    /// Inverse of [`to_flat`](Self::to_flat), shaped like `self`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_values() {
            return Err(shape_mismatch("ModelParams::with_flat", (self.num_values(), 1), (flat.len(), 1)));
        }
        let (kr, kc) = self.attention.w_k.shape();
        let (cr, cc) = self.classifier_w.shape();
        let mut rest = flat;
        let mut take = |len: usize| {
            let (head, tail) = rest.split_at(len);
            rest = tail;
            head.to_vec()
        };
        Ok(Self {
            attention: AttentionParams {
                w_k: RealMatrix::new(kr, kc, take(kr * kc))?,
                w_q: RealMatrix::new(kr, kc, take(kr * kc))?,
            },
            classifier_w: RealMatrix::new(cr, cc, take(cr * cc))?,
            classifier_b: take(cr),
        })
    }

    pub fn check_compatible(&self, inst: &Instance) -> Result<()> {
        if inst.entities.dim() != self.feature_dim() {
            return Err(Error::ShapeMismatch {
                op: "model",
                expected: format!("features with {} columns", self.feature_dim()),
                found: format!("{}x{}", inst.entities.len(), inst.entities.dim()),
            });
        }
        if inst.label >= self.num_classes() {
            return Err(Error::InvalidArgument {
                arg: "label",
                reason: format!("label {} but the classifier has {} classes", inst.label, self.num_classes()),
            });
        }
        Ok(())
    }
}

pub fn pooled_dim(d: usize, head: HeadMode) -> usize {
    match head {
        HeadMode::Residual => d,
        HeadMode::Concat => 2 * d,
    }
}

/// Output of [`forward_task`].
#[derive(Debug, Clone)]
pub struct TaskForward {
    pub class_logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub state: AttentionState,
    pub context: RealMatrix,
    pub pooled: Vec<f64>,
}

impl TaskForward {
    pub fn predicted(&self) -> usize {
        argmax(&self.class_logits)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_vec(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Attention forward, aggregation, mean pooling and the linear classifier.
pub fn forward_task(inst: &Instance, params: &ModelParams, config: &TrainConfig) -> Result<TaskForward> {
    if params.classifier_w.cols() != pooled_dim(params.feature_dim(), config.head_mode) {
        return Err(Error::ShapeMismatch {
            op: "forward_task",
            expected: format!(
                "classifier with {} columns for {:?} head",
                pooled_dim(params.feature_dim(), config.head_mode),
                config.head_mode
            ),
            found: format!("{}x{}", params.classifier_w.rows(), params.classifier_w.cols()),
        });
    }
    let f = inst.entities.features();
    let state = forward_with_axis(&inst.entities, &params.attention, config.agg_axis)?;
    let context = aggregate(&state, f)?;
    let pooled = match config.head_mode {
        HeadMode::Residual => f.add(&context)?.col_means(),
        HeadMode::Concat => {
            let mut p = f.col_means();
            p.extend(context.col_means());
            p
        }
    };
    let class_logits: Vec<f64> = params
        .classifier_w
        .mul_vec(&pooled)?
        .into_iter()
        .zip(&params.classifier_b)
        .map(|(z, b)| z + b)
        .collect();
    let probs = softmax_vec(&class_logits);
    Ok(TaskForward {
        class_logits,
        probs,
        state,
        context,
        pooled,
    })
}

/// `-log softmax(z)[label]`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// `task + lambda * relation`.
pub fn combined_loss(task_loss: f64, relation_loss: f64, lambda: f64) -> f64 {
    task_loss + lambda * relation_loss
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub task: f64,
    /// Unweighted relation loss; 0 under the unsupervised strategy.
    pub relation: f64,
    pub combined: f64,
}

/// Row strategy: row-wise softmax, one center-mass per row that labels at
/// least one relation, loss averaged over those rows.
pub(crate) fn row_relation(
    logits: &RealMatrix,
    target: &TargetMatrix,
    cfg: &FocusLossConfig,
    with_grad: bool,
) -> (f64, Option<RealMatrix>) {
    let n = logits.rows();
    let s = softmax_rows(logits);
    let t = target.matrix();
    let rows: Vec<usize> = (0..n).filter(|&r| t.row(r).contains(&1.0)).collect();
    if rows.is_empty() {
        return (0.0, with_grad.then(|| RealMatrix::zeros(n, n)));
    }
    let count = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = with_grad.then(|| vec![0.0; n * n]);
    for &r in &rows {
        let m: f64 = s.row(r).iter().zip(t.row(r)).map(|(a, b)| a * b).sum();
        loss += loss_of_center_mass(m, cfg);
        if let Some(g) = grad.as_mut() {
            let scale = loss_derivative(m, cfg) / count;
            for c in 0..n {
                g[r * n + c] = scale * s.get(r, c) * (t.get(r, c) - m);
            }
        }
    }
    (loss / count, grad.map(|g| RealMatrix::from_raw(n, n, g)))
}

fn relation_term(
    logits: &RealMatrix,
    target: &TargetMatrix,
    config: &TrainConfig,
    with_grad: bool,
) -> Result<(f64, Option<RealMatrix>)> {
    let Some(cfg) = config.relation_loss() else {
        return Ok((0.0, None));
    };
    match config.effective_strategy() {
        Strategy::Row => Ok(row_relation(logits, target, &cfg, with_grad)),
        _ => {
            let loss = relation_loss(logits, target, &cfg)?;
            let grad = if with_grad {
                Some(relation_loss_backward(logits, target, &cfg)?)
            } else {
                None
            };
            Ok((loss, grad))
        }
    }
}

/// Loss of one instance without gradients.
pub fn instance_loss(inst: &Instance, params: &ModelParams, config: &TrainConfig) -> Result<(LossParts, TaskForward)> {
    params.check_compatible(inst)?;
    let fwd = forward_task(inst, params, config)?;
    let task = cross_entropy(&fwd.class_logits, inst.label);
    let (relation, _) = relation_term(&fwd.state.logits, &inst.target, config, false)?;
    let parts = LossParts {
        task,
        relation,
        combined: combined_loss(task, relation, config.lambda),
    };
    Ok((parts, fwd))
}

/// Loss of one instance and its gradient, shaped like `params`.
pub fn instance_gradient(
    inst: &Instance,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<(LossParts, ModelParams)> {
    params.check_compatible(inst)?;
    let fwd = forward_task(inst, params, config)?;
    let task = cross_entropy(&fwd.class_logits, inst.label);
    let (relation, rel_grad) = relation_term(&fwd.state.logits, &inst.target, config, true)?;

    let mut dz = fwd.probs.clone();
    dz[inst.label] -= 1.0;
    let classes = params.num_classes();
    let p = fwd.pooled.len();
    let d_cls = RealMatrix::from_fn(classes, p, |c, j| dz[c] * fwd.pooled[j]);
    let d_pooled: Vec<f64> = (0..p)
        .map(|j| (0..classes).map(|c| params.classifier_w.get(c, j) * dz[c]).sum())
        .collect();

    let f = inst.entities.features();
    let n = f.rows();
    let d = f.cols();
    let offset = match config.head_mode {
        HeadMode::Residual => 0,
        HeadMode::Concat => d,
    };
    let d_context = RealMatrix::from_fn(n, d, |_, j| d_pooled[offset + j] / n as f64);
    let d_agg = d_context.matmul_t(f)?;
    let mut d_logits = agg_weights_backward(&fwd.state, &d_agg)?;
    if let Some(g) = rel_grad {
        d_logits = d_logits.add(&g.scale(config.lambda))?;
    }

    let attention = if config.freeze_attention {
        AttentionParams::zeros(params.feature_dim(), params.attention.d_k())
    } else {
        let g = backward(&fwd.state, &d_logits, &inst.entities, &params.attention)?;
        AttentionParams { w_k: g.w_k, w_q: g.w_q }
    };
    let grads = ModelParams {
        attention,
        classifier_w: d_cls,
        classifier_b: dz,
    };
    let parts = LossParts {
        task,
        relation,
        combined: combined_loss(task, relation, config.lambda),
    };
    Ok((parts, grads))
}

/// Matrix-wise center-mass of one instance's focus weights, `None` when
/// the target is empty.
pub fn instance_center_mass(state: &AttentionState, target: &TargetMatrix) -> Option<f64> {
    (!target.has_no_relations()).then(|| mass_on(&state.focus_weights, target))
}
