//! Desk-scale end-to-end training of the attention module with a task loss
//! and the relation loss, plus evaluation, gradient checking and ablations.

mod ablate;
mod checkpoint;
mod config;
mod gradcheck;
mod model;
mod optim;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ablate::{
    ablate, ablation_csv_header, apply_overrides, write_ablation_csv, write_recall_curves_csv, AblationCell,
    AblationGrid, AblationResult, GridAxis,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{HeadMode, OptimizerConfig, Strategy, TrainConfig};
pub use gradcheck::grad_check;
pub use model::{
    combined_loss, cross_entropy, forward_task, instance_gradient, instance_loss, ModelParams,
    LossParts, TaskForward,
};
pub use optim::Optimizer;

use crate::error::{Error, Result};
use crate::metrics::{format_float, relation_recall, top_k_pairs, Recall};
use crate::synthgen::Instance;
use model::instance_center_mass;

/// Per-instance evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceEval {
    pub loss: LossParts,
    pub predicted: usize,
    pub correct: bool,
    pub center_mass: Option<f64>,
    /// One entry per K in `config.recall_k`.
    pub recall: Vec<Recall>,
}

pub fn evaluate_instance(inst: &Instance, params: &ModelParams, config: &TrainConfig) -> Result<InstanceEval> {
    let (loss, fwd) = instance_loss(inst, params, config)?;
    let predicted = fwd.predicted();
    let center_mass = instance_center_mass(&fwd.state, &inst.target);
    let recall = match config.recall_k.iter().max() {
        None => Vec::new(),
        Some(_) if inst.gt_relations.is_empty() => {
            vec![Recall { matched: 0, total: 0 }; config.recall_k.len()]
        }
        Some(&max_k) => {
            let pairs = top_k_pairs(&fwd.state.focus_weights, max_k, config.ordered_pairs)?;
            config
                .recall_k
                .iter()
                .map(|&k| relation_recall(&pairs, &inst.entities, &inst.gt_objects, &inst.gt_relations, k))
                .collect::<Result<_>>()?
        }
    };
    Ok(InstanceEval {
        loss,
        predicted,
        correct: predicted == inst.label,
        center_mass,
        recall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    pub k: usize,
    pub recall: f64,
}

/// Averages over one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub instances: usize,
    pub task_loss: f64,
    pub relation_loss: f64,
    pub combined_loss: f64,
    /// Mean over instances with labeled relations; `None` if there are none.
    pub center_mass: Option<f64>,
    pub accuracy: f64,
    /// Mean recall@K; vacuous instances count as 1.0.
    pub recall: Vec<RecallAtK>,
    pub vacuous_recall_instances: usize,
}

pub fn summarize(evals: &[InstanceEval], config: &TrainConfig) -> SplitSummary {
    let n = evals.len().max(1) as f64;
    let mean = |f: &dyn Fn(&InstanceEval) -> f64| evals.iter().map(f).sum::<f64>() / n;
    let cms: Vec<f64> = evals.iter().filter_map(|e| e.center_mass).collect();
    SplitSummary {
        instances: evals.len(),
        task_loss: mean(&|e| e.loss.task),
        relation_loss: mean(&|e| e.loss.relation),
        combined_loss: mean(&|e| e.loss.combined),
        center_mass: (!cms.is_empty()).then(|| cms.iter().sum::<f64>() / cms.len() as f64),
        accuracy: mean(&|e| f64::from(u8::from(e.correct))),
        recall: config
            .recall_k
            .iter()
            .enumerate()
            .map(|(i, &k)| RecallAtK {
                k,
                recall: mean(&|e| e.recall[i].value()),
            })
            .collect(),
        vacuous_recall_instances: evals
            .iter()
            .filter(|e| e.recall.first().is_some_and(Recall::is_vacuous))
            .count(),
    }
}

pub fn evaluate_split(instances: &[Instance], params: &ModelParams, config: &TrainConfig) -> Result<Vec<InstanceEval>> {
    instances.iter().map(|i| evaluate_instance(i, params, config)).collect()
}

/// Metrics after one epoch (epoch 0 is the untrained model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train: SplitSummary,
    pub test: Option<SplitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub effective_strategy: Strategy,
    pub num_classes: usize,
    pub initial: EpochMetrics,
    /// One entry per training epoch.
    pub epochs: Vec<EpochMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn last(&self) -> &EpochMetrics {
        self.epochs.last().unwrap_or(&self.initial)
    }

    pub fn rows(&self) -> impl Iterator<Item = &EpochMetrics> {
        std::iter::once(&self.initial).chain(&self.epochs)
    }

    /// Flat per-epoch CSV, starting with the untrained epoch 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "epoch",
            "lr",
            "task_loss",
            "relation_loss",
            "combined_loss",
            "center_mass",
            "test_center_mass",
            "accuracy",
            "test_accuracy",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.config.recall_k.iter().map(|k| format!("test_recall@{k}")));
        w.write_record(&header).map_err(crate::metrics::csv_err)?;
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for e in self.rows() {
            let mut rec = vec![
                e.epoch.to_string(),
                format_float(e.lr),
                format_float(e.train.task_loss),
                format_float(e.train.relation_loss),
                format_float(e.train.combined_loss),
                opt(e.train.center_mass),
                opt(e.test.as_ref().and_then(|t| t.center_mass)),
                format_float(e.train.accuracy),
                opt(e.test.as_ref().map(|t| t.accuracy)),
            ];
            for i in 0..self.config.recall_k.len() {
                rec.push(opt(e.test.as_ref().map(|t| t.recall[i].recall)));
            }
            w.write_record(&rec).map_err(crate::metrics::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: ModelParams,
}

fn num_classes(train: &[Instance], test: &[Instance]) -> usize {
    train.iter().chain(test).map(|i| i.label).max().unwrap_or(0) + 1
}

fn epoch_metrics(
    epoch: usize,
    lr: f64,
    params: &ModelParams,
    config: &TrainConfig,
    train: &[Instance],
    test: &[Instance],
) -> Result<EpochMetrics> {
    let train_summary = summarize(&evaluate_split(train, params, config)?, config);
    let test_summary = if test.is_empty() {
        None
    } else {
        Some(summarize(&evaluate_split(test, params, config)?, config))
    };
    Ok(EpochMetrics {
        epoch,
        lr,
        train: train_summary,
        test: test_summary,
    })
}

/// Minibatch training. Shuffling, initialization and summation order are
/// all fixed by `config.seed`, so equal inputs give equal reports.
pub fn train(train_set: &[Instance], test_set: &[Instance], config: &TrainConfig) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument {
            arg: "dataset",
            reason: "training set is empty".into(),
        });
    }
    config.validate()?;
    let d = train_set[0].entities.dim();
    let classes = num_classes(train_set, test_set);
    let params = ModelParams::init(d, classes, config);
    train_from(params, train_set, test_set, config)
}

/// Like [`train`] but starting from given parameters.
pub fn train_from(
    mut params: ModelParams,
    train_set: &[Instance],
    test_set: &[Instance],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    for inst in train_set.iter().chain(test_set) {
        params.check_compatible(inst)?;
    }
    let initial = epoch_metrics(0, config.lr_at(0), &params, config, train_set, test_set)?;
    let mut flat = params.to_flat();
    let mut opt = Optimizer::new(&config.optimizer, flat.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x0073_6875_6666_6c65));
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let mut grad = vec![0.0; flat.len()];
            for &idx in batch {
                let (loss, g) = instance_gradient(&train_set[idx], &params, config)?;
                if !loss.combined.is_finite() {
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        step,
                        quantity: "combined loss",
                        value: loss.combined,
                    });
                }
                for (acc, v) in grad.iter_mut().zip(g.to_flat()) {
                    *acc += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for v in &mut grad {
                *v *= scale;
            }
            if let Some(bad) = grad.iter().find(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    step,
                    quantity: "gradient",
                    value: *bad,
                });
            }
            opt.step(&mut flat, &grad, lr);
            if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    step,
                    quantity: "parameter",
                    value: *bad,
                });
            }
            params = params.with_flat(&flat)?;
        }
        epochs.push(epoch_metrics(epoch + 1, lr, &params, config, train_set, test_set)?);
    }
    Ok(TrainOutcome {
        report: TrainReport {
            config: config.clone(),
            effective_strategy: config.effective_strategy(),
            num_classes: params.num_classes(),
            initial,
            epochs,
            checkpoint: None,
        },
        params,
    })
}
