use serde::{Deserialize, Serialize};

use crate::attention::AggAxis;
use crate::error::{invalid_field, Result};
use crate::focus_loss::{FocusLossConfig, LossVariant};
use crate::numeric::DEFAULT_LOG_EPS;

/// How the relation loss supervises the attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Row-wise softmax, one center-mass per row with labeled relations,
    /// averaged; no focal term.
    Row,
    /// Matrix-wise center-mass without the focal term.
    Mat,
    /// Matrix-wise center-mass with focal exponent `focal_r`.
    MatFocal,
    /// No relation loss.
    Unsup,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Self::Row, Self::Mat, Self::MatFocal, Self::Unsup];
}

/// Pooled input to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// `mean_rows(F + F_c)`, dimension `d`.
    Residual,
    /// `[mean_rows(F), mean_rows(F_c)]`, dimension `2d`.
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    SgdMomentum {
        lr: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd_momentum(lr: f64) -> Self {
        Self::SgdMomentum { lr, momentum: default_momentum() }
    }

    pub fn adam(lr: f64) -> Self {
        Self::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Self::SgdMomentum { lr, .. } | Self::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            Self::SgdMomentum { momentum, .. } => Self::SgdMomentum { lr, momentum },
            Self::Adam { beta1, beta2, eps, .. } => Self::Adam { lr, beta1, beta2, eps },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the relation loss in `task + lambda * relation`.
    pub lambda: f64,
    pub focal_r: u32,
    pub loss_variant: LossVariant,
    pub strategy: Strategy,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub head_mode: HeadMode,
    pub agg_axis: AggAxis,
    pub eps: f64,
    /// Projection dimension of the keys and queries.
    pub d_k: usize,
    /// Multiply the learning rate by 0.1 once 5/8 of the epochs are done.
    pub lr_step_decay: bool,
    /// Keep the attention projections fixed; only the classifier trains.
    pub freeze_attention: bool,
    /// K values for recall@K.
    pub recall_k: Vec<usize>,
    /// Treat (i, j) and (j, i) as separate proposals.
    pub ordered_pairs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::language()
    }
}

impl TrainConfig {
    /// Detection-style settings: lambda 0.01, SGD with momentum 0.9 at 5e-4.
    pub fn vision() -> Self {
        Self {
            lambda: 0.01,
            optimizer: OptimizerConfig::sgd_momentum(5e-4),
            ..Self::language()
        }
    }

    /// Document-style settings: lambda 0.1, Adam at 1e-3.
    pub fn language() -> Self {
        Self {
            lambda: 0.1,
            focal_r: 2,
            loss_variant: LossVariant::Focal,
            strategy: Strategy::MatFocal,
            optimizer: OptimizerConfig::adam(1e-3),
            epochs: 8,
            batch_size: 2,
            seed: 0,
            head_mode: HeadMode::Residual,
            agg_axis: AggAxis::Row,
            eps: DEFAULT_LOG_EPS,
            d_k: 8,
            lr_step_decay: true,
            freeze_attention: false,
            recall_k: vec![1, 5, 10],
            ordered_pairs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid_field("lambda", "must be finite and non-negative"));
        }
        FocusLossConfig {
            r: self.focal_r,
            variant: self.loss_variant,
            eps: self.eps,
        }
        .validate()?;
        let lr = self.optimizer.lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(invalid_field("optimizer.lr", "must be finite and non-negative"));
        }
        if let OptimizerConfig::SgdMomentum { momentum, .. } = self.optimizer {
            if !(0.0..1.0).contains(&momentum) {
                return Err(invalid_field("optimizer.momentum", "must lie in [0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return Err(invalid_field("batch_size", "must be at least 1"));
        }
        if self.d_k == 0 {
            return Err(invalid_field("d_k", "must be at least 1"));
        }
        if self.recall_k.contains(&0) {
            return Err(invalid_field("recall_k", "every K must be at least 1"));
        }
        Ok(())
    }

    /// The strategy actually applied: a zero lambda means no relation loss.
    pub fn effective_strategy(&self) -> Strategy {
        if self.lambda == 0.0 {
            Strategy::Unsup
        } else {
            self.strategy
        }
    }

    /// Loss settings for the relation term, or `None` when unsupervised.
    /// `row` and `mat` drop the focal term (r = 0); `mat_focal` uses `focal_r`.
    pub fn relation_loss(&self) -> Option<FocusLossConfig> {
        let r = match self.effective_strategy() {
            Strategy::Unsup => return None,
            Strategy::Row | Strategy::Mat => 0,
            Strategy::MatFocal => self.focal_r,
        };
        Some(FocusLossConfig {
            r,
            variant: self.loss_variant,
            eps: self.eps,
        })
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decay_from = (5 * self.epochs).div_ceil(8);
        if self.lr_step_decay && epoch >= decay_from {
            self.optimizer.lr() * 0.1
        } else {
            self.optimizer.lr()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let v = TrainConfig::vision();
        assert_eq!(v.lambda, 0.01);
        assert_eq!(v.optimizer, OptimizerConfig::SgdMomentum { lr: 5e-4, momentum: 0.9 });
        let l = TrainConfig::language();
        assert_eq!(l.lambda, 0.1);
        assert_eq!(l.optimizer.lr(), 1e-3);
        assert_eq!(l.focal_r, 2);
    }

    #[test]
    fn schedule_decays_after_five_of_eight() {
        let c = TrainConfig { optimizer: OptimizerConfig::sgd_momentum(5e-4), ..TrainConfig::vision() };
        let lrs: Vec<f64> = (0..8).map(|e| c.lr_at(e)).collect();
        assert!(lrs[..5].iter().all(|&lr| lr == 5e-4));
        assert!(lrs[5..].iter().all(|&lr| (lr - 5e-5).abs() < 1e-20));
    }

    #[test]
    fn zero_lambda_is_unsupervised() {
        let c = TrainConfig { lambda: 0.0, ..TrainConfig::default() };
        assert_eq!(c.effective_strategy(), Strategy::Unsup);
        assert!(c.relation_loss().is_none());
        let c = TrainConfig { strategy: Strategy::Mat, ..TrainConfig::default() };
        assert_eq!(c.relation_loss().unwrap().r, 0);
    }

    #[test]
    fn json_uses_defaults_and_rejects_unknown_fields() {
        let c: TrainConfig = serde_json::from_str(r#"{"strategy":"row","optimizer":{"kind":"sgd_momentum","lr":0.01}}"#).unwrap();
        assert_eq!(c.strategy, Strategy::Row);
        assert_eq!(c.optimizer, OptimizerConfig::SgdMomentum { lr: 0.01, momentum: 0.9 });
        assert_eq!(c.epochs, TrainConfig::default().epochs);
        let err = serde_json::from_str::<TrainConfig>(r#"{"lamda":0.1}"#).unwrap_err();
        assert!(err.to_string().contains("lamda"));
    }

    #[test]
    fn validation_names_fields() {
        let bad = TrainConfig { lambda: -1.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("lambda"));
        let bad = TrainConfig { focal_r: 7, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("focal_r"));
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("batch_size"));
    }
}
