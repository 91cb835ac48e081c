use super::config::TrainConfig;
use super::model::{instance_gradient, instance_loss, ModelParams};
use crate::error::{Error, Result};
use crate::synthgen::Instance;

/// Largest relative disagreement between the analytic gradient of the
/// combined loss and central finite differences, over every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(params: &ModelParams, inst: &Instance, config: &TrainConfig, step: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::InvalidArgument {
            arg: "step",
            reason: format!("{step} is outside [1e-7, 1e-3]"),
        });
    }
    let (_, grads) = instance_gradient(inst, params, config)?;
    let analytic = grads.to_flat();
    let base = params.to_flat();
    let loss_at = |flat: &[f64]| -> Result<f64> {
        Ok(instance_loss(inst, &params.with_flat(flat)?, config)?.0.combined)
    };
    let mut worst = 0.0_f64;
    let mut probe = base.clone();
    for i in 0..base.len() {
        if config.freeze_attention && i < 2 * params.attention.w_k.data().len() {
            continue;
        }
        probe[i] = base[i] + step;
        let plus = loss_at(&probe)?;
        probe[i] = base[i] - step;
        let minus = loss_at(&probe)?;
        probe[i] = base[i];
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
