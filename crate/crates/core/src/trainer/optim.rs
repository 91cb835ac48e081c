use super::config::OptimizerConfig;

/// First-order optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub enum Optimizer {
    SgdMomentum { momentum: f64, velocity: Vec<f64> },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig, len: usize) -> Self {
        match *config {
            OptimizerConfig::SgdMomentum { momentum, .. } => Self::SgdMomentum {
                momentum,
                velocity: vec![0.0; len],
            },
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => Self::Adam {
                beta1,
                beta2,
                eps,
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            },
        }
    }

    /// One update of `params` against `grad` with learning rate `lr`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        match self {
            Self::SgdMomentum { momentum, velocity } => {
                for ((p, g), vel) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *vel = *momentum * *vel + g;
                    *p -= lr * *vel;
                }
            }
            Self::Adam { beta1, beta2, eps, m, v, t } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g;
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
    }
}
