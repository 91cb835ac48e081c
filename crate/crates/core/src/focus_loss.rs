//! Center-mass of the focus weights on labeled relations, the center-mass
//! cross-entropy loss with its focal term, the L2 / smooth-L1 alternatives,
//! and gradients w.r.t. the attention logits.

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::numeric::{softmax_matrix, stable_log, RealMatrix, DEFAULT_LOG_EPS};

/// Tolerance on the total mass of focus weights handed to [`center_mass`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

/// Square binary relation labels with an all-zero diagonal.
#[derive(Clone, PartialEq, Debug)]
pub struct TargetMatrix {
    t: RealMatrix,
    positives: usize,
}

impl TargetMatrix {
    pub fn new(t: RealMatrix) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::InvalidTarget(format!(
                "expected a square matrix, got {}x{}",
                t.rows(),
                t.cols()
            )));
        }
        let mut positives = 0;
        for r in 0..t.rows() {
            for c in 0..t.cols() {
                let v = t.get(r, c);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidTarget(format!(
                        "entry ({r}, {c}) = {v} is not binary"
                    )));
                }
                if r == c && v != 0.0 {
                    return Err(Error::InvalidTarget(format!(
                        "diagonal entry ({r}, {r}) must be 0"
                    )));
                }
                positives += (v == 1.0) as usize;
            }
        }
        Ok(Self { t, positives })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            t: RealMatrix::zeros(n, n),
            positives: 0,
        }
    }

    /// Builds an `n x n` target from `(row, col)` positions of the ones.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTarget("empty target".into()));
        }
        let mut data = vec![0.0; n * n];
        for &(r, c) in pairs {
            if r >= n || c >= n {
                return Err(Error::InvalidTarget(format!(
                    "pair ({r}, {c}) out of range for n = {n}"
                )));
            }
            data[r * n + c] = 1.0;
        }
        Self::new(RealMatrix::new(n, n, data)?)
    }

    /// Positions of the ones in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n * n)
            .filter(|&i| self.t.data()[i] == 1.0)
            .map(|i| (i / n, i % n))
            .collect()
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of one-entries.
    pub fn positives(&self) -> usize {
        self.positives
    }

    /// True when no relation is labeled; such instances contribute no
    /// relation loss and are left out of center-mass averages.
    pub fn has_no_relations(&self) -> bool {
        self.positives == 0
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|r| (0..n).all(|c| self.t.get(r, c) == self.t.get(c, r)))
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            t: self.t.permuted(perm, true),
            positives: self.positives,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// `-(1 - M)^r log M`
    #[default]
    Focal,
    /// `(1 - M)^2`
    L2,
    /// Smooth L1 of `x = 1 - M`.
    SmoothL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusLossConfig {
    pub r: u32,
    pub variant: LossVariant,
    pub eps: f64,
}

impl Default for FocusLossConfig {
    fn default() -> Self {
        Self {
            r: 2,
            variant: LossVariant::Focal,
            eps: DEFAULT_LOG_EPS,
        }
    }
}

impl FocusLossConfig {
    pub const MAX_R: u32 = 4;

    pub fn focal(r: u32) -> Self {
        Self {
            r,
            ..Self::default()
        }
    }

    pub fn with_variant(variant: LossVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r > Self::MAX_R {
            return Err(crate::error::invalid_field(
                "focal_r",
                format!("{} is outside the supported range 0..={}", self.r, Self::MAX_R),
            ));
        }
        if !(self.eps > 0.0 && self.eps <= 1e-6) {
            return Err(crate::error::invalid_field(
                "eps",
                format!("{} is outside (0, 1e-6]", self.eps),
            ));
        }
        Ok(())
    }
}

/// `M = sum(W~ ⊙ T)`: the focus-weight mass on labeled relations.
pub fn center_mass(focus_weights: &RealMatrix, target: &TargetMatrix) -> Result<f64> {
    if focus_weights.shape() != target.matrix().shape() {
        return Err(shape_mismatch(
            "center_mass",
            target.matrix().shape(),
            focus_weights.shape(),
        ));
    }
    let total = focus_weights.sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized {
            what: "focus weights",
            total,
            tolerance: NORMALIZATION_TOLERANCE,
        });
    }
    Ok(mass_on(focus_weights, target))
}

/// Unchecked masked sum, shared with the row-wise strategy.
pub(crate) fn mass_on(weights: &RealMatrix, target: &TargetMatrix) -> f64 {
    weights
        .data()
        .iter()
        .zip(target.matrix().data())
        .map(|(w, t)| w * t)
        .sum()
}

/// `-(1 - m)^r log(max(m, eps))`.
pub fn focal_loss(m: f64, config: &FocusLossConfig) -> f64 {
    let log_m = stable_log(m, config.eps);
    if log_m == 0.0 {
        return 0.0;
    }
    -(1.0 - m).powi(config.r as i32) * log_m
}

pub fn l2_loss(m: f64) -> f64 {
    (1.0 - m).powi(2)
}

pub fn smooth_l1_loss(m: f64) -> f64 {
    let x = 1.0 - m;
    if x.abs() < 0.5 {
        x * x
    } else {
        x.abs() - 0.25
    }
}

/// Loss value of the configured variant at center-mass `m`.
pub fn loss_of_center_mass(m: f64, config: &FocusLossConfig) -> f64 {
    match config.variant {
        LossVariant::Focal => focal_loss(m, config),
        LossVariant::L2 => l2_loss(m),
        LossVariant::SmoothL1 => smooth_l1_loss(m),
    }
}

/// `dL/dM` of the configured variant. For the focal variant `m` is clamped
/// to `eps` in both the log and the `1/M` term.
pub fn loss_derivative(m: f64, config: &FocusLossConfig) -> f64 {
    match config.variant {
        LossVariant::Focal => {
            let mc = m.max(config.eps);
            let one_minus = 1.0 - mc;
            let r = config.r as i32;
            if r == 0 {
                -1.0 / mc
            } else {
                f64::from(config.r) * one_minus.powi(r - 1) * mc.ln() - one_minus.powi(r) / mc
            }
        }
        LossVariant::L2 => -2.0 * (1.0 - m),
        LossVariant::SmoothL1 => {
            let x = 1.0 - m;
            if x.abs() < 0.5 {
                -2.0 * x
            } else {
                -x.signum()
            }
        }
    }
}

/// `dM/dW[k][l] = s[k][l] (T[k][l] - M)` with `s = softmax_matrix(W)`.
pub fn center_mass_gradient(s: &RealMatrix, target: &TargetMatrix, m: f64) -> RealMatrix {
    let data = s
        .data()
        .iter()
        .zip(target.matrix().data())
        .map(|(s, t)| s * (t - m))
        .collect();
    RealMatrix::from_raw(s.rows(), s.cols(), data)
}

/// Relation loss of one instance from its logits; exactly 0 when the target
/// labels no relation.
pub fn relation_loss(
    logits: &RealMatrix,
    target: &TargetMatrix,
    config: &FocusLossConfig,
) -> Result<f64> {
    if logits.shape() != target.matrix().shape() {
        return Err(shape_mismatch("relation_loss", target.matrix().shape(), logits.shape()));
    }
    if target.has_no_relations() {
        return Ok(0.0);
    }
    let m = mass_on(&softmax_matrix(logits), target);
    Ok(loss_of_center_mass(m, config))
}

/// Gradient of [`relation_loss`] w.r.t. the logits.
pub fn relation_loss_backward(
    logits: &RealMatrix,
    target: &TargetMatrix,
    config: &FocusLossConfig,
) -> Result<RealMatrix> {
    if logits.shape() != target.matrix().shape() {
        return Err(shape_mismatch(
            "relation_loss_backward",
            target.matrix().shape(),
            logits.shape(),
        ));
    }
    if target.has_no_relations() {
        return Ok(RealMatrix::zeros(logits.rows(), logits.cols()));
    }
    let s = softmax_matrix(logits);
    let m = mass_on(&s, target);
    Ok(center_mass_gradient(&s, target, m).scale(loss_derivative(m, config)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn target_validation() {
        assert!(TargetMatrix::new(RealMatrix::zeros(2, 3)).is_err());
        assert!(TargetMatrix::new(RealMatrix::identity(2)).is_err());
        let half = RealMatrix::from_rows(&[vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap();
        assert!(TargetMatrix::new(half).is_err());
        let t = TargetMatrix::from_pairs(3, &[(0, 1), (2, 1)]).unwrap();
        assert_eq!(t.positives(), 2);
        assert_eq!(t.pairs(), vec![(0, 1), (2, 1)]);
        assert!(!t.is_symmetric());
        assert!(TargetMatrix::from_pairs(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn center_mass_examples() {
        let uniform = RealMatrix::filled(3, 3, 1.0 / 9.0);
        let t = TargetMatrix::from_pairs(3, &[(0, 1), (1, 0)]).unwrap();
        assert_abs_diff_eq!(center_mass(&uniform, &t).unwrap(), 2.0 / 9.0, epsilon = 1e-15);
        assert_eq!(center_mass(&uniform, &TargetMatrix::zeros(3)).unwrap(), 0.0);

        let u2 = RealMatrix::filled(2, 2, 0.25);
        let off = TargetMatrix::from_pairs(2, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(center_mass(&u2, &off).unwrap(), 0.5);

        assert!(matches!(
            center_mass(&RealMatrix::filled(2, 2, 0.3), &off),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            center_mass(&uniform, &off),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn focal_loss_examples() {
        // High-precision references from mpmath.
        assert_eq!(focal_loss(1.0, &FocusLossConfig::focal(2)), 0.0);
        assert_abs_diff_eq!(
            focal_loss(0.25, &FocusLossConfig::focal(0)),
            1.3862943611198906,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            focal_loss(0.25, &FocusLossConfig::focal(2)),
            0.779_790_578_129_938_5,
            epsilon = 1e-12
        );
        // log guarded at eps.
        assert_abs_diff_eq!(
            focal_loss(0.0, &FocusLossConfig::focal(0)),
            27.631021115928548,
            epsilon = 1e-9
        );
    }

    #[test]
    fn alternative_loss_examples() {
        assert_eq!(l2_loss(1.0), 0.0);
        assert_eq!(l2_loss(0.0), 1.0);
        assert_eq!(l2_loss(0.5), 0.25);
        assert_abs_diff_eq!(smooth_l1_loss(0.6), 0.16, epsilon = 1e-15);
        assert_eq!(smooth_l1_loss(0.5), 0.25);
        assert_abs_diff_eq!(smooth_l1_loss(0.2), 0.55, epsilon = 1e-15);
        assert_abs_diff_eq!(smooth_l1_loss(0.5 + 1e-12), 0.25, epsilon = 1e-11);
    }

    #[test]
    fn focal_derivative_reference() {
        // 2 * 0.5 * ln(0.5) - 0.25 / 0.5
        assert_abs_diff_eq!(
            loss_derivative(0.5, &FocusLossConfig::focal(2)),
            -1.1931471805599454,
            epsilon = 1e-12
        );
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-7;
        for variant in [LossVariant::Focal, LossVariant::L2, LossVariant::SmoothL1] {
            for r in 0..=4 {
                let cfg = FocusLossConfig { r, variant, eps: 1e-12 };
                for &m in &[0.03, 0.2, 0.45, 0.55, 0.8, 0.97] {
                    let fd = (loss_of_center_mass(m + h, &cfg) - loss_of_center_mass(m - h, &cfg))
                        / (2.0 * h);
                    let g = loss_derivative(m, &cfg);
                    assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "{cfg:?} m={m}: {g} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn focal_loss_decreases_in_m() {
        for r in 0..=4 {
            let cfg = FocusLossConfig::focal(r);
            let grid: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
            for w in grid.windows(2) {
                assert!(focal_loss(w[0], &cfg) > focal_loss(w[1], &cfg), "r={r} at {}", w[0]);
            }
        }
    }

    #[test]
    fn empty_target_has_zero_loss_and_gradient() {
        let w = RealMatrix::from_rows(&[vec![0.1, 2.0], vec![-1.0, 0.3]]).unwrap();
        let t = TargetMatrix::zeros(2);
        let cfg = FocusLossConfig::default();
        assert_eq!(relation_loss(&w, &t, &cfg).unwrap(), 0.0);
        assert_eq!(relation_loss_backward(&w, &t, &cfg).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn converged_gradient_vanishes() {
        // All off-diagonal logits large: nearly all mass sits on T = 1.
        let n = 4;
        let w = RealMatrix::from_fn(n, n, |r, c| if r == c { -30.0 } else { 30.0 });
        let pairs: Vec<_> = (0..n)
            .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
            .collect();
        let t = TargetMatrix::from_pairs(n, &pairs).unwrap();
        let g = relation_loss_backward(&w, &t, &FocusLossConfig::default()).unwrap();
        assert!(g.max_abs() < 1e-20);
    }

    #[test]
    fn config_validation() {
        assert!(FocusLossConfig::default().validate().is_ok());
        assert!(FocusLossConfig::focal(5).validate().is_err());
        let cfg = FocusLossConfig { eps: 1e-3, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
