//! Gradient descent, Adam and natural-gradient descent on `ξ`.
//!
//! All three take the Wirtinger gradient `∂L/∂ξ*` and finish every step by
//! restoring conjugate pairs.

use serde::{Deserialize, Serialize};

use crate::circuit::{JacobianView, ParamVector};
use crate::error::{Error, Result};
use crate::fock::C64;
use crate::geometry::{hermitian_metric, natural_direction, regularized_pinv, HermitianMetric, MetricStructure, DEFAULT_LAMBDA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Ngd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::Ngd];

    pub fn needs_metric(self) -> bool {
        self == OptimizerKind::Ngd
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "gd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            "ngd" => Ok(Self::Ngd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
            Self::Ngd => "ngd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgdParams {
    pub lambda: f64,
    pub structure: MetricStructure,
}

impl Default for NgdParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            structure: MetricStructure::Block,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    step: usize,
    m: Vec<C64>,
    v: Vec<f64>,
    adam: AdamParams,
    ngd: NgdParams,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, slots: usize) -> Result<Self> {
        Self::with_params(kind, learning_rate, slots, AdamParams::default(), NgdParams::default())
    }

    pub fn with_params(
        kind: OptimizerKind,
        learning_rate: f64,
        slots: usize,
        adam: AdamParams,
        ngd: NgdParams,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !((0.0..1.0).contains(&adam.beta1) && (0.0..1.0).contains(&adam.beta2) && adam.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid Adam constants {adam:?}")));
        }
        if !(ngd.lambda >= 0.0 && ngd.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("NGD regularization must be >= 0, got {}", ngd.lambda)));
        }
        let (m, v) = match kind {
            OptimizerKind::Adam => (vec![C64::new(0.0, 0.0); slots], vec![0.0; slots]),
            _ => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            kind,
            learning_rate,
            step: 0,
            m,
            v,
            adam,
            ngd,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Steps taken so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn ngd_params(&self) -> NgdParams {
        self.ngd
    }

    /// One update of the configured kind. `jac` is required for NGD only.
    pub fn step(&mut self, params: &mut ParamVector, grad: &[C64], jac: Option<&dyn JacobianView>) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(self, params, grad),
            OptimizerKind::Adam => adam_step(self, params, grad),
            OptimizerKind::Ngd => {
                let jac = jac.ok_or_else(|| Error::InvalidParameter("NGD step needs a Jacobian".into()))?;
                ngd_step(self, params, jac, grad)
            }
        }
    }

    fn check(&self, params: &ParamVector, grad: &[C64]) -> Result<()> {
        if grad.len() != params.len() {
            return Err(Error::Dimension {
                expected: params.len(),
                found: grad.len(),
            });
        }
        if grad.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(Error::Divergence { step: self.step });
        }
        Ok(())
    }

    fn apply(&mut self, params: &mut ParamVector, direction: &[C64]) -> Result<()> {
        params.descend(self.learning_rate, direction)?;
        if !params.all_finite() {
            return Err(Error::Divergence { step: self.step });
        }
        self.step += 1;
        Ok(())
    }
}

/// `ξ ← ξ − η ∂L/∂ξ*`.
pub fn sgd_step(state: &mut OptimizerState, params: &mut ParamVector, grad: &[C64]) -> Result<()> {
    state.check(params, grad)?;
    state.apply(params, grad)
}

/// Bias-corrected Adam with second moment `|g|²` per slot.
pub fn adam_step(state: &mut OptimizerState, params: &mut ParamVector, grad: &[C64]) -> Result<()> {
    state.check(params, grad)?;
    if state.m.len() != grad.len() {
        state.m = vec![C64::new(0.0, 0.0); grad.len()];
        state.v = vec![0.0; grad.len()];
    }
    let AdamParams { beta1, beta2, eps } = state.adam;
    let t = (state.step + 1) as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let direction: Vec<C64> = grad
        .iter()
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .map(|(g, (m, v))| {
            *m = *m * beta1 + g * (1.0 - beta1);
            *v = *v * beta2 + g.norm_sqr() * (1.0 - beta2);
            (*m / c1) / ((*v / c2).sqrt() + eps)
        })
        .collect();
    state.apply(params, &direction)
}

/// `ξ ← ξ − η (f + λ1)⁺ ∂L/∂ξ*` with `f` built from `jac`.
pub fn ngd_step(
    state: &mut OptimizerState,
    params: &mut ParamVector,
    jac: &dyn JacobianView,
    grad: &[C64],
) -> Result<()> {
    state.check(params, grad)?;
    let metric = hermitian_metric(jac, state.ngd.structure)?;
    ngd_step_with_metric(state, params, &metric, grad)
}

/// NGD update for a precomputed (unregularized) metric.
pub fn ngd_step_with_metric(
    state: &mut OptimizerState,
    params: &mut ParamVector,
    metric: &HermitianMetric,
    grad: &[C64],
) -> Result<()> {
    state.check(params, grad)?;
    let pinv = regularized_pinv(metric, state.ngd.lambda)?;
    let direction = natural_direction(&pinv, grad)?;
    state.apply(params, &direction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::ParamLayout;
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    fn real_params(values: &[f64]) -> ParamVector {
        ParamVector::new(
            values.iter().map(|&x| C64::from(x)).collect(),
            Arc::new(ParamLayout::all_real(values.len()).unwrap()),
        )
        .unwrap()
    }

    fn complex_param(z: C64) -> ParamVector {
        ParamVector::new(
            vec![z, z.conj()],
            Arc::new(ParamLayout::from_blocks(&[&[crate::circuit::ParamKind::Complex]]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn sgd_on_quadratics() {
        let mut p = real_params(&[1.0]);
        let mut s = OptimizerState::new(OptimizerKind::Sgd, 0.1, 1).unwrap();
        sgd_step(&mut s, &mut p, &[C64::from(2.0)]).unwrap();
        assert!((p.values()[0].re - 0.8).abs() < 1e-15);

        let z = C64::new(1.0, 1.0);
        let mut p = complex_param(z);
        let mut s = OptimizerState::new(OptimizerKind::Sgd, 0.5, 2).unwrap();
        sgd_step(&mut s, &mut p, &[z, z.conj()]).unwrap();
        assert_eq!(p.values()[0], C64::new(0.5, 0.5));
        assert_eq!(p.values()[1], C64::new(0.5, -0.5));

        let before = p.clone();
        sgd_step(&mut s, &mut p, &[C64::from(0.0); 2]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut p = real_params(&[1.0]);
        let mut s = OptimizerState::new(OptimizerKind::Sgd, 0.1, 1).unwrap();
        assert!(matches!(
            sgd_step(&mut s, &mut p, &[C64::new(f64::NAN, 0.0)]),
            Err(Error::Divergence { step: 0 })
        ));
    }

    #[test]
    fn adam_first_step_has_rate_magnitude() {
        let mut p = real_params(&[1.0, -2.0, 0.5]);
        let mut s = OptimizerState::new(OptimizerKind::Adam, 0.01, 3).unwrap();
        adam_step(&mut s, &mut p, &[C64::from(3.0), C64::from(-1e-3), C64::from(40.0)]).unwrap();
        let moved: Vec<f64> = p.values().iter().zip([1.0, -2.0, 0.5]).map(|(a, b)| (a.re - b).abs()).collect();
        for m in moved {
            assert!((m - 0.01).abs() < 1e-6, "{m}");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = real_params(&[0.3]);
        let mut s = OptimizerState::new(OptimizerKind::Adam, 0.01, 1).unwrap();
        adam_step(&mut s, &mut p, &[C64::from(0.0)]).unwrap();
        assert_eq!(p.values()[0], C64::from(0.3));
    }

    #[test]
    fn adam_converges_on_real_quadratic() {
        let mut p = real_params(&[1.0]);
        let mut s = OptimizerState::new(OptimizerKind::Adam, 0.01, 1).unwrap();
        for _ in 0..2000 {
            let theta = p.values()[0].re;
            adam_step(&mut s, &mut p, &[C64::from(2.0 * theta)]).unwrap();
        }
        assert!(p.values()[0].re.abs() < 1e-3);
    }

    #[test]
    fn ngd_with_null_metric_is_scaled_sgd() {
        let mut p = real_params(&[1.0, 2.0]);
        let mut q = p.clone();
        let grad = [C64::from(0.4), C64::from(-0.2)];
        let f = HermitianMetric::full(DMatrix::zeros(2, 2)).unwrap();
        let ngd = NgdParams {
            lambda: 0.1,
            structure: MetricStructure::Full,
        };
        let mut s = OptimizerState::with_params(OptimizerKind::Ngd, 0.02, 2, AdamParams::default(), ngd).unwrap();
        ngd_step_with_metric(&mut s, &mut p, &f, &grad).unwrap();
        let mut g = OptimizerState::new(OptimizerKind::Sgd, 0.2, 2).unwrap();
        sgd_step(&mut g, &mut q, &grad).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn ngd_polar_fixture() {
        let r = 2.0;
        let mut p = real_params(&[r, 0.5]);
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::from(1.0), C64::from(r * r)]));
        let f = HermitianMetric::full(g).unwrap();
        let ngd = NgdParams {
            lambda: 0.0,
            structure: MetricStructure::Full,
        };
        let mut s = OptimizerState::with_params(OptimizerKind::Ngd, 0.1, 2, AdamParams::default(), ngd).unwrap();
        ngd_step_with_metric(&mut s, &mut p, &f, &[C64::from(1.0), C64::from(1.0)]).unwrap();
        assert!((p.values()[0].re - (r - 0.1)).abs() < 1e-15);
        assert!((p.values()[1].re - (0.5 - 0.1 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(OptimizerState::new(OptimizerKind::Sgd, 0.0, 1).is_err());
        let bad = AdamParams {
            beta1: 1.0,
            ..AdamParams::default()
        };
        assert!(OptimizerState::with_params(OptimizerKind::Adam, 0.1, 1, bad, NgdParams::default()).is_err());
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
