//! Finite-difference check of the analytic Jacobian and loss gradient.

use nalgebra::DVector;
use serde::Serialize;

use crate::circuit::{Circuit, ParamVector, SlotKind};
use crate::error::Result;
use crate::fock::C64;
use crate::targets::{fidelity_loss, fidelity_loss_grad, TargetState};

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub layers: usize,
    pub cutoff: usize,
    pub seed: u64,
    /// Largest `‖analytic − fd‖ / ‖fd‖` over Jacobian columns.
    pub max_jacobian_rel_error: f64,
    /// Largest `‖analytic − fd‖ / ‖fd‖` over the loss gradient.
    pub gradient_rel_error: f64,
}

/// `(∂/∂Re, ∂/∂Im)` of `f` at slot `m` by central differences; the
/// imaginary derivative is zero for real slots.
fn real_derivs<F>(params: &ParamVector, m: usize, h: f64, f: F) -> Result<(DVector<C64>, Option<DVector<C64>>)>
where
    F: Fn(&ParamVector) -> Result<DVector<C64>>,
{
    let scale = C64::from(0.5 / h);
    let shifted = |delta: C64| -> Result<DVector<C64>> {
        let mut values = params.values().to_vec();
        values[m] += delta;
        f(&ParamVector::new(values, params.shared_layout())?)
    };
    let re = (shifted(C64::new(h, 0.0))? - shifted(C64::new(-h, 0.0))?) * scale;
    let im = match params.layout().slots()[m].kind {
        SlotKind::Real => None,
        _ => Some((shifted(C64::new(0.0, h))? - shifted(C64::new(0.0, -h))?) * scale),
    };
    Ok((re, im))
}

pub fn gradcheck(layers: usize, cutoff: usize, seed: u64, target: &TargetState) -> Result<GradcheckReport> {
    let h = 1e-6;
    let circuit = Circuit::new(layers, cutoff)?;
    let params = ParamVector::random(layers, 0.3, seed)?;
    let jac = circuit.jacobian(&params)?;
    let grad = fidelity_loss_grad(&jac, target)?;
    let forward = |p: &ParamVector| -> Result<DVector<C64>> { Ok(circuit.forward(p)?.into_inner()) };
    let loss = |p: &ParamVector| -> Result<DVector<C64>> {
        Ok(DVector::from_element(1, C64::from(fidelity_loss(&circuit.forward(p)?, target)?)))
    };

    let mut max_col = 0.0f64;
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    for (m, slot) in params.layout().slots().iter().enumerate() {
        // Complex slots are perturbed through the `Complex` member of the
        // pair; the conjugate member takes the opposite Wirtinger sign.
        let (base, sign) = match slot.kind {
            SlotKind::Conjugate => (slot.partner, 1.0),
            SlotKind::Complex => (m, -1.0),
            SlotKind::Real => (m, 0.0),
        };
        let (dre, dim) = real_derivs(&params, base, h, forward)?;
        let fd_col = match dim {
            None => dre,
            Some(dim) => (dre + dim * C64::new(0.0, sign)) * C64::from(0.5),
        };
        let err = (jac.column(m) - &fd_col).norm() / fd_col.norm().max(f64::MIN_POSITIVE);
        max_col = max_col.max(err);

        let (lre, lim) = real_derivs(&params, base, h, loss)?;
        let (lre, lim) = (lre[0].re, lim.map(|v| v[0].re));
        let fd_grad = match lim {
            None => C64::from(lre),
            // ∂L/∂ξ* uses the opposite sign to the column derivative.
            Some(lim) => C64::new(lre, -sign * lim) * 0.5,
        };
        diff_sq += (grad[m] - fd_grad).norm_sqr();
        ref_sq += fd_grad.norm_sqr();
    }
    Ok(GradcheckReport {
        layers,
        cutoff,
        seed,
        max_jacobian_rel_error: max_col,
        gradient_rel_error: (diff_sq / ref_sq.max(f64::MIN_POSITIVE)).sqrt(),
    })
}
