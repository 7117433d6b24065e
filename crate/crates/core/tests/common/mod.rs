//! Reference computations shared by the integration tests. Nothing here
//! reuses the analytic derivative code under test.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use cvqng::circuit::{Circuit, LayerParams, ParamLayout, ParamVector, SlotKind, StateJacobian};
use cvqng::expm::expm_with_frechet;
use cvqng::fock::{annihilation, creation, number_operator, FockOperator, FockVector, C64};
use cvqng::targets::{fidelity_loss, TargetState};

pub const I: C64 = C64::new(0.0, 1.0);

/// Fourth-order central difference of `f` along the real direction `dir`.
pub fn richardson<F>(f: F, h: f64) -> DVector<C64>
where
    F: Fn(f64) -> DVector<C64>,
{
    let d1 = f(h) - f(-h);
    let d2 = f(2.0 * h) - f(-2.0 * h);
    (d1 * C64::from(8.0) - d2) * C64::from(1.0 / (12.0 * h))
}

fn shifted(params: &ParamVector, m: usize, delta: C64) -> ParamVector {
    let mut values = params.values().to_vec();
    values[m] += delta;
    ParamVector::new(values, params.shared_layout()).unwrap()
}

/// `(∂_Re f, ∂_Im f)` at complex slot `m`, or `(∂f, None)` at a real slot.
pub fn real_partials<F>(params: &ParamVector, m: usize, f: &F) -> (DVector<C64>, Option<DVector<C64>>)
where
    F: Fn(&ParamVector) -> DVector<C64>,
{
    let h = 1e-4;
    let re = richardson(|t| f(&shifted(params, m, C64::new(t, 0.0))), h);
    let im = match params.layout().slots()[m].kind {
        SlotKind::Real => None,
        _ => Some(richardson(|t| f(&shifted(params, m, C64::new(0.0, t))), h)),
    };
    (re, im)
}

/// Wirtinger derivatives of `f` for every slot: `∂_z = ½(∂_Re − i∂_Im)`,
/// `∂_z* = ½(∂_Re + i∂_Im)`.
pub fn fd_wirtinger<F>(params: &ParamVector, f: F) -> Vec<DVector<C64>>
where
    F: Fn(&ParamVector) -> DVector<C64>,
{
    let layout = params.layout();
    (0..layout.len())
        .map(|m| {
            let slot = &layout.slots()[m];
            match slot.kind {
                SlotKind::Real => real_partials(params, m, &f).0,
                SlotKind::Complex => {
                    let (re, im) = real_partials(params, m, &f);
                    (re - im.unwrap() * I) * C64::from(0.5)
                }
                SlotKind::Conjugate => {
                    let (re, im) = real_partials(params, slot.partner, &f);
                    (re + im.unwrap() * I) * C64::from(0.5)
                }
            }
        })
        .collect()
}

pub fn fd_jacobian(circuit: &Circuit, params: &ParamVector) -> Vec<DVector<C64>> {
    fd_wirtinger(params, |p| circuit.forward(p).unwrap().into_inner())
}

/// `∂L/∂ξ_m*` by finite differences.
pub fn fd_loss_grad(circuit: &Circuit, params: &ParamVector, target: &TargetState) -> Vec<C64> {
    let loss = |p: &ParamVector| DVector::from_element(1, C64::from(fidelity_loss(&circuit.forward(p).unwrap(), target).unwrap()));
    let d = fd_wirtinger(params, loss);
    let layout = params.layout();
    (0..layout.len()).map(|m| d[layout.conj_index(m)][0]).collect()
}

pub fn rel_err(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn rel_err_mat(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Relative error of each entry, measured against the largest reference
/// entry so that near-zero entries do not dominate.
pub fn entrywise_rel_err(a: &[C64], b: &[C64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / y.norm().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

/// One gate as a generator `A(θ)` and its derivatives `∂A/∂θ_k` for the
/// real coordinates it depends on.
struct DenseGate {
    generator: DMatrix<C64>,
    directions: Vec<(usize, DMatrix<C64>)>,
}

fn dense_layer(p: &LayerParams, base: usize, d: usize) -> Vec<DenseGate> {
    let a = annihilation(d).unwrap().into_inner();
    let ad = creation(d).unwrap().into_inner();
    let n = number_operator(d).unwrap().into_inner();
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    let n2 = &n * &n;
    let half = C64::from(0.5);
    vec![
        DenseGate {
            generator: (&a2 * p.zeta.conj() - &ad2 * p.zeta) * half,
            directions: vec![
                (base + 2, (&a2 - &ad2) * half),
                (base + 3, (&a2 + &ad2) * (-half * I)),
            ],
        },
        DenseGate {
            generator: &n * (I * p.phi),
            directions: vec![(base + 4, &n * I)],
        },
        DenseGate {
            generator: &ad * p.gamma - &a * p.gamma.conj(),
            directions: vec![(base, &ad - &a), (base + 1, (&ad + &a) * I)],
        },
        DenseGate {
            generator: &n2 * (I * p.kappa),
            directions: vec![(base + 5, &n2 * I)],
        },
    ]
}

/// Jacobian over real coordinates `(Re γ, Im γ, Re ζ, Im ζ, φ, κ)` per
/// layer, from dense Padé exponentials and their Fréchet derivatives.
pub fn dense_real_jacobian(params: &ParamVector, cutoff: usize) -> StateJacobian {
    let layers = params.unpack().unwrap();
    let gates: Vec<DenseGate> = layers
        .iter()
        .enumerate()
        .flat_map(|(l, p)| dense_layer(p, 6 * l, cutoff))
        .collect();
    let mut unitaries = Vec::new();
    let mut derivs = Vec::new();
    for g in &gates {
        let gen = FockOperator::new(g.generator.clone()).unwrap();
        let dirs: Vec<FockOperator> = g.directions.iter().map(|(_, e)| FockOperator::new(e.clone()).unwrap()).collect();
        let (u, l) = expm_with_frechet(&gen, &dirs).unwrap();
        unitaries.push(u.into_inner());
        derivs.push(l.into_iter().map(FockOperator::into_inner).collect::<Vec<_>>());
    }
    let n = params.len();
    let mut columns = DMatrix::zeros(cutoff, n);
    let mut prefix = FockVector::vacuum(cutoff).unwrap().into_inner();
    for (k, g) in gates.iter().enumerate() {
        let mut suffix = DMatrix::<C64>::identity(cutoff, cutoff);
        for u in &unitaries[k + 1..] {
            suffix = u * suffix;
        }
        for ((slot, _), dg) in g.directions.iter().zip(&derivs[k]) {
            columns.set_column(*slot, &(&suffix * (dg * &prefix)));
        }
        prefix = &unitaries[k] * prefix;
    }
    let slots = params
        .layout()
        .slots()
        .iter()
        .enumerate()
        .map(|(i, s)| cvqng::circuit::SlotInfo {
            block: s.block,
            kind: SlotKind::Real,
            partner: i,
            name: s.name,
        })
        .collect();
    StateJacobian::new(
        FockVector::new(prefix).unwrap(),
        columns,
        Arc::new(ParamLayout::new(slots).unwrap()),
    )
    .unwrap()
}
