//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use cvqng::circuit::{Circuit, LayerParams, ParamLayout, ParamVector, StateJacobian};
use cvqng::fock::{FockVector, C64};
use cvqng::geometry::{
    basis_transforms, fs_metric_real, geometric_tensor, hermitian_metric, natural_direction, regularized_pinv,
    HermitianMetric, MetricStructure,
};
use cvqng::harness::emit::write_csv;
use cvqng::harness::stats::{median, roughness};
use cvqng::harness::{run, sweep, ConvergenceRecord, ExperimentConfig, DEFAULT_RATES};
use cvqng::optim::OptimizerKind;
use cvqng::targets::{fidelity_loss, fidelity_loss_grad, hex_gkp_target, HexGkpSpec, TargetState};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn gkp(cutoff: usize) -> TargetState {
    hex_gkp_target(&HexGkpSpec {
        d: 2,
        mu: 1,
        delta: 0.3,
        cutoff,
    })
    .unwrap()
}

fn gradient_correctness() -> Outcome {
    let circuit = Circuit::new(3, 20).unwrap();
    let target = gkp(20);
    let (mut jac_err, mut grad_err) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let params = ParamVector::random(3, 0.3, seed).unwrap();
        let jac = circuit.jacobian(&params).unwrap();
        for (m, col) in fd_jacobian(&circuit, &params).iter().enumerate() {
            jac_err = jac_err.max(rel_err(&jac.column(m), col));
        }
        let grad = fidelity_loss_grad(&jac, &target).unwrap();
        grad_err = grad_err.max(entrywise_rel_err(&grad, &fd_loss_grad(&circuit, &params, &target)));
    }
    outcome(
        jac_err <= 1e-6 && grad_err <= 1e-6,
        format!("max Jacobian column error {jac_err:.2e}, max gradient entry error {grad_err:.2e} (limit 1e-6)"),
    )
}

fn metric_correctness() -> Outcome {
    let circuit = Circuit::new(2, 20).unwrap();
    let (mut err, mut herm, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for seed in 0..5 {
        let params = ParamVector::random(2, 0.4, seed).unwrap();
        let g = fs_metric_real(&geometric_tensor(&dense_real_jacobian(&params, 20)).unwrap())
            .unwrap()
            .map(C64::from);
        let w_inv = basis_transforms(params.layout()).w.try_inverse().unwrap();
        let reference = w_inv.adjoint() * g * &w_inv;
        let f = hermitian_metric(&circuit.jacobian(&params).unwrap(), MetricStructure::Full).unwrap();
        err = err.max(rel_err_mat(&f.to_dense(), &reference));
        herm = herm.max(f.hermiticity_defect());
        min_eig = min_eig.min(f.min_eigenvalue());
    }
    outcome(
        err <= 1e-8 && herm <= 1e-10 && min_eig >= -1e-9,
        format!("change-of-basis error {err:.2e} (limit 1e-8), hermiticity {herm:.1e}, min eigenvalue {min_eig:.2e}"),
    )
}

fn one_param_metric(psi: &[C64], dpsi: &[C64]) -> f64 {
    let jac = StateJacobian::new(
        FockVector::from_slice(psi).unwrap(),
        DMatrix::from_column_slice(psi.len(), 1, dpsi),
        Arc::new(ParamLayout::all_real(1).unwrap()),
    )
    .unwrap();
    hermitian_metric(&jac, MetricStructure::Full).unwrap().to_dense()[(0, 0)].re
}

fn global_phase() -> Outcome {
    let circuit = Circuit::new(3, 20).unwrap();
    let target = gkp(20);
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let jac = circuit.jacobian(&ParamVector::random(3, 0.4, seed).unwrap()).unwrap();
        for alpha in [0.4, 2.0, -2.9] {
            let rot = jac.with_global_phase(alpha);
            let dl = (fidelity_loss(jac.psi(), &target).unwrap() - fidelity_loss(rot.psi(), &target).unwrap()).abs();
            let g0 = fidelity_loss_grad(&jac, &target).unwrap();
            let g1 = fidelity_loss_grad(&rot, &target).unwrap();
            let dg = g0.iter().zip(&g1).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let f0 = hermitian_metric(&jac, MetricStructure::Full).unwrap().to_dense();
            let f1 = hermitian_metric(&rot, MetricStructure::Full).unwrap().to_dense();
            worst = worst.max(dl).max(dg).max(max_abs(&(f0 - f1)));
        }
    }
    let t = 0.7f64;
    let i = C64::new(0.0, 1.0);
    let phase_only = one_param_metric(&[C64::cis(t), C64::from(0.0)], &[i * C64::cis(t), C64::from(0.0)]);
    let circle = one_param_metric(
        &[C64::from(t.cos()), C64::from(t.sin())],
        &[C64::from(-t.sin()), C64::from(t.cos())],
    );
    let toy = phase_only.abs().max((circle - 1.0).abs());
    outcome(
        worst <= 1e-10 && toy <= 1e-12,
        format!("max change under global phase {worst:.1e} (limit 1e-10); toy metrics {phase_only:.1e} and {circle:.15} (limit 1e-12)"),
    )
}

fn polar_fixture() -> Outcome {
    let r = 2.0;
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::from(1.0), C64::from(r * r)]));
    let pinv = regularized_pinv(&HermitianMetric::full(g).unwrap(), 0.0).unwrap();
    let cases = [(1.0, 1.0), (0.5, -3.0), (-2.0, 8.0), (0.0, 0.25)];
    let exact = cases.iter().all(|&(dr, dphi)| {
        let d = natural_direction(&pinv, &[C64::from(dr), C64::from(dphi)]).unwrap();
        d == vec![C64::from(dr), C64::from(dphi / 4.0)]
    });
    outcome(exact, format!("{} gradients mapped to (dL/dr, dL/dphi / 4) exactly", cases.len()))
}

/// Metric over the φ, κ slots alone, with γ and ζ frozen, against the real
/// Fubini-Study metric written out from the same columns.
fn frozen_fallback_error(layers: &[LayerParams]) -> f64 {
    let params = cvqng::circuit::pack(layers).unwrap();
    let circuit = Circuit::new(layers.len(), 20).unwrap();
    let trained: Vec<usize> = (0..layers.len()).flat_map(|l| [6 * l + 4, 6 * l + 5]).collect();
    let jac = circuit.jacobian(&params).unwrap();
    let cols = jac.columns().select_columns(&trained);
    let psi = jac.psi().amplitudes().clone();
    let sub = StateJacobian::new(
        jac.psi().clone(),
        cols.clone(),
        Arc::new(ParamLayout::all_real(trained.len()).unwrap()),
    )
    .unwrap();
    let f = hermitian_metric(&sub, MetricStructure::Full).unwrap().to_dense();
    let n = trained.len();
    let g = DMatrix::from_fn(n, n, |a, b| {
        let (ca, cb) = (cols.column(a), cols.column(b));
        (ca.dotc(&cb) - ca.dotc(&psi) * psi.dotc(&cb)).re
    });
    (f - g.map(C64::from)).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn real_fallback() -> Outcome {
    let mut params = ParamVector::random(3, 0.5, 7).unwrap().unpack().unwrap();
    let zeroed: Vec<LayerParams> = params
        .iter()
        .map(|p| LayerParams {
            gamma: C64::from(0.0),
            zeta: C64::from(0.0),
            ..*p
        })
        .collect();
    let e0 = frozen_fallback_error(&zeroed);
    params[0].gamma = C64::new(0.4, -0.2);
    params[1].zeta = C64::new(0.1, 0.3);
    let e1 = frozen_fallback_error(&params);
    outcome(
        e0 <= 1e-12 && e1 <= 1e-12,
        format!("entrywise error {e0:.1e} with gamma = zeta = 0, {e1:.1e} with gamma, zeta frozen at nonzero values (limit 1e-12)"),
    )
}

fn steps_median(records: &[ConvergenceRecord]) -> f64 {
    median(
        &records
            .iter()
            .map(|r| r.steps_to_threshold.map_or(f64::INFINITY, |s| s as f64))
            .collect::<Vec<_>>(),
    )
}

fn single_photon_runs() -> Vec<(OptimizerKind, Vec<ConvergenceRecord>)> {
    [(OptimizerKind::Ngd, 0.02), (OptimizerKind::Adam, 0.01), (OptimizerKind::Sgd, 0.02)]
        .into_iter()
        .map(|(kind, rate)| {
            let mut c = ExperimentConfig::single_photon();
            c.cutoff = 40;
            c.steps = Some(500);
            c.optimizer = kind;
            c.learning_rate = rate;
            (kind, run(&c).unwrap())
        })
        .collect()
}

fn single_photon(runs: &[(OptimizerKind, Vec<ConvergenceRecord>)]) -> Outcome {
    let ngd = &runs[0].1;
    let reached = ngd.iter().filter(|r| r.steps_to_threshold.is_some()).count();
    let (n, a, g) = (steps_median(&runs[0].1), steps_median(&runs[1].1), steps_median(&runs[2].1));
    let part_a = reached * 5 >= ngd.len() * 4;
    let part_b = n <= a && a <= g;
    outcome(
        part_a && part_b,
        format!(
            "(a) {}: {reached}/{} NGD seeds reach 0.01; (b) {}: median steps NGD {n}, Adam {a}, GD {g}",
            if part_a { "pass" } else { "fail" },
            ngd.len(),
            if part_b { "pass" } else { "fail" },
        ),
    )
}

fn hex_gkp() -> Outcome {
    let mut results = Vec::new();
    for (kind, rate) in [(OptimizerKind::Ngd, 0.02), (OptimizerKind::Sgd, 0.001), (OptimizerKind::Adam, 0.001)] {
        let mut c = ExperimentConfig::hex_gkp();
        c.seeds = (0..10).collect();
        c.steps = Some(3000);
        c.optimizer = kind;
        c.learning_rate = rate;
        let records = run(&c).unwrap();
        let final_loss = median(&records.iter().map(|r| r.final_loss().unwrap()).collect::<Vec<_>>());
        let rough = median(&records.iter().map(|r| roughness(&r.losses(), 50).unwrap()).collect::<Vec<_>>());
        results.push((final_loss, rough));
    }
    let [(ngd_loss, ngd_rough), (gd_loss, gd_rough), (adam_loss, adam_rough)] = results[..] else {
        unreachable!()
    };
    let part_a = ngd_loss < gd_loss;
    let part_b = ngd_rough < gd_rough;
    outcome(
        part_a && part_b,
        format!(
            "(a) {}: median final loss NGD {ngd_loss:.3e} vs GD {gd_loss:.3e}; (b) {}: roughness NGD {ngd_rough:.3e} vs GD {gd_rough:.3e}; Adam {adam_loss:.3e}, roughness {adam_rough:.3e}",
            if part_a { "pass" } else { "fail" },
            if part_b { "pass" } else { "fail" },
        ),
    )
}

fn rate_sweep() -> Outcome {
    let mut c = ExperimentConfig::single_photon();
    c.cutoff = 40;
    c.steps = Some(500);
    let (summary, _) = sweep(&c, &DEFAULT_RATES, &OptimizerKind::ALL).unwrap();
    let grid_index = |rate: f64| DEFAULT_RATES.iter().position(|&r| r == rate);
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, reported) in [(OptimizerKind::Sgd, 0.02), (OptimizerKind::Ngd, 0.02), (OptimizerKind::Adam, 0.01)] {
        let chosen = summary.optimal_rate(kind);
        let ok = match (chosen.and_then(grid_index), grid_index(reported)) {
            (Some(i), Some(j)) => i.abs_diff(j) <= 1,
            _ => false,
        };
        pass &= ok;
        let cell = summary.cells.iter().find(|c| c.optimizer == kind && c.optimal);
        parts.push(format!(
            "{kind} {} (expected {reported}, median steps {})",
            chosen.map_or("none".into(), |r| r.to_string()),
            cell.and_then(|c| c.median_steps_to_threshold).map_or("inf".into(), |s| s.to_string()),
        ));
    }
    outcome(pass, format!("selected rates: {}", parts.join("; ")))
}

fn loss_columns(runs: &[(OptimizerKind, Vec<ConvergenceRecord>)]) -> Vec<Vec<String>> {
    runs.iter()
        .map(|(_, records)| {
            let mut buf = Vec::new();
            write_csv(records, &mut buf).unwrap();
            String::from_utf8(buf)
                .unwrap()
                .lines()
                .skip(1)
                .map(|l| l.split(',').nth(2).unwrap().to_string())
                .collect()
        })
        .collect()
}

fn determinism(first: &[(OptimizerKind, Vec<ConvergenceRecord>)]) -> Outcome {
    let second = single_photon_runs();
    let bits_equal = first.iter().zip(&second).all(|((_, a), (_, b))| {
        a.iter().zip(b).all(|(x, y)| {
            x.rows.len() == y.rows.len() && x.rows.iter().zip(&y.rows).all(|(p, q)| p.loss.to_bits() == q.loss.to_bits())
        })
    });
    let (ca, cb) = (loss_columns(first), loss_columns(&second));
    let rows: usize = ca.iter().map(Vec::len).sum();
    outcome(
        bits_equal && ca == cb,
        format!("{rows} CSV loss values compared across two runs of criterion 6"),
    )
}

fn report(index: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = result.pass && in_time;
    println!(
        "[{}] {index}. {name}: {} ({:.1}s of {}s budget{})",
        if pass { "PASS" } else { "FAIL" },
        result.detail,
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" },
    );
    pass
}

fn main() {
    let minute = Duration::from_secs(60);
    let mut all = true;
    all &= report(1, "gradient correctness", minute, gradient_correctness);
    all &= report(2, "metric correctness", minute, metric_correctness);
    all &= report(3, "global-phase invariance", minute, global_phase);
    all &= report(4, "polar fixture", minute, polar_fixture);
    all &= report(5, "real-parameter fallback", minute, real_fallback);
    let mut runs = Vec::new();
    all &= report(6, "single-photon reproduction", 10 * minute, || {
        runs = single_photon_runs();
        single_photon(&runs)
    });
    all &= report(7, "hex-GKP reproduction", 60 * minute, hex_gkp);
    all &= report(8, "learning-rate sweep", 30 * minute, rate_sweep);
    all &= report(9, "determinism", 10 * minute, || determinism(&runs));
    if !all {
        println!("acceptance: some criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
