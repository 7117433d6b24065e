use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, JacobianView, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::MetricStructure;
use crate::optim::{AdamParams, NgdParams, OptimizerKind, OptimizerState};
use crate::targets::{fidelity_loss, fidelity_loss_and_grad, TargetState};

use super::config::ExperimentConfig;
use super::worker_pool;

/// Share of the Fock levels, counted from the top, watched for leakage.
pub const LEAKAGE_FRACTION: f64 = 0.1;
/// Norm allowed in the watched levels before a run is flagged.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub loss: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    StepBudget,
    /// Index of the step that produced a non-finite value.
    Diverged(usize),
}

/// The trace of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub status: RunStatus,
    /// First step at which the loss reached the threshold.
    pub steps_to_threshold: Option<usize>,
    pub leakage_warning: bool,
    pub rows: Vec<StepRow>,
}

impl ConvergenceRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged(_))
    }
}

/// Runs every seed of `config`, in parallel, returning records in seed order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ConvergenceRecord>> {
    config.validate()?;
    let target = config.target()?;
    let circuit = Circuit::new(config.layers, config.cutoff)?;
    worker_pool()?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(config, &circuit, &target, seed))
            .collect()
    })
}

/// The per-layer Jacobian unless a full metric needs every column.
fn jacobian_for<'c>(circuit: &'c Circuit, params: &ParamVector, full: bool) -> Result<Box<dyn JacobianView + 'c>> {
    Ok(if full {
        Box::new(circuit.jacobian(params)?)
    } else {
        Box::new(circuit.layer_jacobian(params)?)
    })
}

/// One optimization from the seeded initialization.
pub fn run_seed(
    config: &ExperimentConfig,
    circuit: &Circuit,
    target: &TargetState,
    seed: u64,
) -> Result<ConvergenceRecord> {
    let steps = config.steps();
    let start = Instant::now();
    let mut params = ParamVector::random(config.layers, config.init_scale, seed)?;
    let ngd = NgdParams {
        lambda: config.ngd_lambda,
        structure: config.ngd_structure,
    };
    let mut optimizer = OptimizerState::with_params(
        config.optimizer,
        config.learning_rate,
        params.len(),
        AdamParams::default(),
        ngd,
    )?;

    let full_metric = config.optimizer == OptimizerKind::Ngd && config.ngd_structure == MetricStructure::Full;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut status = RunStatus::StepBudget;
    let mut steps_to_threshold = None;
    let mut leakage_warning = false;

    for step in 0..=steps {
        let last = step == steps;
        let evaluated = if last {
            circuit
                .forward(&params)
                .and_then(|psi| Ok((fidelity_loss(&psi, target)?, psi, None)))
        } else {
            jacobian_for(circuit, &params, full_metric).and_then(|jac| {
                let (loss, grad) = fidelity_loss_and_grad(jac.as_ref(), target)?;
                Ok((loss, jac.psi().clone(), Some((jac, grad))))
            })
        };
        let (loss, psi, pending) = match evaluated {
            Ok(v) => v,
            Err(Error::InvalidParameter(_)) => {
                status = RunStatus::Diverged(step);
                break;
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            status = RunStatus::Diverged(step);
            break;
        }
        if !leakage_warning && psi.tail_weight(LEAKAGE_FRACTION) > LEAKAGE_LIMIT {
            leakage_warning = true;
            log::warn!(
                "seed {seed}: {:.2e} of the norm sits in the top {}% of levels at step {step}; the cutoff may be too small",
                psi.tail_weight(LEAKAGE_FRACTION),
                LEAKAGE_FRACTION * 100.0
            );
        }
        rows.push(StepRow {
            step,
            loss,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if loss <= config.threshold && steps_to_threshold.is_none() {
            steps_to_threshold = Some(step);
            if config.stop_at_threshold {
                break;
            }
        }
        let Some((jac, grad)) = pending else { break };
        match optimizer.step(&mut params, &grad, Some(jac.as_ref())) {
            Ok(()) => {}
            Err(Error::Divergence { .. }) | Err(Error::Numeric(_)) => {
                status = RunStatus::Diverged(step + 1);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if status == RunStatus::StepBudget && steps_to_threshold.is_some() {
        status = RunStatus::Converged;
    }
    if let RunStatus::Diverged(step) = status {
        log::warn!("seed {seed}: run diverged at step {step}");
    }
    Ok(ConvergenceRecord {
        seed,
        config: config.clone(),
        status,
        steps_to_threshold,
        leakage_warning,
        rows,
    })
}
