use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;

use super::config::ExperimentConfig;
use super::run::{run_seed, ConvergenceRecord};
use super::stats::median;
use super::worker_pool;

pub const DEFAULT_RATES: [f64; 9] = [1e-4, 5e-4, 1e-3, 5e-3, 0.01, 0.02, 0.05, 0.1, 0.5];

/// Aggregate over the seeds of one (optimizer, rate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seeds: usize,
    pub median_final_loss: f64,
    /// `None` when fewer than half the seeds reached the threshold.
    pub median_steps_to_threshold: Option<f64>,
    pub divergences: usize,
    pub optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: ExperimentConfig,
    pub cells: Vec<SweepCell>,
}

impl SweepSummary {
    pub fn optimal_rate(&self, optimizer: OptimizerKind) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.optimizer == optimizer && c.optimal)
            .map(|c| c.learning_rate)
    }
}

/// Runs optimizer × rate × seed and summarizes each cell. Among cells with
/// no divergences, the rate with the smallest median steps-to-threshold is
/// marked optimal, ties going to the lower median final loss.
pub fn sweep(
    config: &ExperimentConfig,
    rates: &[f64],
    optimizers: &[OptimizerKind],
) -> Result<(SweepSummary, Vec<ConvergenceRecord>)> {
    if rates.is_empty() || optimizers.is_empty() {
        return Err(Error::Config("sweep needs at least one rate and one optimizer".into()));
    }
    config.validate()?;
    let target = config.target()?;
    let circuit = Circuit::new(config.layers, config.cutoff)?;
    let mut jobs = Vec::new();
    for &optimizer in optimizers {
        for &rate in rates {
            let mut cell = config.clone();
            cell.optimizer = optimizer;
            cell.learning_rate = rate;
            cell.validate()?;
            for &seed in &config.seeds {
                jobs.push((cell.clone(), seed));
            }
        }
    }
    let records: Vec<ConvergenceRecord> = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|(cell, seed)| run_seed(cell, &circuit, &target, *seed))
            .collect::<Result<_>>()
    })?;

    let mut cells = Vec::new();
    for (chunk, (optimizer, rate)) in records.chunks(config.seeds.len()).zip(
        optimizers
            .iter()
            .flat_map(|&o| rates.iter().map(move |&r| (o, r))),
    ) {
        let finals: Vec<f64> = chunk
            .iter()
            .map(|r| if r.diverged() { f64::INFINITY } else { r.final_loss().unwrap_or(f64::INFINITY) })
            .collect();
        let steps: Vec<f64> = chunk
            .iter()
            .map(|r| r.steps_to_threshold.map_or(f64::INFINITY, |s| s as f64))
            .collect();
        let median_steps = median(&steps);
        cells.push(SweepCell {
            optimizer,
            learning_rate: rate,
            seeds: chunk.len(),
            median_final_loss: median(&finals),
            median_steps_to_threshold: median_steps.is_finite().then_some(median_steps),
            divergences: chunk.iter().filter(|r| r.diverged()).count(),
            optimal: false,
        });
    }
    for &optimizer in optimizers {
        let best = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.optimizer == optimizer && c.divergences == 0)
            .min_by(|(_, a), (_, b)| {
                let sa = a.median_steps_to_threshold.unwrap_or(f64::INFINITY);
                let sb = b.median_steps_to_threshold.unwrap_or(f64::INFINITY);
                sa.total_cmp(&sb)
                    .then(a.median_final_loss.total_cmp(&b.median_final_loss))
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            cells[i].optimal = true;
        }
    }
    Ok((
        SweepSummary {
            config: config.clone(),
            cells,
        },
        records,
    ))
}
