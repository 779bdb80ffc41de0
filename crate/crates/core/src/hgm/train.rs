use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::ns_loss_and_grad;
use super::{Activation, HgmParams};
use crate::graph::{HeteroGraph, PatientHour};
use crate::sampler::{sample_context, SamplerConfig};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HgmTrainConfig {
    /// Initial step size, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub epochs: usize,
    pub dim: usize,
    pub activation: Activation,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for HgmTrainConfig {
    fn default() -> Self {
        HgmTrainConfig {
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            epochs: 5,
            dim: 128,
            activation: Activation::Tanh,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

impl HgmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("hgm learning_rate must be positive".into()));
        }
        if !(self.min_learning_rate >= 0.0 && self.min_learning_rate <= self.learning_rate) {
            return Err(Error::Config("hgm min_learning_rate must lie in [0, learning_rate]".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("hgm dim must be at least 2".into()));
        }
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean context loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Centers skipped per epoch because they had neither labs nor diagnoses.
    pub skipped_centers: usize,
}

/// Plain SGD over every patient-hour center, one negative-sampling step per
/// sampled context. Centers are reshuffled every epoch. The result depends
/// only on the graph and the config.
pub fn train_hgm(graph: &HeteroGraph, config: &HgmTrainConfig) -> Result<(HgmParams, TrainReport)> {
    config.validate()?;
    if graph.n_patient_hours() == 0 {
        return Err(Error::Config("cannot train on an empty graph".into()));
    }
    let mut rng = seed::rng(config.seed);
    let mut params = HgmParams::init(
        config.dim,
        graph.n_labs(),
        graph.n_labs(),
        graph.n_diagnoses(),
        config.activation,
        &mut rng,
    );

    let mut centers: Vec<PatientHour> = graph
        .patient_hours()
        .filter(|&ph| !(graph.tested(ph).is_empty() && graph.diagnoses(ph.patient).is_empty()))
        .collect();
    let skipped = graph.n_patient_hours() - centers.len();
    if skipped > 0 {
        debug!("skipping {skipped} untrainable centers per epoch");
    }

    let total_steps = (config.epochs * centers.len()).max(1) as f64;
    let mut step = 0usize;
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        skipped_centers: skipped,
    };
    for epoch in 0..config.epochs {
        centers.shuffle(&mut rng);
        let mut total = 0.0;
        for &center in &centers {
            let lr = config.learning_rate - (config.learning_rate - config.min_learning_rate) * (step as f64 / total_steps);
            step += 1;
            let context = sample_context(graph, center, &config.sampler, &mut rng)?;
            let (loss, grad) = ns_loss_and_grad(&params, graph, &context, true);
            total += loss;
            grad.expect("gradient requested").apply(&mut params, lr);
        }
        let mean = total / centers.len().max(1) as f64;
        debug!("hgm epoch {epoch}: mean context loss {mean:.4}");
        report.epoch_losses.push(mean);
        if !params.is_finite() {
            return Err(Error::Diverged("hgm"));
        }
    }
    if let Some(last) = report.epoch_losses.last() {
        info!("hgm trained {} epochs, final mean loss {last:.4}", config.epochs);
    }
    Ok((params, report))
}
