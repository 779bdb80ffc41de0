//! Synthetic cohorts with a plantable mortality signal.
//!
//! Each patient draws two independent latent risks. `z` drives a planted
//! subset of diagnoses; `w` drives drift in a planted subset of lab
//! trajectories. Mortality loads on both, scaled by the signal strength `s`,
//! so at `s = 0` every generated quantity is independent of the outcome.
//!
//! Independently of `s`, each diagnosis is tied to a few "associated" labs
//! that are ordered more often and read higher for patients carrying it.
//! Risk carried by `z` therefore reaches the labs only through the
//! diagnosis structure, while `w` shows up in lab values alone.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LabEvent, PatientId, PatientRecord, Vocabulary};
use crate::linalg::sigmoid;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n_patients: usize,
    pub n_labs: usize,
    pub n_diagnoses: usize,
    /// Longest window the cohort must cover; events are generated for a few
    /// hours beyond it.
    pub window: usize,
    /// Signal strength in `[0, 1]`.
    pub signal: f64,
    /// Outcome prevalence at zero latent risk.
    #[serde(default = "default_prevalence")]
    pub prevalence: f64,
}

fn default_prevalence() -> f64 {
    0.25
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_patients: 500,
            n_labs: 30,
            n_diagnoses: 50,
            window: 12,
            signal: 1.0,
            prevalence: default_prevalence(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1");
        }
        if self.n_labs == 0 {
            return bad("n_labs must be at least 1");
        }
        if self.n_diagnoses < 2 {
            return bad("n_diagnoses must be at least 2");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.signal) {
            return bad("signal must lie in [0, 1]");
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad("prevalence must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(
            (0..self.n_labs).map(|i| format!("lab_{i:04}")).collect(),
            (0..self.n_diagnoses).map(|i| format!("dx_{i:04}")).collect(),
        )
    }
}

const OUTCOME_WEIGHT: f64 = 3.5;
const TRAJECTORY_WEIGHT: f64 = 1.5;
const DIAGNOSIS_WEIGHT: f64 = 2.5;
const DRIFT_WEIGHT: f64 = 1.5;
const LINKS_PER_DIAGNOSIS: usize = 4;
const ASSOCIATED_SHIFT: f64 = 0.8;
const MEASUREMENT_NOISE: f64 = 0.8;
const BASE_OBSERVE: f64 = 0.25;
const ASSOCIATED_OBSERVE: f64 = 0.4;
const MISSING_HOUR: f64 = 0.1;
const REPEAT_MEASUREMENT: f64 = 0.1;
const EXTRA_HOURS: usize = 6;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a cohort. The output is a pure function of `(config, seed)`.
pub fn generate_synthetic(config: &GenConfig, seed: u64) -> Result<(Vec<PatientRecord>, Vocabulary)> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let n_labs = config.n_labs;
    let n_diag = config.n_diagnoses;
    let s = config.signal;

    let planted_diag: BTreeSet<usize> = sample(&mut rng, n_diag, (n_diag / 5).max(1)).into_iter().collect();
    let planted_lab: BTreeSet<usize> = sample(&mut rng, n_labs, (n_labs / 5).max(1)).into_iter().collect();
    let lab_mean: Vec<f64> = (0..n_labs).map(|_| 5.0 + 2.0 * normal(&mut rng)).collect();
    let lab_scale: Vec<f64> = (0..n_labs).map(|_| rng.random_range(0.5..2.0)).collect();
    let links = LINKS_PER_DIAGNOSIS.min(n_labs);
    let associated: Vec<Vec<usize>> = (0..n_diag).map(|_| sample(&mut rng, n_labs, links).into_vec()).collect();
    let base_diag = logit((5.0 / n_diag as f64).min(0.3));
    let base_outcome = logit(config.prevalence);

    let mut records = Vec::with_capacity(config.n_patients);
    for i in 0..config.n_patients {
        let id = PatientId(format!("p{i:06}"));
        let z: f64 = normal(&mut rng);
        let w: f64 = normal(&mut rng);
        let died = rng.random_bool(sigmoid(base_outcome + s * (OUTCOME_WEIGHT * z + TRAJECTORY_WEIGHT * w)));

        let diagnoses: BTreeSet<usize> = (0..n_diag)
            .filter(|j| {
                let lift = if planted_diag.contains(j) { s * DIAGNOSIS_WEIGHT * z } else { 0.0 };
                rng.random_bool(sigmoid(base_diag + lift))
            })
            .collect();
        let mut lab_links = vec![0usize; n_labs];
        for &d in &diagnoses {
            for &lab in &associated[d] {
                lab_links[lab] += 1;
            }
        }

        let end_hour = rng.random_range(config.window / 2..=4 * config.window) as u32;
        let horizon = (end_hour as usize).min(config.window + EXTRA_HOURS);
        let mut events = Vec::new();
        for hour in 0..horizon {
            if rng.random_bool(MISSING_HOUR) {
                continue;
            }
            let progress = 1.0 - hour as f64 / config.window as f64;
            for lab in 0..n_labs {
                let linked = lab_links[lab] > 0;
                let p_obs = if linked { BASE_OBSERVE + ASSOCIATED_OBSERVE } else { BASE_OBSERVE };
                if !rng.random_bool(p_obs) {
                    continue;
                }
                let mut shift = ASSOCIATED_SHIFT * lab_links[lab] as f64;
                if planted_lab.contains(&lab) {
                    shift += s * DRIFT_WEIGHT * w * (0.5 + progress.max(0.0));
                }
                let repeats = if rng.random_bool(REPEAT_MEASUREMENT) { 2 } else { 1 };
                for _ in 0..repeats {
                    let noise = MEASUREMENT_NOISE * normal(&mut rng);
                    let offset: f64 = rng.random_range(0.0..1.0);
                    events.push(LabEvent {
                        patient_id: id.clone(),
                        hours_before_end: hour as f64 + offset,
                        lab_id: lab,
                        value: lab_mean[lab] + lab_scale[lab] * (shift + noise),
                    });
                }
            }
        }

        records.push(PatientRecord {
            patient_id: id,
            events,
            diagnoses,
            died,
            end_hour,
        });
    }
    Ok((records, config.vocabulary()))
}
