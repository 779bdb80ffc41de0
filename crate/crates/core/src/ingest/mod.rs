//! Clinical event ingestion and hourly binning.
//!
//! Hours are counted backwards from the endpoint (death or ICU discharge).
//! Hour bin `h` covers the half-open interval `[h, h + 1)` hours before the
//! endpoint, so a window of `w` hours yields bins `0..w` with bin 0 adjacent
//! to the endpoint.

mod normalize;
mod parse;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use normalize::{LabStats, Normalizer};
pub use parse::{
    parse_records, write_records, DIAGNOSES_HEADER, EVENTS_HEADER, OUTCOMES_HEADER,
};
pub use synth::{generate_synthetic, GenConfig};

/// Windows used throughout the experiments, in hours before the endpoint.
pub const DEFAULT_WINDOWS: [usize; 4] = [6, 12, 24, 48];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientId(pub String);

impl std::fmt::Display for PatientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PatientId {
    fn from(s: &str) -> Self {
        PatientId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEvent {
    pub patient_id: PatientId,
    pub hours_before_end: f64,
    pub lab_id: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: PatientId,
    pub events: Vec<LabEvent>,
    pub diagnoses: BTreeSet<usize>,
    pub died: bool,
    pub end_hour: u32,
}

/// Dense name ↔ index maps for lab tests and diagnoses.
///
/// Serialized as `{"labs": [...], "diagnoses": [...]}` in index order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    labs: Vec<String>,
    diagnoses: Vec<String>,
    lab_index: HashMap<String, usize>,
    diagnosis_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    labs: Vec<String>,
    diagnoses: Vec<String>,
}

impl From<VocabularyFile> for Vocabulary {
    fn from(f: VocabularyFile) -> Self {
        Vocabulary::new(f.labs, f.diagnoses)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            labs: v.labs,
            diagnoses: v.diagnoses,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from names in index order. Duplicate names keep
    /// their first index.
    pub fn new(labs: Vec<String>, diagnoses: Vec<String>) -> Self {
        let mut v = Vocabulary::default();
        for name in labs {
            v.lab_id_or_insert(&name);
        }
        for name in diagnoses {
            v.diagnosis_id_or_insert(&name);
        }
        v
    }

    pub fn n_labs(&self) -> usize {
        self.labs.len()
    }

    pub fn n_diagnoses(&self) -> usize {
        self.diagnoses.len()
    }

    pub fn labs(&self) -> &[String] {
        &self.labs
    }

    pub fn diagnoses(&self) -> &[String] {
        &self.diagnoses
    }

    pub fn lab_id(&self, name: &str) -> Option<usize> {
        self.lab_index.get(name).copied()
    }

    pub fn diagnosis_id(&self, name: &str) -> Option<usize> {
        self.diagnosis_index.get(name).copied()
    }

    pub fn lab_id_or_insert(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lab_index.get(name) {
            return i;
        }
        let i = self.labs.len();
        self.labs.push(name.to_string());
        self.lab_index.insert(name.to_string(), i);
        i
    }

    pub fn diagnosis_id_or_insert(&mut self, name: &str) -> usize {
        if let Some(&i) = self.diagnosis_index.get(name) {
            return i;
        }
        let i = self.diagnoses.len();
        self.diagnoses.push(name.to_string());
        self.diagnosis_index.insert(name.to_string(), i);
        i
    }
}

/// One patient's state during one hourly bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HourSnapshot {
    pub patient_id: PatientId,
    pub hour: usize,
    /// Within-hour averages; 0.0 where unobserved.
    pub lab_values: Vec<f64>,
    pub lab_observed: Vec<bool>,
}

impl HourSnapshot {
    pub fn any_observed(&self) -> bool {
        self.lab_observed.iter().any(|&o| o)
    }

    pub fn observed_labs(&self) -> impl Iterator<Item = usize> + '_ {
        self.lab_observed
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| o.then_some(i))
    }
}

/// Bins a record's lab events into `window_hours` hourly snapshots, indexed
/// `0..window_hours` backwards from the endpoint.
///
/// Repeated measurements of a lab within one hour are averaged. Values are
/// summed in sorted order so the result does not depend on event order.
/// Events at or beyond `window_hours` are dropped.
pub fn bin_events(record: &PatientRecord, n_labs: usize, window_hours: usize) -> Vec<HourSnapshot> {
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for ev in &record.events {
        let hour = ev.hours_before_end.floor();
        if !(hour >= 0.0 && hour < window_hours as f64) || ev.lab_id >= n_labs {
            continue;
        }
        cells
            .entry((hour as usize, ev.lab_id))
            .or_default()
            .push(ev.value);
    }

    let mut snapshots: Vec<HourSnapshot> = (0..window_hours)
        .map(|hour| HourSnapshot {
            patient_id: record.patient_id.clone(),
            hour,
            lab_values: vec![0.0; n_labs],
            lab_observed: vec![false; n_labs],
        })
        .collect();
    for ((hour, lab), mut values) in cells {
        values.sort_by(f64::total_cmp);
        let avg = values.iter().sum::<f64>() / values.len() as f64;
        snapshots[hour].lab_values[lab] = avg;
        snapshots[hour].lab_observed[lab] = true;
    }
    snapshots
}
