//! The heterogeneous patient-hour / lab / diagnosis graph.
//!
//! Patient-hour nodes are indexed by `(patient ordinal, hour)` and carry the
//! hour's lab vector. Lab and diagnosis nodes are indexed by vocabulary id.
//! Edges:
//!
//! * *tested*: patient-hour → every lab observed during that hour;
//! * *diagnosed*: patient → diagnosis, shared by all of the patient's hours;
//! * *temporal*: `(p, h)` → `(p, h − 1)`, one hour closer to the endpoint.
//!
//! Patient–patient similarity (two hops through a shared diagnosis) is not
//! stored; it is answered from the diagnosis adjacency on demand.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::ingest::{bin_events, Normalizer, PatientId, PatientRecord, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NodeType {
    PatientHour,
    Lab,
    Diagnosis,
}

impl NodeType {
    pub fn name(self) -> &'static str {
        match self {
            NodeType::PatientHour => "patient-hour",
            NodeType::Lab => "lab",
            NodeType::Diagnosis => "diagnosis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PatientHour {
    pub patient: usize,
    pub hour: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NodeId {
    PatientHour(PatientHour),
    Lab(usize),
    Diagnosis(usize),
}

impl NodeId {
    pub fn node_type(&self) -> NodeType {
        match self {
            NodeId::PatientHour(_) => NodeType::PatientHour,
            NodeId::Lab(_) => NodeType::Lab,
            NodeId::Diagnosis(_) => NodeType::Diagnosis,
        }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::PatientHour(ph) => write!(f, "patient-hour({}, {})", ph.patient, ph.hour),
            NodeId::Lab(i) => write!(f, "lab({i})"),
            NodeId::Diagnosis(i) => write!(f, "diagnosis({i})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeteroGraph {
    window: usize,
    n_labs: usize,
    n_diagnoses: usize,
    patients: Vec<PatientId>,
    /// X_p per patient-hour, indexed `patient * window + hour`.
    features: Vec<Vec<f64>>,
    tested: Vec<Vec<usize>>,
    tested_rev: Vec<Vec<PatientHour>>,
    diagnosed: Vec<Vec<usize>>,
    diagnosed_rev: Vec<Vec<usize>>,
}

/// Builds the graph over `window_hours` hourly bins per record.
///
/// When `normalizer` is given the attached lab vectors are z-scored with it.
pub fn build_graph(
    records: &[PatientRecord],
    vocab: &Vocabulary,
    window_hours: usize,
    normalizer: Option<&Normalizer>,
) -> HeteroGraph {
    let n_labs = vocab.n_labs();
    let n_diagnoses = vocab.n_diagnoses();
    let n_nodes = records.len() * window_hours;
    let mut g = HeteroGraph {
        window: window_hours,
        n_labs,
        n_diagnoses,
        patients: Vec::with_capacity(records.len()),
        features: Vec::with_capacity(n_nodes),
        tested: Vec::with_capacity(n_nodes),
        tested_rev: vec![Vec::new(); n_labs],
        diagnosed: Vec::with_capacity(records.len()),
        diagnosed_rev: vec![Vec::new(); n_diagnoses],
    };
    for (patient, record) in records.iter().enumerate() {
        g.patients.push(record.patient_id.clone());
        for snap in bin_events(record, n_labs, window_hours) {
            let labs: Vec<usize> = snap.observed_labs().collect();
            for &l in &labs {
                g.tested_rev[l].push(PatientHour { patient, hour: snap.hour });
            }
            g.tested.push(labs);
            g.features.push(match normalizer {
                Some(n) => n.apply(&snap),
                None => snap.lab_values,
            });
        }
        let dx: Vec<usize> = record.diagnoses.iter().copied().filter(|&d| d < n_diagnoses).collect();
        for &d in &dx {
            g.diagnosed_rev[d].push(patient);
        }
        g.diagnosed.push(dx);
    }
    g
}

/// Binary indicator vector of length `size` with ones at `indices`.
pub fn multi_hot(indices: &BTreeSet<usize>, size: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; size];
    for &i in indices {
        if i >= size {
            return Err(Error::IndexOutOfRange { index: i, size });
        }
        v[i] = 1.0;
    }
    Ok(v)
}

/// Inverse of [`multi_hot`].
pub fn support(v: &[f64]) -> BTreeSet<usize> {
    v.iter()
        .enumerate()
        .filter_map(|(i, &x)| (x != 0.0).then_some(i))
        .collect()
}

impl HeteroGraph {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_labs(&self) -> usize {
        self.n_labs
    }

    pub fn n_diagnoses(&self) -> usize {
        self.n_diagnoses
    }

    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_patient_hours(&self) -> usize {
        self.features.len()
    }

    pub fn patient_id(&self, patient: usize) -> &PatientId {
        &self.patients[patient]
    }

    pub fn patient_hours(&self) -> impl Iterator<Item = PatientHour> + '_ {
        let w = self.window;
        (0..self.patients.len()).flat_map(move |patient| (0..w).map(move |hour| PatientHour { patient, hour }))
    }

    fn slot(&self, ph: PatientHour) -> usize {
        ph.patient * self.window + ph.hour
    }

    pub fn contains(&self, node: NodeId) -> bool {
        match node {
            NodeId::PatientHour(ph) => ph.patient < self.patients.len() && ph.hour < self.window,
            NodeId::Lab(l) => l < self.n_labs,
            NodeId::Diagnosis(d) => d < self.n_diagnoses,
        }
    }

    /// X_p of a patient-hour node.
    pub fn features(&self, ph: PatientHour) -> &[f64] {
        &self.features[self.slot(ph)]
    }

    pub fn tested(&self, ph: PatientHour) -> &[usize] {
        &self.tested[self.slot(ph)]
    }

    pub fn tested_by(&self, lab: usize) -> &[PatientHour] {
        &self.tested_rev[lab]
    }

    pub fn diagnoses(&self, patient: usize) -> &[usize] {
        &self.diagnosed[patient]
    }

    pub fn diagnosed_patients(&self, diagnosis: usize) -> &[usize] {
        &self.diagnosed_rev[diagnosis]
    }

    /// The node one hour closer to the endpoint, if any.
    pub fn temporal_next(&self, ph: PatientHour) -> Option<PatientHour> {
        (ph.hour > 0).then(|| PatientHour {
            patient: ph.patient,
            hour: ph.hour - 1,
        })
    }

    /// Other patients sharing at least one diagnosis with `patient`.
    pub fn copatients(&self, patient: usize) -> BTreeSet<usize> {
        self.diagnosed[patient]
            .iter()
            .flat_map(|&d| self.diagnosed_rev[d].iter().copied())
            .filter(|&q| q != patient)
            .collect()
    }

    /// Neighbors of `node` with type `target`. Patient-hour → patient-hour
    /// neighbors are the hours of patients sharing a diagnosis plus the
    /// temporal successor.
    pub fn neighbors(&self, node: NodeId, target: NodeType) -> Vec<NodeId> {
        let w = self.window;
        let hours_of = move |patient: usize| (0..w).map(move |hour| NodeId::PatientHour(PatientHour { patient, hour }));
        match (node, target) {
            (NodeId::PatientHour(ph), NodeType::Lab) => self.tested(ph).iter().map(|&l| NodeId::Lab(l)).collect(),
            (NodeId::PatientHour(ph), NodeType::Diagnosis) => {
                self.diagnoses(ph.patient).iter().map(|&d| NodeId::Diagnosis(d)).collect()
            }
            (NodeId::PatientHour(ph), NodeType::PatientHour) => {
                let mut out: Vec<NodeId> = self.copatients(ph.patient).into_iter().flat_map(hours_of).collect();
                out.extend(self.temporal_next(ph).map(NodeId::PatientHour));
                out
            }
            (NodeId::Lab(l), NodeType::PatientHour) => self.tested_rev[l].iter().map(|&ph| NodeId::PatientHour(ph)).collect(),
            (NodeId::Diagnosis(d), NodeType::PatientHour) => {
                self.diagnosed_rev[d].iter().flat_map(|&p| hours_of(p)).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Writes one JSON object per node and per edge. Debugging aid only.
    pub fn dump_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("graph dump", e);
        for ph in self.patient_hours() {
            let line = serde_json::json!({
                "node": "patient-hour",
                "patient": self.patients[ph.patient].0,
                "hour": ph.hour,
                "features": self.features(ph),
            });
            writeln!(out, "{line}").map_err(io)?;
            for &l in self.tested(ph) {
                writeln!(out, "{}", serde_json::json!({"edge": "tested", "patient": ph.patient, "hour": ph.hour, "lab": l})).map_err(io)?;
            }
            if let Some(next) = self.temporal_next(ph) {
                writeln!(out, "{}", serde_json::json!({"edge": "temporal", "patient": ph.patient, "from": ph.hour, "to": next.hour})).map_err(io)?;
            }
        }
        for (p, dx) in self.diagnosed.iter().enumerate() {
            for &d in dx {
                writeln!(out, "{}", serde_json::json!({"edge": "diagnosed", "patient": p, "diagnosis": d})).map_err(io)?;
            }
        }
        Ok(())
    }
}
