#![allow(dead_code)]

use hgm_ehr::graph::{build_graph, HeteroGraph, NodeId, PatientHour};
use hgm_ehr::hgm::{score, HgmParams};
use hgm_ehr::ingest::{LabEvent, PatientRecord, Vocabulary};
use hgm_ehr::linalg::sigmoid;
use hgm_ehr::sampler::{is_negative_for, Relation};

pub fn rec(id: &str, labs: &[(f64, usize, f64)], dx: &[usize], died: bool) -> PatientRecord {
    PatientRecord {
        patient_id: id.into(),
        events: labs
            .iter()
            .map(|&(h, l, v)| LabEvent {
                patient_id: id.into(),
                hours_before_end: h,
                lab_id: l,
                value: v,
            })
            .collect(),
        diagnoses: dx.iter().copied().collect(),
        died,
        end_hour: 24,
    }
}

pub fn vocab(l: usize, d: usize) -> Vocabulary {
    Vocabulary::new(
        (0..l).map(|i| format!("lab{i}")).collect(),
        (0..d).map(|i| format!("dx{i}")).collect(),
    )
}

/// Ten nodes: two patients × two hours, three labs, three diagnoses.
pub fn toy_graph() -> HeteroGraph {
    build_graph(
        &[
            rec("a", &[(0.5, 0, 1.0), (0.5, 1, -0.5), (1.5, 0, -1.0)], &[0, 1], true),
            rec("b", &[(0.5, 2, 0.8), (1.5, 2, -0.3), (1.5, 1, 1.2)], &[2], false),
        ],
        &vocab(3, 3),
        2,
        None,
    )
}

/// Every (relation, node) pair around `center` split into true neighbors and
/// eligible negatives.
pub fn exhaustive_pairs(g: &HeteroGraph, center: PatientHour) -> (Vec<(Relation, NodeId)>, Vec<(Relation, NodeId)>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for l in 0..g.n_labs() {
        let n = NodeId::Lab(l);
        if g.tested(center).contains(&l) {
            pos.push((Relation::Tested, n));
        } else {
            neg.push((Relation::Tested, n));
        }
    }
    for d in 0..g.n_diagnoses() {
        let n = NodeId::Diagnosis(d);
        if g.diagnoses(center.patient).contains(&d) {
            pos.push((Relation::Diagnosed, n));
        } else {
            neg.push((Relation::Diagnosed, n));
        }
    }
    let copatients = g.copatients(center.patient);
    for ph in g.patient_hours() {
        let n = NodeId::PatientHour(ph);
        if copatients.contains(&ph.patient) {
            pos.push((Relation::CoPatient, n));
        } else if is_negative_for(g, center, n) {
            neg.push((Relation::CoPatient, n));
        }
    }
    if let Some(next) = g.temporal_next(center) {
        pos.push((Relation::Temporal, NodeId::PatientHour(next)));
        for ph in g.patient_hours() {
            if is_negative_for(g, center, NodeId::PatientHour(ph)) {
                neg.push((Relation::Temporal, NodeId::PatientHour(ph)));
            }
        }
    }
    (pos, neg)
}

/// Mean σ(score) over all positive and all negative pairs of trainable centers.
pub fn separation(params: &HgmParams, g: &HeteroGraph) -> (f64, f64) {
    let (mut sp, mut np, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for center in g.patient_hours() {
        let u = params.embed_node(g, NodeId::PatientHour(center));
        let (pos, neg) = exhaustive_pairs(g, center);
        for (rel, n) in pos {
            sp += sigmoid(score(params, rel, &u, &params.embed_node(g, n)));
            np += 1;
        }
        for (rel, n) in neg {
            sn += sigmoid(score(params, rel, &u, &params.embed_node(g, n)));
            nn += 1;
        }
    }
    (sp / np as f64, sn / nn as f64)
}
