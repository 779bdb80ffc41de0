//! The heterogeneous graph embedding model.
//!
//! Every node type has its own projection into a shared `d`-dimensional
//! space, `c = act(W · x)`. Patient-hour nodes project their lab vector with
//! `W_p`; lab and diagnosis nodes are one-hot, so their projection reads a
//! single column of `W_i` or `W_d`. Relations act as translations in that
//! space:
//!
//! ```text
//! patient ≈ lab + r_ip
//! diagnosis ≈ patient + r_pd
//! next hour ≈ patient + r_tt
//! ```
//!
//! and a pair is scored by the dot product of the two sides after the
//! relation's translation (see [`score`]).

mod loss;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{HeteroGraph, NodeId, NodeType};
use crate::linalg::{add, dot, Matrix};
use crate::sampler::Relation;
use crate::{Error, Result};

pub use loss::{exact_softmax_grad, exact_softmax_loss, ns_grad, ns_loss, HgmGrad};
pub use train::{train_hgm, HgmTrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => crate::linalg::sigmoid(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Parameter blocks, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    PatientProjection,
    LabProjection,
    DiagnosisProjection,
    TestedRelation,
    DiagnosedRelation,
    TemporalRelation,
}

impl Block {
    pub const ALL: [Block; 6] = [
        Block::PatientProjection,
        Block::LabProjection,
        Block::DiagnosisProjection,
        Block::TestedRelation,
        Block::DiagnosedRelation,
        Block::TemporalRelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::PatientProjection => "w_patient",
            Block::LabProjection => "w_lab",
            Block::DiagnosisProjection => "w_diagnosis",
            Block::TestedRelation => "r_tested",
            Block::DiagnosedRelation => "r_diagnosed",
            Block::TemporalRelation => "r_temporal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgmParams {
    pub activation: Activation,
    /// `d × P_in`; shared by every patient-hour node.
    pub w_patient: Matrix,
    /// `d × L`
    pub w_lab: Matrix,
    /// `d × D`
    pub w_diagnosis: Matrix,
    pub r_tested: Vec<f64>,
    pub r_diagnosed: Vec<f64>,
    pub r_temporal: Vec<f64>,
}

impl HgmParams {
    pub fn zeros(dim: usize, patient_in: usize, n_labs: usize, n_diagnoses: usize, activation: Activation) -> Self {
        HgmParams {
            activation,
            w_patient: Matrix::zeros(dim, patient_in),
            w_lab: Matrix::zeros(dim, n_labs),
            w_diagnosis: Matrix::zeros(dim, n_diagnoses),
            r_tested: vec![0.0; dim],
            r_diagnosed: vec![0.0; dim],
            r_temporal: vec![0.0; dim],
        }
    }

    /// Every entry uniform in `[−0.5/d, 0.5/d]`.
    pub fn init<R: Rng>(
        dim: usize,
        patient_in: usize,
        n_labs: usize,
        n_diagnoses: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let b = 0.5 / dim as f64;
        let mut vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-b..=b)).collect() };
        let r_tested = vec(dim);
        let r_diagnosed = vec(dim);
        let r_temporal = vec(dim);
        HgmParams {
            activation,
            w_patient: Matrix::uniform(dim, patient_in, b, rng),
            w_lab: Matrix::uniform(dim, n_labs, b, rng),
            w_diagnosis: Matrix::uniform(dim, n_diagnoses, b, rng),
            r_tested,
            r_diagnosed,
            r_temporal,
        }
    }

    pub fn dim(&self) -> usize {
        self.r_tested.len()
    }

    pub fn block(&self, block: Block) -> &[f64] {
        match block {
            Block::PatientProjection => &self.w_patient.data,
            Block::LabProjection => &self.w_lab.data,
            Block::DiagnosisProjection => &self.w_diagnosis.data,
            Block::TestedRelation => &self.r_tested,
            Block::DiagnosedRelation => &self.r_diagnosed,
            Block::TemporalRelation => &self.r_temporal,
        }
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        match block {
            Block::PatientProjection => &mut self.w_patient.data,
            Block::LabProjection => &mut self.w_lab.data,
            Block::DiagnosisProjection => &mut self.w_diagnosis.data,
            Block::TestedRelation => &mut self.r_tested,
            Block::DiagnosedRelation => &mut self.r_diagnosed,
            Block::TemporalRelation => &mut self.r_temporal,
        }
    }

    pub fn is_finite(&self) -> bool {
        Block::ALL.iter().all(|&b| self.block(b).iter().all(|v| v.is_finite()))
    }

    fn projection(&self, node_type: NodeType) -> &Matrix {
        match node_type {
            NodeType::PatientHour => &self.w_patient,
            NodeType::Lab => &self.w_lab,
            NodeType::Diagnosis => &self.w_diagnosis,
        }
    }

    pub fn relation(&self, relation: Relation) -> Option<&[f64]> {
        match relation {
            Relation::Tested => Some(&self.r_tested),
            Relation::Diagnosed => Some(&self.r_diagnosed),
            Relation::Temporal => Some(&self.r_temporal),
            Relation::CoPatient => None,
        }
    }

    /// Embedding of a graph node.
    pub fn embed_node(&self, graph: &HeteroGraph, node: NodeId) -> Vec<f64> {
        let act = self.activation;
        match node {
            NodeId::PatientHour(ph) => self.w_patient.mul_vec(graph.features(ph)).into_iter().map(|z| act.apply(z)).collect(),
            NodeId::Lab(l) => self.w_lab.column(l).into_iter().map(|z| act.apply(z)).collect(),
            NodeId::Diagnosis(d) => self.w_diagnosis.column(d).into_iter().map(|z| act.apply(z)).collect(),
        }
    }
}

/// `act(W · x)` with the projection of `node_type`.
pub fn project(params: &HgmParams, node_type: NodeType, raw: &[f64]) -> Result<Vec<f64>> {
    let w = params.projection(node_type);
    if raw.len() != w.cols {
        return Err(Error::Dimension {
            expected: w.cols,
            actual: raw.len(),
        });
    }
    Ok(w.mul_vec(raw).into_iter().map(|z| params.activation.apply(z)).collect())
}

/// `c + r`
pub fn translate(c: &[f64], relation: &[f64]) -> Vec<f64> {
    debug_assert_eq!(c.len(), relation.len());
    add(c, relation)
}

/// Similarity between a patient-hour center and a context node:
///
/// | relation    | score                 |
/// |-------------|-----------------------|
/// | tested      | `(c_lab + r_ip) · u`  |
/// | diagnosed   | `(u + r_pd) · c_dx`   |
/// | co-patient  | `u · c_q`             |
/// | temporal    | `(u + r_tt) · c_next` |
pub fn score(params: &HgmParams, relation: Relation, center: &[f64], neighbor: &[f64]) -> f64 {
    match relation {
        Relation::Tested => dot(&translate(neighbor, &params.r_tested), center),
        Relation::Diagnosed => dot(&translate(center, &params.r_diagnosed), neighbor),
        Relation::Temporal => dot(&translate(center, &params.r_temporal), neighbor),
        Relation::CoPatient => dot(center, neighbor),
    }
}

/// An hour's lab input as seen by [`embed_patient_hour`].
#[derive(Debug, Clone, Copy)]
pub enum HourInput<'a> {
    /// Normalized lab vector of an hour with at least one observation.
    Observed(&'a [f64]),
    Missing,
}

/// Patient-hour embedding with temporal imputation: an hour without any lab
/// observation is the previous (older) hour's embedding translated by
/// `r_tt`, or zero when there is no previous hour.
pub fn embed_patient_hour(params: &HgmParams, input: HourInput<'_>, previous: Option<&[f64]>) -> Result<Vec<f64>> {
    match (input, previous) {
        (HourInput::Observed(x), _) => project(params, NodeType::PatientHour, x),
        (HourInput::Missing, Some(prev)) => Ok(translate(prev, &params.r_temporal)),
        (HourInput::Missing, None) => Ok(vec![0.0; params.dim()]),
    }
}
