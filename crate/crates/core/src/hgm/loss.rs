//! Skip-gram objectives and their analytic gradients.
//!
//! With `s` a pair score and `y ∈ {+1, −1}` its label, the negative-sampling
//! loss is `Σ −ln σ(y·s)`, so `∂ℓ/∂s = σ(s) − [y = +1]`. The exact softmax
//! loss over all candidates `V` is `Σ_{c ∈ N(u)} (ln Z_u − s_c)`, with
//! `∂ℓ/∂s_v = |N(u)|·softmax(s)_v − [v ∈ N(u)]`. Both push `∂ℓ/∂s` through
//! the same pair-scoring and projection chain rule.

use std::collections::BTreeMap;

use super::{score, Block, HgmParams};
use crate::graph::{HeteroGraph, NodeId, PatientHour};
use crate::linalg::{axpy, log_sigmoid, log_sum_exp, sigmoid, Matrix};
use crate::sampler::{ContextSample, Relation};

/// Gradient mirroring [`HgmParams`]. Lab and diagnosis projections are kept
/// as sparse columns since a context touches only a few of them.
#[derive(Debug, Clone, PartialEq)]
pub struct HgmGrad {
    pub w_patient: Matrix,
    pub w_lab: BTreeMap<usize, Vec<f64>>,
    pub w_diagnosis: BTreeMap<usize, Vec<f64>>,
    pub r_tested: Vec<f64>,
    pub r_diagnosed: Vec<f64>,
    pub r_temporal: Vec<f64>,
}

impl HgmGrad {
    pub fn zeros_like(params: &HgmParams) -> Self {
        let d = params.dim();
        HgmGrad {
            w_patient: Matrix::zeros(d, params.w_patient.cols),
            w_lab: BTreeMap::new(),
            w_diagnosis: BTreeMap::new(),
            r_tested: vec![0.0; d],
            r_diagnosed: vec![0.0; d],
            r_temporal: vec![0.0; d],
        }
    }

    /// Entry at a row-major flat index of `block`, matching
    /// [`HgmParams::block`] layout.
    pub fn entry(&self, params: &HgmParams, block: Block, index: usize) -> f64 {
        let sparse = |cols: usize, map: &BTreeMap<usize, Vec<f64>>| {
            let (row, col) = (index / cols, index % cols);
            map.get(&col).map_or(0.0, |v| v[row])
        };
        match block {
            Block::PatientProjection => self.w_patient.data[index],
            Block::LabProjection => sparse(params.w_lab.cols, &self.w_lab),
            Block::DiagnosisProjection => sparse(params.w_diagnosis.cols, &self.w_diagnosis),
            Block::TestedRelation => self.r_tested[index],
            Block::DiagnosedRelation => self.r_diagnosed[index],
            Block::TemporalRelation => self.r_temporal[index],
        }
    }

    /// `params −= lr · self`
    pub fn apply(&self, params: &mut HgmParams, lr: f64) {
        axpy(-lr, &self.w_patient.data, &mut params.w_patient.data);
        for (&col, g) in &self.w_lab {
            for (row, &v) in g.iter().enumerate() {
                *params.w_lab.get_mut(row, col) -= lr * v;
            }
        }
        for (&col, g) in &self.w_diagnosis {
            for (row, &v) in g.iter().enumerate() {
                *params.w_diagnosis.get_mut(row, col) -= lr * v;
            }
        }
        axpy(-lr, &self.r_tested, &mut params.r_tested);
        axpy(-lr, &self.r_diagnosed, &mut params.r_diagnosed);
        axpy(-lr, &self.r_temporal, &mut params.r_temporal);
    }

    pub fn add_assign(&mut self, other: &HgmGrad) {
        axpy(1.0, &other.w_patient.data, &mut self.w_patient.data);
        for (dst, src) in [(&mut self.w_lab, &other.w_lab), (&mut self.w_diagnosis, &other.w_diagnosis)] {
            for (&col, g) in src {
                let slot = dst.entry(col).or_insert_with(|| vec![0.0; g.len()]);
                axpy(1.0, g, slot);
            }
        }
        axpy(1.0, &other.r_tested, &mut self.r_tested);
        axpy(1.0, &other.r_diagnosed, &mut self.r_diagnosed);
        axpy(1.0, &other.r_temporal, &mut self.r_temporal);
    }
}

/// Accumulates `∂ℓ/∂θ` from per-pair `∂ℓ/∂s` around one center.
struct Chain<'a> {
    params: &'a HgmParams,
    graph: &'a HeteroGraph,
    center: PatientHour,
    u: Vec<f64>,
    du: Vec<f64>,
    grad: Option<HgmGrad>,
}

impl<'a> Chain<'a> {
    fn new(params: &'a HgmParams, graph: &'a HeteroGraph, center: PatientHour, with_grad: bool) -> Self {
        let u = params.embed_node(graph, NodeId::PatientHour(center));
        Chain {
            params,
            graph,
            center,
            du: vec![0.0; u.len()],
            u,
            grad: with_grad.then(|| HgmGrad::zeros_like(params)),
        }
    }

    fn score(&self, relation: Relation, c: &[f64]) -> f64 {
        score(self.params, relation, &self.u, c)
    }

    /// Adds `dlds · ∂s/∂θ` for the pair (center, `node`) whose embedding is `c`.
    fn pair(&mut self, relation: Relation, node: NodeId, c: &[f64], dlds: f64) {
        let Some(grad) = self.grad.as_mut() else { return };
        if dlds == 0.0 {
            return;
        }
        let u = &self.u;
        let mut dc = vec![0.0; c.len()];
        match relation {
            Relation::Tested => {
                // s = (c + r)·u
                let r = &self.params.r_tested;
                for k in 0..u.len() {
                    self.du[k] += dlds * (c[k] + r[k]);
                    dc[k] = dlds * u[k];
                }
                axpy(dlds, u, &mut grad.r_tested);
            }
            Relation::Diagnosed | Relation::Temporal => {
                // s = (u + r)·c
                let (r, dr) = if relation == Relation::Diagnosed {
                    (&self.params.r_diagnosed, &mut grad.r_diagnosed)
                } else {
                    (&self.params.r_temporal, &mut grad.r_temporal)
                };
                for k in 0..u.len() {
                    self.du[k] += dlds * c[k];
                    dc[k] = dlds * (u[k] + r[k]);
                }
                axpy(dlds, c, dr);
            }
            Relation::CoPatient => {
                axpy(dlds, c, &mut self.du);
                for k in 0..u.len() {
                    dc[k] = dlds * u[k];
                }
            }
        }
        let act = self.params.activation;
        for (g, &ck) in dc.iter_mut().zip(c) {
            *g *= act.derivative_from_output(ck);
        }
        push_projection(grad, self.graph, node, &dc);
    }

    fn finish(mut self) -> Option<HgmGrad> {
        let mut grad = self.grad.take()?;
        let act = self.params.activation;
        let delta: Vec<f64> = self
            .du
            .iter()
            .zip(&self.u)
            .map(|(&g, &uk)| g * act.derivative_from_output(uk))
            .collect();
        push_projection(&mut grad, self.graph, NodeId::PatientHour(self.center), &delta);
        Some(grad)
    }
}

/// Adds `δ xᵀ` to the projection gradient of `node`, given `δ = ∂ℓ/∂(W x)`.
fn push_projection(grad: &mut HgmGrad, graph: &HeteroGraph, node: NodeId, delta: &[f64]) {
    match node {
        NodeId::PatientHour(ph) => grad.w_patient.add_outer(1.0, delta, graph.features(ph)),
        NodeId::Lab(l) => {
            let slot = grad.w_lab.entry(l).or_insert_with(|| vec![0.0; delta.len()]);
            axpy(1.0, delta, slot);
        }
        NodeId::Diagnosis(d) => {
            let slot = grad.w_diagnosis.entry(d).or_insert_with(|| vec![0.0; delta.len()]);
            axpy(1.0, delta, slot);
        }
    }
}

pub(super) fn ns_loss_and_grad(
    params: &HgmParams,
    graph: &HeteroGraph,
    context: &ContextSample,
    with_grad: bool,
) -> (f64, Option<HgmGrad>) {
    let mut chain = Chain::new(params, graph, context.center, with_grad);
    let mut loss = 0.0;
    for term in &context.terms {
        let c = params.embed_node(graph, term.positive);
        let s = chain.score(term.relation, &c);
        loss -= log_sigmoid(s);
        chain.pair(term.relation, term.positive, &c, sigmoid(s) - 1.0);
        for &neg in &term.negatives {
            let c = params.embed_node(graph, neg);
            let s = chain.score(term.relation, &c);
            loss -= log_sigmoid(-s);
            chain.pair(term.relation, neg, &c, sigmoid(s));
        }
    }
    (loss, chain.finish())
}

/// Negative-sampling loss of one context:
/// `Σ_pos −ln σ(s) + Σ_neg −ln σ(−s)`.
pub fn ns_loss(params: &HgmParams, graph: &HeteroGraph, context: &ContextSample) -> f64 {
    ns_loss_and_grad(params, graph, context, false).0
}

/// Analytic gradient of [`ns_loss`].
pub fn ns_grad(params: &HgmParams, graph: &HeteroGraph, context: &ContextSample) -> HgmGrad {
    ns_loss_and_grad(params, graph, context, true)
        .1
        .expect("gradient requested")
}

/// Every node except the center, with the relation used to score it.
fn candidates(graph: &HeteroGraph, center: PatientHour) -> Vec<(Relation, NodeId)> {
    let next = graph.temporal_next(center);
    let mut out: Vec<(Relation, NodeId)> = Vec::new();
    out.extend((0..graph.n_labs()).map(|l| (Relation::Tested, NodeId::Lab(l))));
    out.extend((0..graph.n_diagnoses()).map(|d| (Relation::Diagnosed, NodeId::Diagnosis(d))));
    for ph in graph.patient_hours() {
        if ph == center {
            continue;
        }
        let rel = if Some(ph) == next { Relation::Temporal } else { Relation::CoPatient };
        out.push((rel, NodeId::PatientHour(ph)));
    }
    out
}

fn is_neighbor(graph: &HeteroGraph, center: PatientHour, node: NodeId, copatients: &std::collections::BTreeSet<usize>) -> bool {
    match node {
        NodeId::Lab(l) => graph.tested(center).contains(&l),
        NodeId::Diagnosis(d) => graph.diagnoses(center.patient).contains(&d),
        NodeId::PatientHour(q) => graph.temporal_next(center) == Some(q) || copatients.contains(&q.patient),
    }
}

fn exact_loss_and_grad(params: &HgmParams, graph: &HeteroGraph, center: PatientHour, with_grad: bool) -> (f64, Option<HgmGrad>) {
    let mut chain = Chain::new(params, graph, center, with_grad);
    let copatients = graph.copatients(center.patient);
    let cands = candidates(graph, center);
    let embs: Vec<Vec<f64>> = cands.iter().map(|&(_, n)| params.embed_node(graph, n)).collect();
    let scores: Vec<f64> = cands.iter().zip(&embs).map(|(&(rel, _), c)| chain.score(rel, c)).collect();
    let member: Vec<bool> = cands.iter().map(|&(_, n)| is_neighbor(graph, center, n, &copatients)).collect();
    let n_neighbors = member.iter().filter(|&&m| m).count();
    if n_neighbors == 0 {
        return (0.0, chain.finish());
    }
    let log_z = log_sum_exp(&scores);
    let loss: f64 = scores
        .iter()
        .zip(&member)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| log_z - s)
        .sum();
    for (i, &(rel, node)) in cands.iter().enumerate() {
        let p = (scores[i] - log_z).exp();
        let dlds = n_neighbors as f64 * p - if member[i] { 1.0 } else { 0.0 };
        chain.pair(rel, node, &embs[i], dlds);
    }
    (loss, chain.finish())
}

/// Full-softmax skip-gram loss of one center: the normalizer runs over every
/// node except the center itself. Cost is linear in the graph size, so this is
/// meant for small graphs.
pub fn exact_softmax_loss(params: &HgmParams, graph: &HeteroGraph, center: PatientHour) -> f64 {
    exact_loss_and_grad(params, graph, center, false).0
}

pub fn exact_softmax_grad(params: &HgmParams, graph: &HeteroGraph, center: PatientHour) -> HgmGrad {
    exact_loss_and_grad(params, graph, center, true)
        .1
        .expect("gradient requested")
}
