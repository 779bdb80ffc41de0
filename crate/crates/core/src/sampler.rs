//! Skip-gram context sampling around patient-hour centers.
//!
//! For a center `(p, h)` a context holds, drawn uniformly with replacement:
//!
//! * `n_diag` diagnoses of patient `p`;
//! * `n_lab` labs tested at `(p, h)`;
//! * `n_copatient` patient-hours of *other* patients, the `i`-th reached
//!   through the `i`-th sampled diagnosis;
//! * the temporal successor `(p, h − 1)` when it exists.
//!
//! Every positive carries `K` negatives of its own type, drawn uniformly from
//! nodes with no connection to the center: untested labs, undiagnosed
//! diagnoses, and hours of patients sharing no diagnosis with `p`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{HeteroGraph, NodeId, NodeType, PatientHour};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_diag: usize,
    pub n_lab: usize,
    pub n_copatient: usize,
    /// Negatives per positive.
    pub negatives: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_diag: 10,
            n_lab: 10,
            n_copatient: 10,
            negatives: 5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_diag == 0 || self.n_lab == 0 || self.n_copatient == 0 || self.negatives == 0 {
            return Err(Error::Config("sampler counts must all be at least 1".into()));
        }
        Ok(())
    }
}

/// Which relation links a context node to the center; selects the scoring rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Relation {
    Tested,
    Diagnosed,
    CoPatient,
    Temporal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextTerm {
    pub relation: Relation,
    pub positive: NodeId,
    pub negatives: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextSample {
    pub center: PatientHour,
    pub terms: Vec<ContextTerm>,
}

impl ContextSample {
    fn positives(&self, relation: Relation) -> Vec<NodeId> {
        self.terms
            .iter()
            .filter(|t| t.relation == relation)
            .map(|t| t.positive)
            .collect()
    }

    pub fn pos_diagnoses(&self) -> Vec<NodeId> {
        self.positives(Relation::Diagnosed)
    }

    pub fn pos_labs(&self) -> Vec<NodeId> {
        self.positives(Relation::Tested)
    }

    pub fn pos_patients(&self) -> Vec<NodeId> {
        self.positives(Relation::CoPatient)
    }

    pub fn pos_temporal(&self) -> Option<NodeId> {
        self.positives(Relation::Temporal).first().copied()
    }

    pub fn n_negatives(&self) -> usize {
        self.terms.iter().map(|t| t.negatives.len()).sum()
    }
}

fn draw<R: Rng, T: Copy>(items: &[T], rng: &mut R) -> T {
    items[rng.random_range(0..items.len())]
}

fn shares_diagnosis(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Whether `node` is a valid negative for `center`.
pub fn is_negative_for(graph: &HeteroGraph, center: PatientHour, node: NodeId) -> bool {
    match node {
        NodeId::Lab(l) => !graph.tested(center).contains(&l),
        NodeId::Diagnosis(d) => !graph.diagnoses(center.patient).contains(&d),
        NodeId::PatientHour(q) => {
            q.patient != center.patient
                && !shares_diagnosis(graph.diagnoses(center.patient), graph.diagnoses(q.patient))
        }
    }
}

const REJECTION_TRIES: usize = 64;

/// Uniform draw over `0..n` restricted to `eligible`, by rejection with an
/// exhaustive fallback. `None` when nothing is eligible.
fn draw_eligible<R: Rng>(n: usize, eligible: impl Fn(usize) -> bool, rng: &mut R) -> Option<usize> {
    if n == 0 {
        return None;
    }
    for _ in 0..REJECTION_TRIES {
        let i = rng.random_range(0..n);
        if eligible(i) {
            return Some(i);
        }
    }
    let pool: Vec<usize> = (0..n).filter(|&i| eligible(i)).collect();
    (!pool.is_empty()).then(|| draw(&pool, rng))
}

/// `k` uniform draws with replacement from nodes of `node_type` with no
/// connection to `center`.
pub fn sample_negatives<R: Rng>(
    graph: &HeteroGraph,
    center: PatientHour,
    node_type: NodeType,
    k: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let node = match node_type {
            NodeType::Lab => {
                let tested = graph.tested(center);
                draw_eligible(graph.n_labs(), |l| !tested.contains(&l), rng).map(NodeId::Lab)
            }
            NodeType::Diagnosis => {
                let dx = graph.diagnoses(center.patient);
                draw_eligible(graph.n_diagnoses(), |d| !dx.contains(&d), rng).map(NodeId::Diagnosis)
            }
            NodeType::PatientHour => {
                let dx = graph.diagnoses(center.patient);
                draw_eligible(
                    graph.n_patients(),
                    |q| q != center.patient && !shares_diagnosis(dx, graph.diagnoses(q)),
                    rng,
                )
                .map(|patient| {
                    NodeId::PatientHour(PatientHour {
                        patient,
                        hour: rng.random_range(0..graph.window()),
                    })
                })
            }
        };
        match node {
            Some(n) => out.push(n),
            None => return Err(Error::EmptyNegativePool(node_type.name())),
        }
    }
    Ok(out)
}

/// Draws one skip-gram context around `center`.
///
/// Positive types whose negative pool is empty keep their positives with no
/// negatives.
pub fn sample_context<R: Rng>(
    graph: &HeteroGraph,
    center: PatientHour,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<ContextSample> {
    let labs = graph.tested(center);
    let dx = graph.diagnoses(center.patient);
    if labs.is_empty() && dx.is_empty() {
        return Err(Error::UntrainableCenter(NodeId::PatientHour(center).to_string()));
    }

    let mut positives: Vec<(Relation, NodeId)> = Vec::new();
    let sampled_dx: Vec<usize> = if dx.is_empty() {
        Vec::new()
    } else {
        (0..config.n_diag).map(|_| draw(dx, rng)).collect()
    };
    positives.extend(sampled_dx.iter().map(|&d| (Relation::Diagnosed, NodeId::Diagnosis(d))));
    if !labs.is_empty() {
        for _ in 0..config.n_lab {
            positives.push((Relation::Tested, NodeId::Lab(draw(labs, rng))));
        }
    }
    if !sampled_dx.is_empty() {
        for i in 0..config.n_copatient {
            let d = sampled_dx[i % sampled_dx.len()];
            let pool = graph.diagnosed_patients(d);
            let others = pool.len() - usize::from(pool.contains(&center.patient));
            if others == 0 {
                continue;
            }
            let mut j = rng.random_range(0..others);
            // skip over the center's own patient
            if let Some(own) = pool.iter().position(|&q| q == center.patient) {
                if j >= own {
                    j += 1;
                }
            }
            let hour = rng.random_range(0..graph.window());
            positives.push((Relation::CoPatient, NodeId::PatientHour(PatientHour { patient: pool[j], hour })));
        }
    }
    if let Some(next) = graph.temporal_next(center) {
        positives.push((Relation::Temporal, NodeId::PatientHour(next)));
    }

    let mut terms = Vec::with_capacity(positives.len());
    for (relation, positive) in positives {
        let negatives = match sample_negatives(graph, center, positive.node_type(), config.negatives, rng) {
            Ok(n) => n,
            Err(Error::EmptyNegativePool(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        terms.push(ContextTerm {
            relation,
            positive,
            negatives,
        });
    }
    Ok(ContextSample { center, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::ingest::{LabEvent, PatientRecord, Vocabulary};
    use crate::seed;

    fn rec(id: &str, labs: &[(f64, usize)], dx: &[usize]) -> PatientRecord {
        PatientRecord {
            patient_id: id.into(),
            events: labs
                .iter()
                .map(|&(h, l)| LabEvent {
                    patient_id: id.into(),
                    hours_before_end: h,
                    lab_id: l,
                    value: 1.0,
                })
                .collect(),
            diagnoses: dx.iter().copied().collect(),
            died: false,
            end_hour: 10,
        }
    }

    fn vocab(l: usize, d: usize) -> Vocabulary {
        Vocabulary::new(
            (0..l).map(|i| format!("l{i}")).collect(),
            (0..d).map(|i| format!("d{i}")).collect(),
        )
    }

    fn fixture() -> HeteroGraph {
        build_graph(
            &[
                rec("a", &[(0.5, 0), (1.5, 1), (2.5, 2)], &[1, 3]),
                rec("b", &[(0.5, 2), (1.5, 3)], &[3]),
                rec("c", &[(0.5, 4)], &[0]),
                rec("d", &[(2.2, 1)], &[1, 2, 4]),
            ],
            &vocab(6, 5),
            3,
            None,
        )
    }

    const A1: PatientHour = PatientHour { patient: 0, hour: 1 };

    #[test]
    fn default_context_sizes() {
        let g = fixture();
        let mut rng = seed::rng(1);
        let ctx = sample_context(&g, A1, &SamplerConfig::default(), &mut rng).unwrap();
        assert_eq!(ctx.pos_diagnoses().len(), 10);
        assert_eq!(ctx.pos_labs().len(), 10);
        assert_eq!(ctx.pos_patients().len(), 10);
        assert_eq!(ctx.pos_temporal(), Some(NodeId::PatientHour(PatientHour { patient: 0, hour: 0 })));
        assert!(ctx.terms.iter().all(|t| t.negatives.len() == 5));
    }

    #[test]
    fn endpoint_hour_has_no_temporal_positive() {
        let g = fixture();
        let center = PatientHour { patient: 0, hour: 0 };
        let ctx = sample_context(&g, center, &SamplerConfig::default(), &mut seed::rng(2)).unwrap();
        assert_eq!(ctx.pos_temporal(), None);
    }

    #[test]
    fn single_neighbor_repeats() {
        let g = fixture();
        let center = PatientHour { patient: 2, hour: 0 };
        let ctx = sample_context(&g, center, &SamplerConfig::default(), &mut seed::rng(3)).unwrap();
        assert_eq!(ctx.pos_diagnoses(), vec![NodeId::Diagnosis(0); 10]);
        assert_eq!(ctx.pos_labs(), vec![NodeId::Lab(4); 10]);
        // nobody else has diagnosis 0
        assert!(ctx.pos_patients().is_empty());
    }

    #[test]
    fn positives_and_negatives_respect_graph() {
        let g = fixture();
        for seed in 0..50 {
            for center in g.patient_hours() {
                let Ok(ctx) = sample_context(&g, center, &SamplerConfig::default(), &mut seed::rng(seed)) else {
                    continue;
                };
                for t in &ctx.terms {
                    let ok = match (t.relation, t.positive) {
                        (Relation::Tested, NodeId::Lab(l)) => g.tested(center).contains(&l),
                        (Relation::Diagnosed, NodeId::Diagnosis(d)) => g.diagnoses(center.patient).contains(&d),
                        (Relation::CoPatient, NodeId::PatientHour(q)) => g.copatients(center.patient).contains(&q.patient),
                        (Relation::Temporal, NodeId::PatientHour(q)) => g.temporal_next(center) == Some(q),
                        _ => false,
                    };
                    assert!(ok, "{:?} is not a valid positive for {center:?}", t);
                    for &n in &t.negatives {
                        assert_eq!(n.node_type(), t.positive.node_type());
                        assert!(is_negative_for(&g, center, n));
                    }
                }
            }
        }
    }

    #[test]
    fn untrainable_center_rejected() {
        let g = build_graph(&[rec("a", &[], &[])], &vocab(2, 2), 2, None);
        let err = sample_context(&g, PatientHour { patient: 0, hour: 0 }, &SamplerConfig::default(), &mut seed::rng(0));
        assert!(matches!(err, Err(Error::UntrainableCenter(_))));
    }

    #[test]
    fn negatives_from_complement() {
        let g = build_graph(&[rec("a", &[(0.5, 0)], &[1, 3])], &vocab(2, 5), 1, None);
        let c = PatientHour { patient: 0, hour: 0 };
        let mut rng = seed::rng(9);
        for _ in 0..200 {
            for n in sample_negatives(&g, c, NodeType::Diagnosis, 3, &mut rng).unwrap() {
                assert!(matches!(n, NodeId::Diagnosis(0 | 2 | 4)));
            }
        }
    }

    #[test]
    fn empty_negative_pool_is_an_error() {
        let g = build_graph(&[rec("a", &[(0.5, 0)], &[0, 1, 2])], &vocab(1, 3), 1, None);
        let c = PatientHour { patient: 0, hour: 0 };
        let mut rng = seed::rng(0);
        assert!(matches!(
            sample_negatives(&g, c, NodeType::Diagnosis, 3, &mut rng),
            Err(Error::EmptyNegativePool("diagnosis"))
        ));
        assert!(sample_negatives(&g, c, NodeType::PatientHour, 1, &mut rng).is_err());
        // the context still forms, with no negatives for the saturated types
        let ctx = sample_context(&g, c, &SamplerConfig::default(), &mut rng).unwrap();
        assert_eq!(ctx.n_negatives(), 0);
    }

    #[test]
    fn same_seed_same_context() {
        let g = fixture();
        let cfg = SamplerConfig::default();
        let a = sample_context(&g, A1, &cfg, &mut seed::rng(77)).unwrap();
        let b = sample_context(&g, A1, &cfg, &mut seed::rng(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_draws_are_uniform() {
        // 20 diagnoses, center holds 4 → 16 eligible. Each count should sit
        // within 3σ of n/16.
        let dx: Vec<usize> = vec![2, 5, 11, 17];
        let g = build_graph(&[rec("a", &[(0.5, 0)], &dx)], &vocab(2, 20), 1, None);
        let c = PatientHour { patient: 0, hour: 0 };
        let n = 100_000;
        let draws = sample_negatives(&g, c, NodeType::Diagnosis, n, &mut seed::rng(5)).unwrap();
        let mut counts = [0usize; 20];
        for d in draws {
            let NodeId::Diagnosis(i) = d else { unreachable!() };
            counts[i] += 1;
        }
        let p = 1.0 / 16.0;
        let expected = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (i, &k) in counts.iter().enumerate() {
            if dx.contains(&i) {
                assert_eq!(k, 0);
            } else {
                assert!((k as f64 - expected).abs() < 3.0 * sigma, "diagnosis {i}: {k}");
            }
        }
    }
}
