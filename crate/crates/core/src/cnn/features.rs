//! Time × feature input matrices for the classifier.
//!
//! Rows are time steps ordered oldest → newest (row `t` holds hour
//! `window − 1 − t`); each row concatenates the blocks of the feature mode.

use serde::{Deserialize, Serialize};

use crate::graph::multi_hot;
use crate::hgm::{embed_patient_hour, HgmParams, HourInput};
use crate::ingest::{bin_events, Normalizer, PatientRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Labs then diagnosis multi-hot: `F = L + D`.
    RawLabsDiag,
    /// `F = L`
    RawLabs,
    /// `F = d`
    EmbedOnly,
    /// Embedding then labs: `F = d + L`.
    EmbedPlusLabs,
    /// Embedding then diagnosis multi-hot: `F = d + D`.
    EmbedPlusDiag,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::RawLabsDiag => "raw_labs_diag",
            FeatureMode::RawLabs => "raw_labs",
            FeatureMode::EmbedOnly => "embed_only",
            FeatureMode::EmbedPlusLabs => "embed_plus_labs",
            FeatureMode::EmbedPlusDiag => "embed_plus_diag",
        }
    }

    pub fn uses_embeddings(self) -> bool {
        matches!(self, FeatureMode::EmbedOnly | FeatureMode::EmbedPlusLabs | FeatureMode::EmbedPlusDiag)
    }

    fn uses_labs(self) -> bool {
        matches!(self, FeatureMode::RawLabsDiag | FeatureMode::RawLabs | FeatureMode::EmbedPlusLabs)
    }

    fn uses_diagnoses(self) -> bool {
        matches!(self, FeatureMode::RawLabsDiag | FeatureMode::EmbedPlusDiag)
    }

    pub fn n_features(self, n_labs: usize, n_diagnoses: usize, dim: usize) -> usize {
        let mut f = 0;
        if self.uses_embeddings() {
            f += dim;
        }
        if self.uses_labs() {
            f += n_labs;
        }
        if self.uses_diagnoses() {
            f += n_diagnoses;
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub time_steps: usize,
    pub n_features: usize,
    /// Row-major `time_steps × n_features`.
    pub values: Vec<f64>,
    pub label: bool,
}

impl FeatureMatrix {
    pub fn new(time_steps: usize, n_features: usize, values: Vec<f64>, label: bool) -> Self {
        assert_eq!(values.len(), time_steps * n_features);
        FeatureMatrix {
            time_steps,
            n_features,
            values,
            label,
        }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_features..(t + 1) * self.n_features]
    }
}

/// Builds a record's feature matrix for `mode` over `window` hours.
///
/// Lab values are z-scored with `normalizer`. Embedding modes need `hgm`;
/// an hour with no observed lab takes the previous hour's embedding
/// translated by the temporal relation.
pub fn build_features(
    record: &PatientRecord,
    window: usize,
    mode: FeatureMode,
    n_diagnoses: usize,
    normalizer: &Normalizer,
    hgm: Option<&HgmParams>,
) -> Result<FeatureMatrix> {
    let n_labs = normalizer.labs.len();
    let hgm = match (mode.uses_embeddings(), hgm) {
        (true, None) => return Err(Error::MissingEmbeddings(mode.name())),
        (true, Some(p)) => Some(p),
        (false, _) => None,
    };
    let dim = hgm.map_or(0, HgmParams::dim);
    let n_features = mode.n_features(n_labs, n_diagnoses, dim);
    let diag = if mode.uses_diagnoses() {
        multi_hot(&record.diagnoses, n_diagnoses)?
    } else {
        Vec::new()
    };

    let snaps = bin_events(record, n_labs, window);
    let mut values = Vec::with_capacity(window * n_features);
    let mut previous: Option<Vec<f64>> = None;
    for snap in snaps.iter().rev() {
        let labs = normalizer.apply(snap);
        if let Some(params) = hgm {
            let input = if snap.any_observed() { HourInput::Observed(&labs) } else { HourInput::Missing };
            let emb = embed_patient_hour(params, input, previous.as_deref())?;
            values.extend_from_slice(&emb);
            previous = Some(emb);
        }
        if mode.uses_labs() {
            values.extend_from_slice(&labs);
        }
        values.extend_from_slice(&diag);
    }
    Ok(FeatureMatrix::new(window, n_features, values, record.died))
}
