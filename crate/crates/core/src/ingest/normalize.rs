use serde::{Deserialize, Serialize};

use super::HourSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-lab z-scoring fitted on observed training entries only.
///
/// Unobserved entries stay at 0.0 after transformation, which is the
/// post-normalization mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub labs: Vec<LabStats>,
}

impl Normalizer {
    pub fn identity(n_labs: usize) -> Self {
        Normalizer {
            labs: vec![LabStats { mean: 0.0, std: 1.0 }; n_labs],
        }
    }

    pub fn fit<'a>(n_labs: usize, snapshots: impl IntoIterator<Item = &'a HourSnapshot>) -> Self {
        let mut count = vec![0usize; n_labs];
        let mut sum = vec![0.0; n_labs];
        let mut sum_sq = vec![0.0; n_labs];
        let snapshots: Vec<&HourSnapshot> = snapshots.into_iter().collect();
        for s in &snapshots {
            for l in s.observed_labs() {
                count[l] += 1;
                sum[l] += s.lab_values[l];
            }
        }
        let means: Vec<f64> = (0..n_labs)
            .map(|l| if count[l] > 0 { sum[l] / count[l] as f64 } else { 0.0 })
            .collect();
        // second pass keeps the variance well conditioned for large offsets
        for s in &snapshots {
            for l in s.observed_labs() {
                let d = s.lab_values[l] - means[l];
                sum_sq[l] += d * d;
            }
        }
        let labs = (0..n_labs)
            .map(|l| {
                let var = if count[l] > 1 { sum_sq[l] / (count[l] - 1) as f64 } else { 0.0 };
                let std = var.sqrt();
                LabStats {
                    mean: means[l],
                    std: if std > 1e-8 { std } else { 1.0 },
                }
            })
            .collect();
        Normalizer { labs }
    }

    pub fn apply(&self, snapshot: &HourSnapshot) -> Vec<f64> {
        snapshot
            .lab_values
            .iter()
            .zip(&snapshot.lab_observed)
            .zip(&self.labs)
            .map(|((&v, &obs), st)| if obs { (v - st.mean) / st.std } else { 0.0 })
            .collect()
    }

    pub fn apply_in_place(&self, snapshot: &mut HourSnapshot) {
        snapshot.lab_values = self.apply(snapshot);
    }
}
