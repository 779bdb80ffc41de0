//! Patient-level k-fold evaluation of the three experiment arms.
//!
//! Per fold, everything fitted (lab normalization, the graph embedding model,
//! the classifier) sees training patients only; test patients are touched
//! only to build their inputs and score them.

mod metrics;
mod split;

use std::io::Write;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cnn::{build_features, predict, train_cnn, CnnConfig, CnnParams, FeatureMatrix, FeatureMode};
use crate::graph::build_graph;
use crate::hgm::{train_hgm, HgmParams, HgmTrainConfig};
use crate::ingest::{bin_events, Normalizer, PatientRecord, Vocabulary};
use crate::linalg::{mean, sample_std};
use crate::{seed, Error, Result};

pub use metrics::{auprc, auroc, pr_curve, roc_curve};
pub use split::kfold_split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    /// Embeddings only.
    #[serde(rename = "HGM")]
    Hgm,
    /// Raw lab features only.
    #[serde(rename = "CNN")]
    Cnn,
    /// Embeddings concatenated with raw lab features.
    #[serde(rename = "HGM_CNN")]
    HgmCnn,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Hgm, Arm::Cnn, Arm::HgmCnn];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Hgm => "HGM",
            Arm::Cnn => "CNN",
            Arm::HgmCnn => "HGM_CNN",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Arm::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }

    pub fn needs_hgm(self) -> bool {
        self != Arm::Cnn
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: usize,
    /// Master seed; the seeds inside `hgm` and `cnn` are replaced by
    /// per-fold derivations of it.
    pub seed: u64,
    /// Input of the raw-feature arm: `raw_labs` or `raw_labs_diag`.
    pub cnn_arm_mode: FeatureMode,
    pub hgm: HgmTrainConfig,
    pub cnn: CnnConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k: 10,
            seed: 0,
            cnn_arm_mode: FeatureMode::RawLabs,
            hgm: HgmTrainConfig::default(),
            cnn: CnnConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("k must be at least 2".into()));
        }
        if !matches!(self.cnn_arm_mode, FeatureMode::RawLabs | FeatureMode::RawLabsDiag) {
            return Err(Error::Config("cnn_arm_mode must be raw_labs or raw_labs_diag".into()));
        }
        self.hgm.validate()?;
        self.cnn.validate()
    }

    pub fn feature_mode(&self, arm: Arm) -> FeatureMode {
        match arm {
            Arm::Hgm => FeatureMode::EmbedOnly,
            Arm::Cnn => self.cnn_arm_mode,
            Arm::HgmCnn => FeatureMode::EmbedPlusLabs,
        }
    }

    pub fn hgm_for(&self, fold: usize, window: usize) -> HgmTrainConfig {
        HgmTrainConfig {
            seed: seed::derive(self.seed, "hgm", fold as u64, window as u64),
            ..self.hgm.clone()
        }
    }

    pub fn cnn_for(&self, fold: usize, window: usize) -> CnnConfig {
        CnnConfig {
            seed: seed::derive(self.seed, "cnn", fold as u64, window as u64),
            ..self.cnn.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub auroc: f64,
    pub auprc: f64,
    pub n_test: usize,
    pub n_pos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub arm: Arm,
    pub window: usize,
    pub folds: Vec<FoldReport>,
    pub mean_auroc: f64,
    pub std_auroc: f64,
    pub mean_auprc: f64,
    pub std_auprc: f64,
}

/// A report plus the pooled out-of-fold predictions behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Test-set record indices per fold, shared by every arm and window.
pub fn fold_assignments(n_records: usize, config: &ExperimentConfig) -> Result<Vec<Vec<usize>>> {
    let idx: Vec<usize> = (0..n_records).collect();
    kfold_split(&idx, config.k, seed::derive(config.seed, "kfold", 0, 0))
}

/// Indices not in `test`, in ascending order.
pub fn complement(n_records: usize, test: &[usize]) -> Vec<usize> {
    let mut is_test = vec![false; n_records];
    for &i in test {
        is_test[i] = true;
    }
    (0..n_records).filter(|&i| !is_test[i]).collect()
}

/// Everything fitted on one fold's training patients.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModels {
    pub fold: usize,
    pub window: usize,
    pub normalizer: Normalizer,
    pub hgm: Option<HgmParams>,
    pub cnn: Vec<(Arm, CnnParams)>,
}

pub fn fit_fold(
    records: &[PatientRecord],
    vocab: &Vocabulary,
    train: &[usize],
    fold: usize,
    window: usize,
    arms: &[Arm],
    config: &ExperimentConfig,
) -> Result<FoldModels> {
    let train_records: Vec<PatientRecord> = train.iter().map(|&i| records[i].clone()).collect();
    let snapshots: Vec<_> = train_records
        .iter()
        .flat_map(|r| bin_events(r, vocab.n_labs(), window))
        .collect();
    let normalizer = Normalizer::fit(vocab.n_labs(), &snapshots);

    let hgm = if arms.iter().any(|a| a.needs_hgm()) {
        let graph = build_graph(&train_records, vocab, window, Some(&normalizer));
        let (params, report) = train_hgm(&graph, &config.hgm_for(fold, window))?;
        if report.skipped_centers > 0 {
            info!("fold {fold}: {} untrainable patient-hours skipped", report.skipped_centers);
        }
        Some(params)
    } else {
        None
    };

    let mut cnn = Vec::with_capacity(arms.len());
    for &arm in arms {
        let data = features(&train_records, vocab, window, config.feature_mode(arm), &normalizer, hgm.as_ref())?;
        cnn.push((arm, train_cnn(&data, &config.cnn_for(fold, window))?));
    }
    Ok(FoldModels {
        fold,
        window,
        normalizer,
        hgm,
        cnn,
    })
}

fn features(
    records: &[PatientRecord],
    vocab: &Vocabulary,
    window: usize,
    mode: FeatureMode,
    normalizer: &Normalizer,
    hgm: Option<&HgmParams>,
) -> Result<Vec<FeatureMatrix>> {
    records
        .iter()
        .map(|r| build_features(r, window, mode, vocab.n_diagnoses(), normalizer, hgm))
        .collect()
}

/// Death-class scores for `test` records under one arm of a fitted fold.
pub fn score_fold(
    models: &FoldModels,
    records: &[PatientRecord],
    vocab: &Vocabulary,
    test: &[usize],
    arm: Arm,
    config: &ExperimentConfig,
) -> Result<Vec<f64>> {
    let params = models
        .cnn
        .iter()
        .find(|(a, _)| *a == arm)
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Config(format!("fold {} has no classifier for arm {arm}", models.fold)))?;
    let test_records: Vec<PatientRecord> = test.iter().map(|&i| records[i].clone()).collect();
    let data = features(
        &test_records,
        vocab,
        models.window,
        config.feature_mode(arm),
        &models.normalizer,
        models.hgm.as_ref(),
    )?;
    data.iter().map(|m| predict(params, m)).collect()
}

/// Per-fold metrics; `None` when the test set lacks one of the classes.
pub fn fold_report(fold: usize, scores: &[f64], labels: &[bool]) -> Result<Option<FoldReport>> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        warn!("fold {fold}: test set has a single class, skipped");
        return Ok(None);
    }
    Ok(Some(FoldReport {
        fold,
        auroc: auroc(scores, labels)?,
        auprc: auprc(scores, labels)?,
        n_test: labels.len(),
        n_pos,
    }))
}

/// Scores of one arm on one fold's test set.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Fits fold `fold` and scores its test set under every arm.
pub fn run_fold(
    records: &[PatientRecord],
    vocab: &Vocabulary,
    folds: &[Vec<usize>],
    fold: usize,
    window: usize,
    arms: &[Arm],
    config: &ExperimentConfig,
) -> Result<Vec<(Arm, FoldOutcome)>> {
    let test = &folds[fold];
    let train = complement(records.len(), test);
    let models = fit_fold(records, vocab, &train, fold, window, arms, config)?;
    let labels: Vec<bool> = test.iter().map(|&i| records[i].died).collect();
    arms.iter()
        .map(|&arm| {
            let scores = score_fold(&models, records, vocab, test, arm, config)?;
            Ok((
                arm,
                FoldOutcome {
                    fold,
                    scores,
                    labels: labels.clone(),
                },
            ))
        })
        .collect()
}

/// Collapses fold outcomes (in fold order) into a report with sample
/// standard deviations over the evaluated folds.
pub fn summarize(arm: Arm, window: usize, outcomes: &[FoldOutcome]) -> Result<ExperimentOutcome> {
    let mut folds = Vec::new();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for o in outcomes {
        if let Some(r) = fold_report(o.fold, &o.scores, &o.labels)? {
            folds.push(r);
        }
        scores.extend_from_slice(&o.scores);
        labels.extend_from_slice(&o.labels);
    }
    if folds.is_empty() {
        return Err(Error::SingleClass("every fold's test set"));
    }
    let aurocs: Vec<f64> = folds.iter().map(|f| f.auroc).collect();
    let auprcs: Vec<f64> = folds.iter().map(|f| f.auprc).collect();
    Ok(ExperimentOutcome {
        report: ExperimentReport {
            arm,
            window,
            mean_auroc: mean(&aurocs),
            std_auroc: sample_std(&aurocs),
            mean_auprc: mean(&auprcs),
            std_auprc: sample_std(&auprcs),
            folds,
        },
        scores,
        labels,
    })
}

/// Cross-validates several arms at one window, sharing each fold's embedding
/// model between the arms that use it. Results follow the order of `arms`.
pub fn run_experiments(
    records: &[PatientRecord],
    vocab: &Vocabulary,
    arms: &[Arm],
    window: usize,
    config: &ExperimentConfig,
) -> Result<Vec<ExperimentOutcome>> {
    config.validate()?;
    let folds = fold_assignments(records.len(), config)?;
    let mut per_arm: Vec<Vec<FoldOutcome>> = vec![Vec::new(); arms.len()];
    for fold in 0..folds.len() {
        for (i, (_, outcome)) in run_fold(records, vocab, &folds, fold, window, arms, config)?.into_iter().enumerate() {
            per_arm[i].push(outcome);
        }
    }
    arms.iter()
        .zip(&per_arm)
        .map(|(&arm, outcomes)| summarize(arm, window, outcomes))
        .collect()
}

pub fn run_experiment(
    records: &[PatientRecord],
    vocab: &Vocabulary,
    arm: Arm,
    window: usize,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    Ok(run_experiments(records, vocab, &[arm], window, config)?.remove(0))
}

/// Writes ROC and precision–recall points as `curve,x,y` rows.
pub fn write_curves<W: Write>(mut out: W, scores: &[f64], labels: &[bool]) -> Result<()> {
    let io = |e| Error::io("curve output", e);
    writeln!(out, "curve,x,y").map_err(io)?;
    for (fpr, tpr) in roc_curve(scores, labels)? {
        writeln!(out, "roc,{fpr},{tpr}").map_err(io)?;
    }
    for (recall, precision) in pr_curve(scores, labels)? {
        writeln!(out, "pr,{recall},{precision}").map_err(io)?;
    }
    Ok(())
}
