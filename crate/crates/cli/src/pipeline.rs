use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hgm_ehr::checkpoint::{self, Checkpoint};
use hgm_ehr::cnn::CnnParams;
use hgm_ehr::eval::{
    complement, fit_fold, fold_assignments, score_fold, summarize, write_curves, Arm, ExperimentConfig,
    ExperimentOutcome, FoldModels, FoldOutcome,
};
use hgm_ehr::hgm::HgmParams;
use hgm_ehr::ingest::{generate_synthetic, parse_records, write_records, Normalizer, PatientRecord, Vocabulary};
use hgm_ehr::seed;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Source};
use crate::output::{atomic_with, atomic_write, write_json};

pub struct Dataset {
    pub records: Vec<PatientRecord>,
    pub vocab: Vocabulary,
}

pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    match cfg.data.source {
        Source::Synthetic => {
            let s = seed::derive(cfg.experiment.seed, "synth", 0, 0);
            let (records, vocab) = generate_synthetic(&cfg.gen_config(), s)?;
            info!("generated {} synthetic patients", records.len());
            Ok(Dataset { records, vocab })
        }
        Source::Files => {
            let path = |p: &Option<PathBuf>| p.clone().expect("validated");
            let mut vocab = Vocabulary::default();
            let records = parse_records(
                &path(&cfg.data.events),
                &path(&cfg.data.diagnoses),
                &path(&cfg.data.outcomes),
                &mut vocab,
            )?;
            info!(
                "loaded {} patients, {} labs, {} diagnoses",
                records.len(),
                vocab.n_labs(),
                vocab.n_diagnoses()
            );
            Ok(Dataset { records, vocab })
        }
    }
}

/// Writes the cohort as the three input CSVs plus the vocabulary.
pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let events = dir.join("events.csv");
    let diagnoses = dir.join("diagnoses.csv");
    let outcomes = dir.join("outcomes.csv");
    atomic_with(&events, |e| {
        atomic_with(&diagnoses, |d| {
            atomic_with(&outcomes, |o| Ok(write_records(&data.records, &data.vocab, e, d, o)?))
        })
    })?;
    write_json(&dir.join("vocabulary.json"), &data.vocab)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

/// Every (window, fold) pair, window-major.
fn tasks(windows: &[usize], k: usize) -> Vec<(usize, usize)> {
    windows.iter().flat_map(|&w| (0..k).map(move |f| (w, f))).collect()
}

pub fn train(cfg: &RunConfig, data: &Dataset, jobs: usize) -> Result<Vec<FoldModels>> {
    let exp = cfg.experiment_config();
    let folds = fold_assignments(data.records.len(), &exp)?;
    let arms = &cfg.experiment.arms;
    pool(jobs)?.install(|| {
        tasks(&cfg.experiment.windows, exp.k)
            .into_par_iter()
            .map(|(window, fold)| {
                let train = complement(data.records.len(), &folds[fold]);
                let m = fit_fold(&data.records, &data.vocab, &train, fold, window, arms, &exp)
                    .with_context(|| format!("training window {window} fold {fold}"))?;
                info!("trained window {window} fold {fold}");
                Ok(m)
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    n_records: usize,
    k: usize,
    seed: u64,
    windows: Vec<usize>,
    arms: Vec<Arm>,
    folds: Vec<Vec<usize>>,
}

fn manifest(cfg: &RunConfig, n_records: usize) -> Result<Manifest> {
    let exp = cfg.experiment_config();
    Ok(Manifest {
        n_records,
        k: exp.k,
        seed: exp.seed,
        windows: cfg.experiment.windows.clone(),
        arms: cfg.experiment.arms.clone(),
        folds: fold_assignments(n_records, &exp)?,
    })
}

fn checkpoint_root(out: &Path) -> PathBuf {
    out.join("checkpoints")
}

fn fold_dir(out: &Path, arm: Arm, window: usize, fold: usize) -> PathBuf {
    checkpoint_root(out)
        .join(arm.name())
        .join(format!("w{window}"))
        .join(format!("fold{fold:02}"))
}

fn save<T: Checkpoint>(path: &Path, value: &T) -> Result<()> {
    let mut json = checkpoint::to_json(value)?;
    json.push('\n');
    atomic_write(path, json.as_bytes())
}

fn load<T: Checkpoint>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("missing checkpoint {}", path.display()))?;
    checkpoint::from_json(&text).with_context(|| format!("reading checkpoint {}", path.display()))
}

/// One directory per (arm, window, fold) holding everything needed to score
/// that fold's test patients under that arm.
pub fn save_checkpoints(out: &Path, cfg: &RunConfig, n_records: usize, models: &[FoldModels]) -> Result<()> {
    write_json(&checkpoint_root(out).join("manifest.json"), &manifest(cfg, n_records)?)?;
    for m in models {
        for (arm, cnn) in &m.cnn {
            let dir = fold_dir(out, *arm, m.window, m.fold);
            save(&dir.join("normalizer.json"), &m.normalizer)?;
            if let Some(h) = m.hgm.as_ref().filter(|_| arm.needs_hgm()) {
                save(&dir.join("hgm.json"), h)?;
            }
            save(&dir.join("cnn.json"), cnn)?;
        }
    }
    Ok(())
}

pub fn load_checkpoints(out: &Path, cfg: &RunConfig, n_records: usize) -> Result<Vec<FoldModels>> {
    let path = checkpoint_root(out).join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("missing checkpoints: {} not found (run `train` first)", path.display()))?;
    let stored: Manifest = serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?;
    let expected = manifest(cfg, n_records)?;
    if stored.n_records != expected.n_records || stored.folds != expected.folds {
        bail!("checkpoints in {} were trained on different data, seed or k", out.display());
    }
    for w in &expected.windows {
        if !stored.windows.contains(w) {
            bail!("checkpoints in {} have no window {w}", out.display());
        }
    }
    for a in &expected.arms {
        if !stored.arms.contains(a) {
            bail!("checkpoints in {} have no arm {a}", out.display());
        }
    }

    let mut models = Vec::new();
    for (window, fold) in tasks(&cfg.experiment.windows, expected.k) {
        let mut normalizer: Option<Normalizer> = None;
        let mut hgm: Option<HgmParams> = None;
        let mut cnn: Vec<(Arm, CnnParams)> = Vec::new();
        for &arm in &cfg.experiment.arms {
            let dir = fold_dir(out, arm, window, fold);
            if normalizer.is_none() {
                normalizer = Some(load(&dir.join("normalizer.json"))?);
            }
            if arm.needs_hgm() && hgm.is_none() {
                hgm = Some(load(&dir.join("hgm.json"))?);
            }
            cnn.push((arm, load(&dir.join("cnn.json"))?));
        }
        models.push(FoldModels {
            fold,
            window,
            normalizer: normalizer.expect("at least one arm"),
            hgm,
            cnn,
        });
    }
    Ok(models)
}

pub fn evaluate(cfg: &RunConfig, data: &Dataset, models: &[FoldModels], jobs: usize) -> Result<Vec<ExperimentOutcome>> {
    let exp: ExperimentConfig = cfg.experiment_config();
    let folds = fold_assignments(data.records.len(), &exp)?;
    let arms = &cfg.experiment.arms;
    let scored: Vec<Vec<(Arm, FoldOutcome)>> = pool(jobs)?.install(|| {
        models
            .par_iter()
            .map(|m| {
                let test = &folds[m.fold];
                let labels: Vec<bool> = test.iter().map(|&i| data.records[i].died).collect();
                arms.iter()
                    .map(|&arm| {
                        let scores = score_fold(m, &data.records, &data.vocab, test, arm, &exp)?;
                        Ok((
                            arm,
                            FoldOutcome {
                                fold: m.fold,
                                scores,
                                labels: labels.clone(),
                            },
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut outcomes = Vec::new();
    for &window in &cfg.experiment.windows {
        for &arm in arms {
            let per_fold: Vec<FoldOutcome> = models
                .iter()
                .zip(&scored)
                .filter(|(m, _)| m.window == window)
                .flat_map(|(_, s)| s.iter().filter(|(a, _)| *a == arm).map(|(_, o)| o.clone()))
                .collect();
            outcomes.push(summarize(arm, window, &per_fold).with_context(|| format!("arm {arm} window {window}"))?);
        }
    }
    Ok(outcomes)
}

pub fn report_stem(arm: Arm, window: usize) -> String {
    format!("{}_w{window}", arm.name())
}

/// One JSON report and one curve CSV per (arm, window).
pub fn write_reports(out: &Path, outcomes: &[ExperimentOutcome]) -> Result<()> {
    for o in outcomes {
        let stem = report_stem(o.report.arm, o.report.window);
        write_json(&out.join("reports").join(format!("{stem}.json")), &o.report)?;
        let mut csv = Vec::new();
        write_curves(&mut csv, &o.scores, &o.labels)?;
        atomic_write(&out.join("curves").join(format!("{stem}.csv")), &csv)?;
    }
    Ok(())
}
