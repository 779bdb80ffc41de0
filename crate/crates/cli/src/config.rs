use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hgm_ehr::cnn::{CnnConfig, FeatureMode};
use hgm_ehr::eval::{Arm, ExperimentConfig};
use hgm_ehr::hgm::HgmTrainConfig;
use hgm_ehr::ingest::{GenConfig, DEFAULT_WINDOWS};
use serde::{Deserialize, Serialize};

/// Top-level run configuration, read from a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub experiment: ExperimentSection,
    pub hgm: HgmTrainConfig,
    pub cnn: CnnConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Synthetic,
    Files,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    pub events: Option<PathBuf>,
    pub diagnoses: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_patients: usize,
    pub n_labs: usize,
    pub n_diagnoses: usize,
    /// Defaults to the longest experiment window.
    pub window: Option<usize>,
    pub signal: f64,
    pub prevalence: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let g = GenConfig::default();
        SyntheticConfig {
            n_patients: g.n_patients,
            n_labs: g.n_labs,
            n_diagnoses: g.n_diagnoses,
            window: None,
            signal: g.signal,
            prevalence: g.prevalence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub windows: Vec<usize>,
    pub arms: Vec<Arm>,
    pub k: usize,
    pub seed: u64,
    pub cnn_arm_mode: FeatureMode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        ExperimentSection {
            windows: DEFAULT_WINDOWS.to_vec(),
            arms: Arm::ALL.to_vec(),
            k: e.k,
            seed: e.seed,
            cnn_arm_mode: e.cnn_arm_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))?;
        // Relative data paths are taken relative to the config file.
        if let Some(base) = path.parent() {
            for p in [&mut cfg.data.events, &mut cfg.data.diagnoses, &mut cfg.data.outcomes]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.windows.is_empty() {
            bail!("experiment.windows must not be empty");
        }
        if let Some(w) = e.windows.iter().find(|w| !DEFAULT_WINDOWS.contains(w)) {
            bail!("experiment.windows: {w} is not one of {DEFAULT_WINDOWS:?}");
        }
        if e.arms.is_empty() {
            bail!("experiment.arms must not be empty");
        }
        if has_duplicates(&e.windows) || has_duplicates(&e.arms) {
            bail!("experiment.windows and experiment.arms must not repeat entries");
        }
        if self.data.source == Source::Files {
            for (name, p) in [
                ("events", &self.data.events),
                ("diagnoses", &self.data.diagnoses),
                ("outcomes", &self.data.outcomes),
            ] {
                if p.is_none() {
                    bail!("data.{name} is required when data.source = \"files\"");
                }
            }
        }
        self.gen_config().validate()?;
        self.experiment_config().validate()?;
        Ok(())
    }

    pub fn max_window(&self) -> usize {
        self.experiment.windows.iter().copied().max().unwrap_or(0)
    }

    pub fn gen_config(&self) -> GenConfig {
        let s = &self.synthetic;
        GenConfig {
            n_patients: s.n_patients,
            n_labs: s.n_labs,
            n_diagnoses: s.n_diagnoses,
            window: s.window.unwrap_or_else(|| self.max_window()),
            signal: s.signal,
            prevalence: s.prevalence,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            k: self.experiment.k,
            seed: self.experiment.seed,
            cnn_arm_mode: self.experiment.cnn_arm_mode,
            hgm: self.hgm.clone(),
            cnn: self.cnn.clone(),
        }
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}
