//! Versioned JSON containers for fitted parameters.
//!
//! A container carries a format tag, a version, the kind of object stored,
//! scalar metadata, and named row-major blocks. Floats are written with
//! round-trip precision, so `load(save(x)) == x` bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cnn::CnnParams;
use crate::hgm::{Activation, Block, HgmParams};
use crate::ingest::{LabStats, Normalizer};
use crate::linalg::Matrix;
use crate::{Error, Result};

pub const FORMAT: &str = "hgm-ehr-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockData {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl BlockData {
    fn matrix(name: &str, m: &Matrix) -> Self {
        BlockData {
            name: name.to_string(),
            rows: m.rows,
            cols: m.cols,
            data: m.data.clone(),
        }
    }

    fn vector(name: &str, v: &[f64]) -> Self {
        BlockData {
            name: name.to_string(),
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    fn into_matrix(self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub meta: BTreeMap<String, Value>,
    pub blocks: Vec<BlockData>,
}

impl Container {
    fn new(kind: &str) -> Self {
        Container {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: kind.to_string(),
            meta: BTreeMap::new(),
            blocks: Vec::new(),
        }
    }

    fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Checkpoint(format!("missing integer metadata `{key}`")))
    }

    fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing string metadata `{key}`")))
    }

    /// Removes the named block and checks its shape.
    fn take(&mut self, name: &str, rows: usize, cols: usize) -> Result<BlockData> {
        let pos = self
            .blocks
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing block `{name}`")))?;
        let block = self.blocks.remove(pos);
        if block.rows != rows || block.cols != cols || block.data.len() != rows * cols {
            return Err(Error::Checkpoint(format!(
                "block `{name}` has shape {}x{} with {} values, expected {rows}x{cols}",
                block.rows,
                block.cols,
                block.data.len()
            )));
        }
        Ok(block)
    }

    fn check_header(&self, kind: &str) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a `{kind}` checkpoint, found `{}`", self.kind)));
        }
        Ok(())
    }
}

pub trait Checkpoint: Sized {
    const KIND: &'static str;

    fn to_container(&self) -> Container;

    fn from_container(container: Container) -> Result<Self>;
}

pub fn to_json<T: Checkpoint>(value: &T) -> Result<String> {
    let container = value.to_container();
    if container.blocks.iter().any(|b| b.data.iter().any(|v| !v.is_finite())) {
        return Err(Error::Checkpoint(format!("refusing to save non-finite `{}` parameters", T::KIND)));
    }
    Ok(serde_json::to_string(&container)?)
}

pub fn from_json<T: Checkpoint>(json: &str) -> Result<T> {
    let container: Container = serde_json::from_str(json)?;
    container.check_header(T::KIND)?;
    T::from_container(container)
}

impl Checkpoint for HgmParams {
    const KIND: &'static str = "hgm";

    fn to_container(&self) -> Container {
        let mut c = Container::new(Self::KIND);
        c.meta.insert("dim".into(), self.dim().into());
        c.meta.insert("activation".into(), self.activation.tag().into());
        c.meta.insert("patient_in".into(), self.w_patient.cols.into());
        c.meta.insert("n_labs".into(), self.w_lab.cols.into());
        c.meta.insert("n_diagnoses".into(), self.w_diagnosis.cols.into());
        c.blocks.push(BlockData::matrix(Block::PatientProjection.name(), &self.w_patient));
        c.blocks.push(BlockData::matrix(Block::LabProjection.name(), &self.w_lab));
        c.blocks.push(BlockData::matrix(Block::DiagnosisProjection.name(), &self.w_diagnosis));
        c.blocks.push(BlockData::vector(Block::TestedRelation.name(), &self.r_tested));
        c.blocks.push(BlockData::vector(Block::DiagnosedRelation.name(), &self.r_diagnosed));
        c.blocks.push(BlockData::vector(Block::TemporalRelation.name(), &self.r_temporal));
        c
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let dim = c.meta_usize("dim")?;
        let tag = c.meta_str("activation")?;
        let activation =
            Activation::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown activation `{tag}`")))?;
        let patient_in = c.meta_usize("patient_in")?;
        let n_labs = c.meta_usize("n_labs")?;
        let n_diagnoses = c.meta_usize("n_diagnoses")?;
        Ok(HgmParams {
            activation,
            w_patient: c.take(Block::PatientProjection.name(), dim, patient_in)?.into_matrix(),
            w_lab: c.take(Block::LabProjection.name(), dim, n_labs)?.into_matrix(),
            w_diagnosis: c.take(Block::DiagnosisProjection.name(), dim, n_diagnoses)?.into_matrix(),
            r_tested: c.take(Block::TestedRelation.name(), 1, dim)?.data,
            r_diagnosed: c.take(Block::DiagnosedRelation.name(), 1, dim)?.data,
            r_temporal: c.take(Block::TemporalRelation.name(), 1, dim)?.data,
        })
    }
}

impl Checkpoint for CnnParams {
    const KIND: &'static str = "cnn";

    fn to_container(&self) -> Container {
        let mut c = Container::new(Self::KIND);
        c.meta.insert("width".into(), self.width.into());
        c.meta.insert("n_features".into(), self.n_features.into());
        c.meta.insert("n_filters".into(), self.n_filters().into());
        c.blocks.push(BlockData::matrix("filters", &self.filters));
        c.blocks.push(BlockData::vector("conv_bias", &self.conv_bias));
        c.blocks.push(BlockData::matrix("dense", &self.dense));
        c.blocks.push(BlockData::vector("dense_bias", &self.dense_bias));
        c
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let width = c.meta_usize("width")?;
        let n_features = c.meta_usize("n_features")?;
        let n_filters = c.meta_usize("n_filters")?;
        let dense_bias = c.take("dense_bias", 1, 2)?.data;
        Ok(CnnParams {
            width,
            n_features,
            filters: c.take("filters", n_filters, width * n_features)?.into_matrix(),
            conv_bias: c.take("conv_bias", 1, n_filters)?.data,
            dense: c.take("dense", n_filters, 2)?.into_matrix(),
            dense_bias: [dense_bias[0], dense_bias[1]],
        })
    }
}

impl Checkpoint for Normalizer {
    const KIND: &'static str = "normalizer";

    fn to_container(&self) -> Container {
        let mut c = Container::new(Self::KIND);
        c.meta.insert("n_labs".into(), self.labs.len().into());
        let means: Vec<f64> = self.labs.iter().map(|s| s.mean).collect();
        let stds: Vec<f64> = self.labs.iter().map(|s| s.std).collect();
        c.blocks.push(BlockData::vector("mean", &means));
        c.blocks.push(BlockData::vector("std", &stds));
        c
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let n = c.meta_usize("n_labs")?;
        let means = c.take("mean", 1, n)?.data;
        let stds = c.take("std", 1, n)?.data;
        Ok(Normalizer {
            labs: means.into_iter().zip(stds).map(|(mean, std)| LabStats { mean, std }).collect(),
        })
    }
}
