//! JSON checkpoints holding everything needed to rebuild a trained imputer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::build_model;
use crate::data::NormalizationStats;
use crate::error::{Error, Result};
use crate::model::{Imputer, ModelConfig, ModelKind, Shape};
use crate::params::ParamStore;
use crate::Scalar;

pub const FORMAT: &str = "fgatt-checkpoint/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub steps: usize,
    pub nodes: usize,
    pub seed: u64,
    pub stats: NormalizationStats,
    pub params: Vec<StoredParam>,
}

impl Checkpoint {
    pub fn capture<T: Scalar>(model: &dyn Imputer<T>, stats: &NormalizationStats, seed: u64) -> Self {
        let shape = model.shape();
        let params = model
            .params()
            .iter()
            .map(|(name, v)| StoredParam {
                name: name.to_string(),
                rows: v.nrows(),
                cols: v.ncols(),
                data: v.iter().map(|x| x.to_f64_lossy()).collect(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            kind: model.kind(),
            config: model.config().clone(),
            steps: shape.steps,
            nodes: shape.nodes,
            seed,
            stats: stats.clone(),
            params,
        }
    }

    /// Rebuilds the architecture from the stored config and loads the weights.
    pub fn restore<T: Scalar>(&self) -> Result<Box<dyn Imputer<T>>> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {:?}", self.format)));
        }
        let shape = Shape {
            steps: self.steps,
            nodes: self.nodes,
        };
        let mut model = build_model::<T>(self.kind, &self.config, shape, self.seed)?;
        let mut stored = ParamStore::new();
        for p in &self.params {
            let values = Array2::from_shape_vec((p.rows, p.cols), p.data.iter().map(|&x| T::of(x)).collect())
                .map_err(|e| Error::Checkpoint(format!("parameter {}: {e}", p.name)))?;
            stored.add(p.name.clone(), values);
        }
        model
            .params_mut()
            .load_from(&stored)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(model)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
