use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ParamStore};
use crate::error::{Error, Result};

/// Serialized model: configuration plus named parameter arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub num_features: usize,
    pub num_classes: usize,
    pub params: ParamStore,
}

impl Model {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            num_features: self.num_features,
            num_classes: self.num_classes,
            params: self.params.clone(),
        }
    }

    /// Rebuilds the model; parameter names and shapes must match the
    /// layout implied by the configuration.
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut model = Model::new(ck.config, ck.num_features, ck.num_classes, 0)?;
        if model.params.names != ck.params.names {
            return Err(Error::Invalid("checkpoint parameter names do not match the configuration".into()));
        }
        for ((name, fresh), loaded) in model.params.names.iter().zip(&model.params.values).zip(&ck.params.values) {
            if fresh.shape() != loaded.shape() {
                return Err(Error::Invalid(format!(
                    "checkpoint parameter {name} has shape {:?}, expected {:?}",
                    loaded.shape(),
                    fresh.shape()
                )));
            }
        }
        model.params = ck.params;
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string(&model.to_checkpoint())?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Model::from_checkpoint(ck)
}

/// Writes `node_id,layer,alpha` rows, layers numbered from 1.
pub fn write_alpha_csv(alphas: &[Vec<f64>], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "layer", "alpha"])?;
    for (l, layer) in alphas.iter().enumerate() {
        for (i, a) in layer.iter().enumerate() {
            w.write_record([i.to_string(), (l + 1).to_string(), a.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const HISTOGRAM_BINS: usize = 20;

/// Counts of gate values in equal-width bins over `[0, 1]`; the last bin
/// is closed on the right.
pub fn alpha_histogram(values: &[f64]) -> [usize; HISTOGRAM_BINS] {
    let mut bins = [0; HISTOGRAM_BINS];
    for &a in values {
        let b = ((a.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        bins[b] += 1;
    }
    bins
}
