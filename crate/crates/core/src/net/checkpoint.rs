use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, OptimizerState};
use crate::error::{Error, Result};

const FORMAT: &str = "ssal-checkpoint";
const VERSION: u32 = 1;

/// Model, optimizer and seed persisted as JSON. Floats are written with
/// shortest round-trip formatting, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub model: Classifier,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn new(model: Classifier, optimizer: Option<OptimizerState>, seed: u64) -> Self {
        Checkpoint {
            format: FORMAT.to_owned(),
            version: VERSION,
            seed,
            model,
            optimizer,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::data(
                "checkpoint",
                format!("unsupported format {} v{}", ckpt.format, ckpt.version),
            ));
        }
        // re-validate shapes and finiteness
        let model = Classifier::from_parameters(
            ckpt.model.architecture().to_vec(),
            ckpt.model.params().clone(),
        )?
        .with_embedding_layer(ckpt.model.embedding_layer())?;
        Ok(Checkpoint { model, ..ckpt })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
