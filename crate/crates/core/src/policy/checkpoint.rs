//! JSON checkpoint container for trained policies.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::PolicyParams;
use super::train::TrainConfig;
use super::PolicyError;
use crate::corpus::Vocab;
use crate::numerics::Tensor;
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub hyperparameters: TrainConfig,
    /// Provenance of externally supplied embeddings; `None` for random init.
    pub embedding_source: Option<String>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(params: &PolicyParams<T>, cfg: &TrainConfig, vocab: &Vocab) -> Self {
        let tensors = params
            .names()
            .into_iter()
            .zip(params.tensors())
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect();
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            vocab_hash: vocab.hash(),
            vocab_size: params.dims().vocab_size,
            hyperparameters: cfg.clone(),
            embedding_source: None,
            tensors,
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<PolicyParams<T>, PolicyError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(PolicyError::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let template = PolicyParams::<T>::zeros(self.hyperparameters.dims(self.vocab_size));
        let names = template.names();
        if names.len() != self.tensors.len() {
            return Err(PolicyError::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for (want, nt) in names.iter().zip(&self.tensors) {
            if *want != nt.name {
                return Err(PolicyError::Checkpoint(format!("expected tensor {want}, found {}", nt.name)));
            }
            let data = nt.data.iter().map(|&v| T::of(v)).collect();
            tensors.push(Tensor::new(nt.shape.clone(), data)?);
        }
        let params = template.with_tensors(tensors)?;
        if !params.is_finite() {
            return Err(PolicyError::Checkpoint("non-finite parameter values".into()));
        }
        Ok(params)
    }

    pub fn verify_vocab(&self, vocab: &Vocab) -> Result<(), PolicyError> {
        let found = vocab.hash();
        if found != self.vocab_hash || vocab.len() != self.vocab_size {
            return Err(PolicyError::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        fs::write(path, self.to_json()).map_err(|e| PolicyError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = fs::read_to_string(path).map_err(|e| PolicyError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| PolicyError::Checkpoint(e.to_string()))
    }

    /// Loads and checks the checkpoint was trained against `vocab`.
    pub fn load_verified(path: &Path, vocab: &Vocab) -> Result<Self, PolicyError> {
        let ckpt = Self::load(path)?;
        ckpt.verify_vocab(vocab)?;
        Ok(ckpt)
    }
}
