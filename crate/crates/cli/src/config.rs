use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use maskpolicy::policy::{DeploymentMode, TrainConfig};
use serde::{Deserialize, Serialize};

pub const DEFAULT_VOCAB_MAX_SIZE: usize = 30_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random15,
    Randomspan,
    Salient,
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Top1,
    Top5,
}

impl From<ModeArg> for DeploymentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Top1 => DeploymentMode::Top1,
            ModeArg::Top5 => DeploymentMode::SampleTop5,
        }
    }
}

/// Contents of a `--config` file. Command-line flags override every field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vocab: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub corpus: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub masked: Option<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub policy: Option<PolicyKind>,
    pub mode: Option<DeploymentMode>,
    pub max_span_len: Option<usize>,
    pub chunk_len: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub vocab_max_size: Option<usize>,
    pub vocab_min_freq: Option<usize>,
    pub seeds: Option<usize>,
    pub training: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Replaces `slot` when the flag was given.
pub fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

pub fn set_list(slot: &mut Vec<PathBuf>, flag: Vec<PathBuf>) {
    if !flag.is_empty() {
        *slot = flag;
    }
}
