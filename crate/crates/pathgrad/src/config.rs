//! Run configuration: a single JSON document whose fields are all
//! overridable by CLI flags of the same name (flag wins).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::path::{AnchorStrategy, BaselineKind, PathMethod, PathSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub embeddings: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub method: PathMethod,
    pub strategy: AnchorStrategy,
    pub steps: usize,
    pub knn: usize,
    pub factor: usize,
    pub baseline: BaselineKind,
    pub top_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub emit_raw: bool,
    pub trace_paths: bool,
    pub deterministic: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub dim: usize,
    pub n_examples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = PathSpec::default();
        let hp = Hyperparams::default();
        Self {
            embeddings: None,
            model: None,
            corpus: None,
            method: spec.method,
            strategy: spec.strategy,
            steps: spec.steps,
            knn: spec.knn_k,
            factor: spec.upsample_factor,
            baseline: spec.baseline,
            top_fraction: 0.2,
            seed: hp.seed,
            out: PathBuf::from("out"),
            emit_raw: false,
            trace_paths: false,
            deterministic: false,
            epochs: hp.epochs,
            learning_rate: hp.learning_rate,
            hidden: hp.hidden,
            dim: hp.dim,
            n_examples: 200,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Ok(serde_json::from_str(&content)?)
    }

    pub fn path_spec(&self) -> PathSpec {
        PathSpec {
            method: self.method,
            strategy: self.strategy,
            steps: self.steps,
            knn_k: self.knn,
            upsample_factor: self.factor,
            baseline: self.baseline,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            hidden: self.hidden,
            dim: self.dim,
        }
    }
}
