use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::games::{DiscriminatorHead, ProjectionGame, QuadraticGame};
use crate::optimizers::{OptimizerKind, OptimizerState};

use super::{write_json, HarnessError};

/// Bumped whenever the checkpoint layout changes incompatibly.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Enough to rebuild the game a state belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "lowercase")]
pub enum GameSpec {
    Quadratic(QuadraticGame),
    Projection(ProjectionGame),
    Synthgan {
        head: DiscriminatorHead,
        batch_size: usize,
        dataset_seed: u64,
        log_trick: bool,
    },
}

/// JSON dump of an optimizer state. Floats are written in shortest
/// round-trip form, so a reload is bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub game: GameSpec,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub state: OptimizerState,
}

impl Checkpoint {
    pub fn new(game: GameSpec, optimizer: OptimizerKind, seed: u64, state: OptimizerState) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            game,
            optimizer,
            seed,
            state,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(format!(
                "format version {} (this build reads {CHECKPOINT_FORMAT_VERSION})",
                ck.format_version
            ));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|reason| HarnessError::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}
