use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const CHECKPOINT_VERSION: u32 = 1;

/// State needed to continue a seed run after round `next_round - 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    /// The result-affecting configuration this run was started with.
    pub config: serde_json::Value,
    pub strategy: String,
    pub seed: u64,
    /// First round not yet recorded in the results log.
    pub next_round: usize,
    pub finished: bool,
    /// Labeled indices, ascending.
    pub labeled: Vec<usize>,
    /// Strategy stream state after the last committed query.
    pub strategy_rng: StreamRng,
}

impl Checkpoint {
    /// Writes to a temporary sibling then renames, so a crash never leaves a
    /// half-written checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Integrity(format!("cannot serialize checkpoint: {e}")))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Format {
            offset: 0,
            message: format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()),
        })?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 0,
                message: format!("unsupported checkpoint version {}", ckpt.version),
            });
        }
        Ok(ckpt)
    }
}
