//! Serialized training state.
//!
//! A checkpoint is a single JSON document:
//!
//! | field | content |
//! |---|---|
//! | `format_version` | integer, currently 1; readers accept any version up to their own |
//! | `global_step` | environment steps at which the snapshot was labelled |
//! | `collected_steps` | environment steps actually collected when it was written |
//! | `config_hash` | SHA-256 (hex) of the JSON of `train`, `env` and `system` |
//! | `train`, `env`, `system` | the full configuration |
//! | `policy`, `value` | network weights (column-major per layer) and log standard deviations |
//! | `adam` | critic optimizer moments and step count |
//! | `learner_rng`, `worker_rngs` | ChaCha8 generator states |
//!
//! Floats are written in shortest round-trip form, so loading reproduces
//! every parameter bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evaluate::EnvFactory;
use crate::policy::GaussianPolicy;
use crate::trpo::TrainConfig;
use crate::value::{Adam, ValueNet};
use qpulse_core::{EnvConfig, Error, Result, SystemParams};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub global_step: u64,
    pub collected_steps: u64,
    pub config_hash: String,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub system: SystemParams,
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub adam: Adam,
    pub learner_rng: ChaCha8Rng,
    pub worker_rngs: Vec<ChaCha8Rng>,
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    train: &'a TrainConfig,
    env: &'a EnvConfig,
    system: &'a SystemParams,
}

pub fn config_hash(train: &TrainConfig, env: &EnvConfig, system: &SystemParams) -> String {
    let json = serde_json::to_vec(&HashedConfig { train, env, system }).expect("configuration serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn factory(&self) -> EnvFactory {
        EnvFactory::new(self.system, self.env.clone())
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let ckpt: Self = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        ckpt.check()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Self =
            serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        ckpt.check()?;
        Ok(ckpt)
    }

    fn check(&self) -> Result<()> {
        if self.format_version > CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint format {} is newer than supported version {CHECKPOINT_FORMAT_VERSION}",
                self.format_version
            )));
        }
        let expected = config_hash(&self.train, &self.env, &self.system);
        if expected != self.config_hash {
            return Err(Error::Parse("checkpoint configuration hash mismatch".into()));
        }
        if self.policy.obs_dim() != self.env.observation_dim() || self.policy.act_dim() != self.env.substeps {
            return Err(Error::Parse("policy shape does not match the environment configuration".into()));
        }
        if self.policy.params().iter().chain(self.value.params().iter()).any(|p| !p.is_finite()) {
            return Err(Error::Parse("checkpoint contains non-finite parameters".into()));
        }
        Ok(())
    }
}
