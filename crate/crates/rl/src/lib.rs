//! Trust-region policy optimization for the pulse-shaping environment.

pub mod checkpoint;
pub mod evaluate;
pub mod gae;
pub mod nn;
pub mod policy;
pub mod train;
pub mod trpo;
pub mod value;

pub use checkpoint::Checkpoint;
pub use evaluate::{evaluate, EnvFactory, EvalSummary};
pub use gae::{compute_gae, StepEnd};
pub use policy::GaussianPolicy;
pub use train::{train, StopReason, TrainOptions, TrainReport, Trainer};
pub use trpo::{policy_update, value_update, RolloutBatch, TrainConfig};
pub use value::{Adam, ValueNet};
