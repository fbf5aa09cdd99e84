//! Field-network substrate: dense MLPs, a reverse-mode tape, Adam and
//! JSON checkpoints.

mod adam;
mod checkpoint;
mod mlp;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, NetworkRecord, CHECKPOINT_FORMAT_VERSION};
pub use mlp::{param_count, Activation, MlpModel};
pub use tape::{Gradients, ModelGrads, NetId, Tape, Var};
