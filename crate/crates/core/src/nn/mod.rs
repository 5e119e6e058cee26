//! Graph-attention actor-critic on a small reverse-mode differentiation engine.

pub mod checkpoint;
pub mod dist;
pub mod gradcheck;
pub mod layers;
pub mod obs;
pub mod optim;
pub mod policy;
pub mod tape;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use dist::{apply_action, greedy_action, sample_action, SampledAction};
pub use gradcheck::{grad_check, GradCheck};
pub use layers::{gat_forward, GatLayer, Linear};
pub use obs::ObsNormalizer;
pub use optim::{clip_grad_norm, Adam};
pub use policy::{ActorCritic, InputBuilder, PolicyDims, PolicyInput};
pub use tape::{Adjacency, Tape, Var};
pub use tensor::Tensor;
