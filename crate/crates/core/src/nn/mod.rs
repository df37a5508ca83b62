//! Small neural-network toolkit: Fourier features, skip MLPs with manual
//! reverse mode, Adam, gradient checks and checkpoints.

mod adam;
pub mod checkpoint;
mod fourier;
pub mod gradcheck;
mod mlp;
mod real;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    NamedNetwork,
};
pub use fourier::{fourier_encode, FourierEncoding};
pub use mlp::{Mlp, MlpCache, MlpGrads};
pub use real::Real;
