//! Subject-independent EEG classification from latent sequences.
//!
//! The pipeline has two trained stages:
//!
//! 1. [`encoder::AutoencoderModel`]: an LSTM autoencoder with channel attention,
//!    trained to reconstruct clean EEG from inputs corrupted with white noise at
//!    unit signal-to-noise ratio. Its encoder emits a `T x L` latent sequence.
//! 2. [`classifier::ClassifierModel`]: two convolutional blocks, a highway block,
//!    a time-axis softmax attention and a dense head operating on those latents.
//!
//! Everything sits on a small reverse-mode autodiff engine in [`tensor`].
//! [`eval`] runs leave-one-subject-out evaluation, [`data`] reads and writes
//! the interchange container and EDF files, and [`analysis`] exports attention
//! traces, latent/channel similarity tables and 2-D latent projections.

pub mod analysis;
pub mod classifier;
pub mod data;
pub mod encoder;
mod bytes;
mod error;
pub mod eval;
pub mod nn;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use tensor::{Real, Tensor};

/// Random generator used throughout; seeded explicitly for reproducibility.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent child seed, e.g. per LOSO fold.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
