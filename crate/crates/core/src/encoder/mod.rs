//! Stage one: denoising LSTM autoencoder with channel attention, plus the PCA
//! baseline encoder.

mod autoencoder;
mod awgn;
mod pca;

pub use autoencoder::{
    reconstruction_loss, train_autoencoder, AutoencoderConfig, AutoencoderModel, AutoencoderTrainConfig,
    TrainHistory,
};
pub use awgn::add_awgn;
pub use pca::{symmetric_eigen, PcaModel};
