//! Stage two: convolutional classifier with a highway block and time-axis
//! attention, operating on latent sequences.

mod model;
mod train;

pub(crate) use model::{argmax, softmax};
pub use model::{ActivationCapture, ClassifierConfig, ClassifierModel, ForwardOutput};
pub use train::{train_classifier, ClassifierHistory, ClassifierTrainConfig};
