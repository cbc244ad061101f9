//! Brain-MRI style analysis pipeline at desk scale: modified anisotropic
//! diffusion denoising, beta-skeleton persistent-homology segmentation,
//! elephant herding hyperparameter search and a small convolutional +
//! bidirectional visual-LSTM classifier.

pub mod ctvr;
pub mod eho;
pub mod imaging;
pub mod madf;
pub mod metrics;

pub use imaging::{GrayImage, ImageError};
pub mod pipeline;
pub mod segment;
