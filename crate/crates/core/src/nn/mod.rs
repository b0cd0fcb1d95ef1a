//! Layers, classifier architectures, the loss and the SGD trainer.

mod arch;
pub mod checkpoint;
mod loss;
mod model;
mod train;

pub use arch::{Architecture, LayerSpec};
pub use loss::cross_entropy;
pub use model::{Layer, Model, Parameter, Prediction};
pub use train::{accuracy, train, TrainConfig, TrainReport};
