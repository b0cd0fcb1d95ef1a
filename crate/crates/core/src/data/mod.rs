//! Data ingestion and detection set-up construction.

mod builders;
pub mod idx;
mod images;
mod manifest;
mod setup;
pub mod synthetic;

pub use builders::{
    build_adversarial_setup, build_noisy_setup, build_wrong_setup, calibrate_noise, correctly_classified,
    noisy_image, NoiseCalibration, SetupOptions,
};
pub use images::{load_dataset_dir, load_idx_dataset, Dataset, LabeledImage};
pub use manifest::{load_setup, save_setup, setup_paths, SetupManifest};
pub use setup::{Cause, DetectionSetup, Partition, SetupMeta, SetupSample};
