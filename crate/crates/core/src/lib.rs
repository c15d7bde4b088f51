//! Radon cumulative distribution transform (R-CDT) nearest-subspace image
//! classification with likelihood-based rejection of out-of-class samples.

pub mod cdt;
pub mod classifier;
pub mod data;
pub mod error;
pub mod image;
pub mod likelihood;
pub mod radon;
pub mod rcdt;
pub mod subspace;

pub use classifier::{train, ClassifierModel, EvaluationReport, Prediction, TrainConfig};
pub use data::{Label, LabeledDataset};
pub use error::{Error, Result};
pub use image::Image;
pub use likelihood::Decision;
pub use rcdt::{rcdt_forward, RcdtTransform, RcdtVector, TransformConfig};
