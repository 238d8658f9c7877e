//! Semi-supervised, drift-adaptive binary classification over binary
//! feature vectors, with an uncertainty-driven active-learning loop.

pub mod augment;
pub mod bench;
pub mod data;
pub mod error;
pub mod experiment;
pub mod feature;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod par;
pub mod selection;
pub mod stream;
pub mod trainer;

pub use error::{Error, Result};
pub use feature::FeatureVector;
