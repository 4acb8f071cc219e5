pub mod closedform;
pub mod config;
pub mod error;
pub mod intervals;
pub mod linalg;
pub mod model;
pub mod superop;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use intervals::IntervalDistribution;
pub use model::{QuantumModel, SpectralData};
pub use superop::{DetectionStatistics, SuperoperatorSet};

pub type C64 = num_complex::Complex64;
