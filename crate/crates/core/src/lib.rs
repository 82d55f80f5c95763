//! Hybrid beamforming for HAPS arrays built from reconfigurable pixel
//! antennas: channel generation, sub-connected precoding, classical pattern
//! search, and a transformer-based joint optimizer trained on sum spectral
//! efficiency.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod error;
pub mod net;
pub mod nn;
pub mod precoding;

pub use channel::{EmCsiTensor, PatternCodebook, PatternVector};
pub use config::{LinkBudget, SystemConfig};
pub use error::{Error, Result};
pub use precoding::{AnalogPrecoder, BeamformingSolution, DigitalPrecoderSet, SubarrayMapping};

/// Dense complex matrix used for channels and precoders.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
