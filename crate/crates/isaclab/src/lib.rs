//! Joint sensing-waveform and receive-beamforming design for uplink
//! integrated sensing and communication (ISAC).
//!
//! The library models problem instances at the covariance level, computes
//! sensing and communication rates in a reduced eigenvalue form, provides
//! closed-form and iterative reference solvers, and trains a small
//! constraint-respecting neural network against an unsupervised
//! weighted-sum-rate loss.

pub mod error;
pub mod harness;
pub mod isacnn;
pub mod linalg;
pub mod metrics;
pub mod scene;
pub mod solvers;

pub use error::{IsacError, Result};
