//! Spectral–spatial graph neural operator for reconstructing dense
//! multi-channel fields on irregular point clouds from sparse boundary
//! inputs.

pub mod autodiff;
pub mod bench;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod normalize;
pub mod spectral;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
