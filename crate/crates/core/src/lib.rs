//! Simulation of identity leakage through the shadows that faces cast onto
//! occluders: a morphable face model, a Lambertian renderer, a convolutional
//! light-transport operator, dataset generation, a Gaussian maximum-likelihood
//! classifier, and experiment drivers.

pub mod container;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mlclass;
pub mod morphable;
pub mod pnm;
pub mod render;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
