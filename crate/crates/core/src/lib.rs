//! Training GANs from lossy measurements, with the measurement operator
//! applied inside the generator's hidden space, plus a discrete minimax
//! oracle for validating the game-theoretic claims on small state spaces.

pub mod adam;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod game;
pub mod gradcheck;
pub mod loss;
pub mod measure;
pub mod metrics;
pub mod nn;
pub mod pgm;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{matmul, Dist, Scalar, Tensor};
