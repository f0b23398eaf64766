pub mod cli;
pub mod cocycle;
pub mod dichotomy;
pub mod error;
pub mod greens;
pub mod hyperbolic;
pub mod linalg;
pub mod noise;
pub mod robustness;
pub mod sde_bridge;

pub use error::{Error, Result};
