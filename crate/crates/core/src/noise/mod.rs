//! Two-sided Wiener paths, the Wiener shift, the pathwise Ornstein–Uhlenbeck
//! functional `z*` and the time-rescaling function `κ`.

mod bounds;
mod grid;
mod kappa;
mod ou;
mod path;
mod rng;
mod signal;

pub use bounds::{
    noise_bounds, ou_identity_residual, stationary_moments, sublinearity_report, NoiseBounds,
};
pub use grid::TimeGrid;
pub use kappa::KappaFn;
pub use ou::{ou_value, OuSeries, DEFAULT_TAIL_TOL};
pub use path::{sample_wiener_path, shift_path, shift_path_extended, PathOrigin, SamplePath};
pub use rng::derive_seed;
pub use signal::NoiseSignal;
