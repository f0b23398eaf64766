//! Dichotomy certificates: spectral splitting for autonomous generators,
//! numerical verification of the dichotomy axioms, and Green functions.

mod certificate;
mod green;
mod spectral;
pub(crate) mod stepped;
mod verify;

pub use certificate::{
    autonomous_certificate, autonomous_certificate_with, discrete_constant_certificate,
    DichotomyCertificate, ProjectionFamily, TimeKind, DEFAULT_MARGIN, DEFAULT_SCAN_DENSITY,
};
pub use green::{green_eval, projection_bound, projection_distance, GreenKernel};
pub use spectral::{
    discrete_spectral_projection, spectral_projection, spectral_projection_with_tol, split_spectrum,
    SpectralSplit, DEFAULT_GAP_TOL,
};
pub use verify::{
    verify_dichotomy, AxiomCheck, CocycleRef, InvertibilityCheck, VerificationReport, VerifyWindow,
    COMMUTATION_TOL, IDEMPOTENCE_TOL, INVERSE_TOL,
};
