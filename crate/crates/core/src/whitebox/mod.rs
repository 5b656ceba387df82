//! Oracles that use the true system matrices: joint spectral radius
//! bounds, quadratic contractive norms, attractor iteration and exact
//! ellipsoid-invariance checks. They validate the sample-based pipeline.

pub mod attractor;
pub mod hull;
pub mod invariance;
pub mod jsr;
pub mod norm;

pub use attractor::{attractor_bound, attractor_iterate, AttractorApprox, DEFAULT_POINT_CAP};
pub use invariance::{boundary_maximum, verify_ellipsoid_invariance, BoundaryMax, InvarianceVerdict};
pub use jsr::{jsr_bruteforce, JsrBounds, DEFAULT_PRODUCT_CAP};
pub use norm::{common_lyapunov_norm, ContractiveNorm};
