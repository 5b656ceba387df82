// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lmi;
pub mod sampling;
pub mod scenario;
pub mod system;
pub mod whitebox;
