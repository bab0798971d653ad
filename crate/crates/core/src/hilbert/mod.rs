//! Truncated Hilbert spaces, vectors and structured operators.

mod operator;
mod space;
mod spectral;
mod vector;

pub use operator::OperatorExpr;
pub use space::Space;
pub use spectral::{block_cert, invert_positive, min_eig_selfadjoint, schur_complement, SelfAdjointCert};
pub use vector::{inner, HVector};

pub(crate) use spectral::block_matrix;
