//! Invariant cone fields, conal orders and differential positivity on
//! homogeneous spaces: the SPD manifold with its affine-invariant geometry,
//! the Heisenberg quotient, flat vector spaces and oscillator networks on
//! the torus.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cone;
pub mod consensus;
pub mod diffpos;
pub mod error;
pub mod order;
pub mod sampling;
pub mod spd_geometry;
pub mod symmat;

pub use cone::{ConeKind, ConeMargin, ConeSpec, NamedMargin};
pub use error::{ConalError, Result};
pub use order::{OrderVerdict, Witness};
pub use spd_geometry::GeodesicSegment;
pub use symmat::{EigenPair, MatrixFunction, SpdPoint, SymMatrix};

/// Version string embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
