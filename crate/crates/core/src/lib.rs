//! Executable machinery for stratified nilpotent (Carnot) groups.
//!
//! The crate is `no_std` (it needs `alloc`) and is organised bottom-up:
//!
//! * [`algebra`]: graded Lie algebras from structure constants, validation and
//!   the built-in catalogue (Heisenberg, Engel, abelian, free nilpotent).
//! * [`group`]: exponential-coordinate group law (exact BCH), inverses and
//!   dilations.
//! * [`metrics`]: quasi-norm and box gauges, Ball-Box constants and numerical
//!   Carnot-Carathéodory distance bounds.
//! * [`measure`]: point samples, greedy covers, Hausdorff measure, dimension
//!   and density estimators.
//! * [`pansu`]: Pansu and metric differentials, Jacobians, multiplicity and
//!   area-formula checks for maps between groups.
//! * [`cones`]: projections, cones, tubes and the approximability /
//!   approximate-tangent-cone testers.
//! * [`levelset`]: horizontal gradients, characteristic points, level-set
//!   sampling, coarea, kernel subgroups and Ahlfors regularity.
//!
//! Everything is deterministic for a fixed seed; see [`rng`].

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity
)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod algebra;
pub mod cones;
pub mod error;
pub mod group;
pub mod levelset;
pub mod measure;
pub mod metrics;
pub mod pansu;
pub mod rng;

mod linalg;
mod math;
mod optim;

pub use algebra::{BuiltinGroup, CarnotAlgebra, Grading, StructureConstants, ValidationReport};
pub use error::{Error, Result};
pub use group::GroupPoint;
pub use measure::{MembershipSet, SetSample};

/// Maximum total dimension supported by the stack-allocated hot paths.
pub const MAX_DIM: usize = 32;

/// Maximum nilpotency depth handled by the hard-coded BCH series.
pub const MAX_DEPTH: usize = 5;
