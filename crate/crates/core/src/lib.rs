//! Numerical Blaschke (equiaffine) geometry of parametrized hypersurface
//! immersions.
//!
//! The crate computes the full pointwise Blaschke apparatus (affine metric,
//! affine normal, shape operator, connections, difference tensor, support
//! function and centre map) from Taylor-jet data, constructs two explicit
//! families of quasi-umbilical hypersurfaces that are linearly congruent to
//! their centre map, and verifies the defining identities as numeric
//! residuals over sample grids.
//!
//! The numeric kernel is generic over the scalar type through [`Real`];
//! `f64` is the working precision for all shipped tolerances.

pub mod blaschke;
pub mod error;
pub mod families;
pub mod immersion;
pub mod jets;
pub mod linalg;
pub mod verify;

pub use error::{Error, Result};

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Scalar type the whole crate is generic over.
pub trait Real:
    Float + FromPrimitive + Debug + Display + LowerExp + Sum + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + Debug + Display + LowerExp + Sum + Send + Sync + 'static
{
}

/// Concrete aliases for the common double-precision instantiation.
pub type Jet64 = jets::JetScalar<f64>;
pub type JetPoint64 = jets::JetPoint<f64>;
pub type Mat64 = linalg::Mat<f64>;
pub type BlaschkePoint64 = blaschke::BlaschkePoint<f64>;
pub type FamilyParams64 = families::FamilyParams<f64>;
pub type CheckReport64 = verify::CheckReport<f64>;

/// Single-precision aliases, mainly useful for quick sanity runs; the
/// shipped tolerances assume `f64`.
pub type Jet32 = jets::JetScalar<f32>;
pub type Mat32 = linalg::Mat<f32>;
