//! Staged piecewise-linear construction of "normally rising" homeomorphisms
//! of the square `J^2 = [-1, 1]^2`: maps that fix the horizontal edges, carry
//! each horizontal line to a horizontal line via a fixed boundary circle map,
//! and realize prescribed omega/alpha-limit profiles on chosen ordinate
//! families. On top of the square construction sit the slit-quotient map, the
//! tangent chart to the plane, and star-shaped disk conjugacies, yielding
//! plane homeomorphisms whose disk boundary consists of bounded orbits while
//! every interior orbit diverges in both time directions.

pub mod builder;
pub mod error;
pub mod scalar;
pub mod height;
pub mod limits;
pub mod plane;
pub mod pl1d;
pub mod profiles;

pub use error::{Error, Result};
pub use height::{Height, SquarePoint};
pub use scalar::Scalar;

/// Exact big-rational scalar used by the exact build mode.
pub type Rat = num::rational::BigRational;
