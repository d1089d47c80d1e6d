//! Numerical experiments on symplectic capacities of convex bodies in `R^{2n}`.
//!
//! * [`symcore`]: the standard form, symplectic matrices and the explicit
//!   normalizing maps.
//! * [`bodies`]: support functions of balls, ellipsoids, quadratic cylinders
//!   and their intersections.
//! * [`ehz`]: the Ekeland–Hofer–Zehnder capacity through Clarke's dual action.
//! * [`orbits`]: closed characteristics on the boundary of a ball cut by a
//!   cylinder.
//! * [`bounds`]: lower bounds for the Gromov width and related checks.
//! * [`verify`]: the acceptance criteria as a reusable report.

pub mod bodies;
pub mod bounds;
pub mod ehz;
pub mod optim;
pub mod orbits;
pub mod quad;
pub mod symcore;
pub mod verify;

pub use bodies::{
    Body, BodySpec, CapacityBall, ConvexBody, EllipsoidBody, Extent, IntersectionBody,
    QuadCylinder,
};
pub use symcore::{PhaseVector, SymplecticMatrix};
