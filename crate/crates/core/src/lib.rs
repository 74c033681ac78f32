//! Numerical construction of rotationally symmetric λ-hypersurfaces.
//!
//! Profile curves are integrated in the half plane, split into graphs over
//! the r-axis, labelled by the shape of each graph, and shot on their
//! initial height to find a curve that closes up on the axis. The closing
//! curve is mirrored and revolved into a compact, embedded, mean convex but
//! non-convex surface.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod dopri;
pub mod error;
pub mod integrator;
pub mod linearize;
pub mod model;
pub mod regression;
pub mod roots;
pub mod shoot;
pub mod surface;

pub use error::{Error, Result};
pub use integrator::{
    integrate, singular_start, Branch, Event, EventKind, IntegrationControls, Terminal, Trajectory,
};
pub use model::{curvatures, exact_cylinder, exact_sphere, rhs, CurvatureData, Params, ProfileState};
