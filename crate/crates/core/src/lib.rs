//! Quaternionic lift of geodesic flows on `(S², e^{2u}g₀)` to Reeb flows of
//! tight contact forms on S³, with the numerical tools to locate closed
//! orbits and compute their monodromy, Conley–Zehnder indices, self-linking
//! numbers and Birkhoff-section return maps.

// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod birkhoff;
pub mod contact;
pub mod error;
pub mod flows;
pub mod harmonics;
pub mod linking;
pub mod metric;
pub mod ode;
pub mod orbits;
pub mod quat;
pub mod winding;

pub use contact::{ContactForm, Multiplier, TangentState, TangentVector};
pub use error::{Error, Result};
pub use flows::{PhasePoint, Trajectory};
pub use metric::ConformalMetric;
pub use orbits::{Classification, ClosedOrbitRecord};
pub use quat::{Quaternion, UnitTangent};
pub use winding::{SymplecticArc, WindingInterval};
