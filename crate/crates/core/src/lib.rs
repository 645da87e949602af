//! Numerical toolkit for breakthrough-screening models: concave frontiers,
//! deadline mechanisms, variational identities and smoothing.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod distribution;
pub mod error;
pub mod export;
pub mod ext;
pub mod fixtures;
pub mod frontier;
pub mod gap;
pub mod mechanism;
pub mod mixture;
pub mod numeric;
pub mod path;
pub mod report;
pub mod smoothing;
pub mod suite;
pub mod technology;
pub mod variational;

pub use error::{Error, Result};
pub use ext::ExtReal;
pub use frontier::{Frontier, SharedFrontier, Side};
pub use report::{Check, VerificationReport};
pub use technology::{
    effort_star, make_moral_hazard_technology, verify_ui_assumptions, Curve,
    MoralHazardPrimitives, Technology,
};
