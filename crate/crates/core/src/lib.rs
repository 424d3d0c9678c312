//! Numerical laboratory for two-dimensional reversible maps.
//!
//! The crate is organised bottom-up:
//!
//! - [`system`]: planar maps, involutions, reversibility checks and the
//!   built-in example systems.
//! - [`orbits`]: orbit iteration, symmetric periodic-orbit search on
//!   symmetry lines, monodromy and multiplier classification.
//! - [`normal_form`]: the resonant normal-form flows near an elliptic
//!   point, their equilibria and the pendulum rescaling.
//! - [`resonance_scan`]: parameter sweeps, pitchfork detection and
//!   sink/source certification on top of [`normal_form`].
//! - [`kam`]: rotation numbers, Diophantine certificates, twist checks
//!   and periodic orbits between invariant circles.
//! - [`cli`]: configuration, subcommands and report bundles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod integrate;
pub mod kam;
pub mod linalg;
pub mod normal_form;
pub mod orbits;
pub mod resonance_scan;
pub mod roots;
pub mod system;

pub use linalg::Mat2;
pub use system::{Point, ReversibleSystem};
