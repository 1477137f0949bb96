//! Visible-light indoor localization from RSS fingerprints.
//!
//! The pipeline runs in five stages:
//!
//! * [`channel`] synthesizes the line-of-sight IM/DD signal seen by an upward
//!   photodiode under a set of ceiling LEDs, each modulated by its own tone.
//! * [`spectral`] turns sample blocks into periodograms, reads the tone peaks
//!   as RSS vectors (dB) and assembles the fingerprint database.
//! * [`classifiers`] holds the grid-label classifiers (KNN, ELM, random
//!   forest) behind the [`classifiers::Classifier`] trait and a name-keyed
//!   registry.
//! * [`fusion`] combines classifier outputs with least-squares weights,
//!   either one global weight vector (GI-LS) or one per grid point (GD-LS).
//! * [`baselines`] and [`eval`] provide the comparison methods, the error
//!   metrics and the end-to-end experiment runner.

// Guards written as `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod classifiers;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod linalg;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{LocationEstimate, Method, Point2};
