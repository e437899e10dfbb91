//! Forward and inverse maps for time-harmonic wave scattering.
//!
//! The crate covers the full pipeline from scatterer to observation data and
//! back:
//!
//! * [`domain`] — grids, direction sets, receiver lines, square partitions,
//!   and Gaussian-mixture scatterer sampling.
//! * [`helmholtz`] — a finite-difference frequency-domain Helmholtz solver
//!   with a perfectly matched layer; generates far-field and seismic
//!   observation data.
//! * [`born`] — the linearized (Born) operator for both acquisition
//!   geometries, blockwise rank measurement, the switch factorization
//!   `A ≈ U Σ V*`, and a filtered back-projection baseline.
//! * [`nn`] — the five network layers (vect, square, switch, conv, pointwise
//!   multiply) with hand-derived backward passes, ADAM, and gradient
//!   checking.
//! * [`model`] — assembles the layers into trainable forward/inverse models.
//! * [`data`] — binary dataset files and dataset generation.
//! * [`checkpoint`] — binary parameter checkpoints and the text model-spec
//!   format.
//! * [`train`] — mini-batch training loop and evaluation metrics.
//! * [`plot`] — PGM and CSV renderings of fields and patterns.

pub mod born;
pub mod checkpoint;
pub mod data;
pub mod domain;
pub mod error;
pub mod helmholtz;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod plot;
pub mod train;

pub use error::{Error, Result};
