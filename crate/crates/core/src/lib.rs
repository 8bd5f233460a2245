//! Pedestrian detection in image sequences with stacked sequential
//! learning: a sliding-window linear detector whose candidates are
//! re-scored using the base scores of their spatiotemporal neighbourhood.

pub mod config;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod image;
pub mod linear_svm;
pub mod sequence_io;
pub mod ssl;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
