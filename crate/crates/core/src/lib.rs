//! Interval neural networks for regression uncertainty scores.
//!
//! A trained point network is wrapped in an [`interval::IntervalNetwork`]
//! whose weights and biases are intervals containing the original values.
//! Interval arithmetic turns each input into an output box that contains the
//! point prediction; the box is trained to also contain the targets while
//! staying tight, and its width is the uncertainty score.
//!
//! The crate also carries what is needed to evaluate that idea end to end:
//! a small dense/conv1d network substrate with Adam, MC-dropout and ProbOut
//! baselines, a synthetic 1D deconvolution benchmark, evaluation metrics,
//! file formats, and the experiment pipeline driven by the `inn` CLI.

pub mod adam;
pub mod baselines;
pub mod config;
pub mod data;
pub mod deconv;
pub mod error;
pub mod experiment;
pub mod interval;
pub mod io;
pub mod linear;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
