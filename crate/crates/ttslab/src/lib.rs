//! Transformer-GAN toolkit for multichannel time-series: simulation,
//! training (least-squares and Wasserstein objectives, conditional or not),
//! wavelet-coherence evaluation, projections, and a downstream
//! classification case study.

pub mod autodiff;
pub mod cli;
pub mod coherence;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod params;
pub mod plot;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
