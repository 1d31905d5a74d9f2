//! Simulator for a photonic convolution accelerator built from microring
//! weight banks.
//!
//! Layers, bottom up:
//!
//! - [`mrr`]: ring transfer functions and their inversions.
//! - [`pwb`]: a weight bank computing a dot product of optical envelopes.
//! - [`conv`]: convolutional units assembled from weight banks.
//! - [`cnn`]: a small MNIST network running its convolutions on the units.
//! - [`perf`]: the analytical speed and power model.
//! - [`io`]: MNIST, model, benchmark and configuration files.

pub mod cnn;
pub mod conv;
pub mod error;
pub mod io;
pub mod mrr;
pub mod perf;
pub mod pwb;
pub mod quant;
pub mod tensor;

pub use error::{Error, Result};

/// Runs the guide's code blocks as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/microrings.md")]
    mod microrings {}
    #[doc = include_str!("../../../book/src/weight-bank.md")]
    mod weight_bank {}
    #[doc = include_str!("../../../book/src/convolution.md")]
    mod convolution {}
    #[doc = include_str!("../../../book/src/mnist.md")]
    mod mnist {}
    #[doc = include_str!("../../../book/src/performance.md")]
    mod performance {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
