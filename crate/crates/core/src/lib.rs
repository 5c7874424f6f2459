//! Score-based generative classifiers.
//!
//! A single class-conditional score network is trained with denoising score
//! matching under one of three forward SDEs (VE, VP, sub-VP). At inference
//! time the probability-flow ODE turns the score into an exact conditional
//! log-likelihood `log p(x | y)` for every class, and Bayes' rule with a
//! uniform prior turns those into a posterior and a decision.
//!
//! ```
//! use sbgc::data::AnalyticGaussianScore;
//! use sbgc::likelihood::{log_likelihood, LikelihoodConfig};
//! use sbgc::sde::{SdeFamily, SdeSpec};
//!
//! // Exact score of standard-normal data under the VP SDE.
//! let spec = SdeSpec::new(SdeFamily::Vp);
//! let oracle = AnalyticGaussianScore::standard_normal(2, spec)?;
//! let logp = log_likelihood(&spec, &oracle, &[0.0, 0.0], 0, &LikelihoodConfig::exact())?;
//! assert!((logp + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-2);
//! # Ok::<(), sbgc::Error>(())
//! ```
//!
//! The guide in `book/` walks through each module; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod classifier;
pub mod cli;
pub mod data;
mod error;
pub mod likelihood;
pub mod metrics;
pub mod ode;
pub mod rng;
pub mod score_model;
pub mod sde;
pub mod sweep;
pub mod training;

pub use error::{Error, Result};

// Book chapters, compiled as doc-tests so the listings cannot drift.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/forward-sdes.md")]
    mod forward_sdes {}
    #[doc = include_str!("../../../book/src/score-network.md")]
    mod score_network {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
