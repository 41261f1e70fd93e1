//! Self-corrective learning for sequence generation.
//!
//! A fixed base generator proposes a hypothesis and a separately trained
//! corrector rewrites it, possibly several times. The corrector is trained
//! online from a datapool of scored generations: value-improving pairs are
//! formed within each prompt's bucket and sampled in proportion to their
//! improvement and proximity.
//!
//! Crate layout:
//! - [`seq`] tokens, reserved markers and the corrector input format
//! - [`interp`] straight-line arithmetic programs (parse + execute)
//! - [`valuefn`] value functions and feedback strings
//! - [`pairing`] value-improving pairs, similarity, weighted sampling
//! - [`model`] the log-linear autoregressive toy corrector
//! - [`backends`] generation backends (toy model, scripted corruption, remote API)
//! - [`engine`] datapool, training loop, trajectories and evaluation
//! - [`suite`], [`config`], [`run`] task suites, run configuration and artifacts

pub mod backends;
pub mod config;
pub mod engine;
pub mod error;
pub mod interp;
pub mod model;
pub mod pairing;
pub mod rng;
pub mod run;
pub mod seq;
pub mod suite;
pub mod types;
pub mod valuefn;

pub use error::{Error, Result};
pub use seq::{format_corrector_input, tokenize, TokenSeq};
pub use types::{Candidate, Hyperparams, Origin, TaskInstance, TaskPayload};
