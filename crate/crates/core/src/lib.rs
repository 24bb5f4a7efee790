//! Model-agnostic token attribution for black-box text classifiers.
//!
//! The crate is `no_std` (with `alloc`) and carries no IO. It covers:
//!
//! * [`corpus`]: tokenization and gazetteer masking with a reviewable
//!   proposal/correction loop.
//! * [`model`]: the black-box classifier contract ([`model::ModelAdapter`])
//!   and deterministic builtin models.
//! * [`attribution`]: exact Shapley values, exact Owen values over a partition
//!   tree, the fast recursive partition explainer and antithetic permutation
//!   sampling.
//! * [`aggregate`]: per-class avgSHAP tables, top-word ranking with P/N labels,
//!   task-text frequencies and weighted F1.
//! * [`report`]: threshold-filtered cross-class heatmaps rendered as SVG.
//! * [`simcheck`]: word vectors, cosine similarity and spurious-word flags.
//!
//! File formats, the command line and the subprocess bridge live in the
//! `tokenshap` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod aggregate;
pub mod attribution;
pub mod corpus;
mod error;
pub mod model;
pub mod report;
pub mod simcheck;

pub use error::{Error, Result};
