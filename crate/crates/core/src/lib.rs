//! Core algorithms for desk-scale passage retrieval experiments.
//!
//! Everything in this crate is pure computation over owned data: passage
//! chunking, a BM25 inverted index, a hashed bag-of-words dual encoder with
//! exact gradients, exact dot-product search, synthetic question generation
//! with truncated sampling, contrastive training and evaluation metrics.
//! File formats and the command line live in the `retro` crate.
//!
//! The crate is `no_std` and only needs `alloc`. Floating point transcendental
//! functions go through `libm` so results are identical across targets.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod dense;
pub mod encoder;
mod error;
pub mod experiments;
pub mod generator;
pub mod hash;
pub mod lexical;
pub mod linalg;
pub mod presets;
pub mod stopwords;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
