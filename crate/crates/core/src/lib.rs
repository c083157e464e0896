//! Allocation-only building blocks for masked-language-model pre-training data.
//!
//! Everything in this crate is a pure function of its inputs: no filesystem,
//! no clocks, no global state. The `mlmprep` crate wraps these pieces with
//! file formats, process orchestration and a command-line front end.
//!
//! Modules follow the data path:
//!
//! * [`bbpe`] trains and applies a byte-level BPE tokenizer that tracks word
//!   boundaries.
//! * [`corpus`] deduplicates, shuffles and counts documents, and checks them
//!   against a declarative manifest.
//! * [`packer`] splits text into sentences, packs them into fixed-length
//!   sequences and encodes the binary shard format.
//! * [`masker`] applies dynamic whole word masking to packed sequences.
//! * [`schedule`] is the warmup + polynomial-decay learning-rate curve.
//! * [`metrics`] and [`grid`] cover downstream evaluation.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bbpe;
pub mod corpus;
pub mod defaults;
mod error;
pub mod grid;
pub mod masker;
pub mod metrics;
pub mod packer;
pub mod schedule;

pub use error::{Error, Result};
