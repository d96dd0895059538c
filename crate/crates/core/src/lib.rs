//! Slice-aware spoofing detection for multi-slice 5G user-plane traffic.
//!
//! This crate holds the allocation-only core of the pipeline: the per-slice
//! traffic model, attack injection, five-tuple window aggregation, the
//! twelve-feature extractor, from-scratch logistic regression and random
//! forest learners, and the statistics used to evaluate them. Everything here
//! is a pure function of its inputs and seed; IO, threads and the command line
//! live in the `slicewatch` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod error;
pub mod eval;
pub mod features;
pub mod flow;
pub mod learn;
pub(crate) mod math;
pub mod packet;
pub mod rng;
pub mod slice;
pub mod stream;
pub mod traffic;

pub use error::{Error, Result};
pub use packet::{Addr, Imsi, Label, Mac, PacketRecord, Protocol, WindowLabel};
pub use slice::{SliceId, SliceProfile, WorkloadSpec};
