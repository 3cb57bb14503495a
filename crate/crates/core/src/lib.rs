//! Core library for grounding referred objects onto an image patch grid as
//! visual reference tokens (VRTs), building and parsing MM-CoT training
//! samples, encoding them for a tiny autoregressive model, and scoring the
//! six spatial-reasoning tasks.
//!
//! The crate is `no_std` (with `alloc`) so the algorithmic layer stays free
//! of IO; file formats and the CLI live in the companion `mmcot-tools` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod eval;
pub mod format;
pub mod geometry;
pub mod model;
pub mod rng;
pub mod vocab;

mod num;

pub use format::{MMCoTSample, ObjectGrounding, TaskKind};
pub use geometry::{BBox, OrderedVrtSequence, PatchGrid, VrtSet};
pub use vocab::{EncodedSample, Vocabulary};
