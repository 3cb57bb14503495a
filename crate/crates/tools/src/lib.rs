//! File formats, dataset pipeline, and CLI around `mmcot-core`: JSON-lines
//! annotation/corpus/prediction/ground-truth files, vocabulary and
//! checkpoint persistence, synthetic fixtures, and the `mmcot` binary's
//! command implementations.

pub mod checkpoint;
pub mod cli;
pub mod corpus_io;
pub mod eval_io;
pub mod pipeline;
pub mod schema;
pub mod synth;
pub mod vocab_io;
