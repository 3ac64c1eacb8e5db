//! Multi-label training for text-independent speaker identification.

pub mod dsp;
pub mod harness;
pub mod kernel;
pub mod mlt;
pub mod models;
