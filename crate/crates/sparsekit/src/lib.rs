pub mod bm25;
pub mod distill;
pub mod encoder;
pub mod error;
pub mod loss;
pub mod meta;
pub mod metrics;
pub mod rerank;
pub mod synth;
pub mod train;
pub mod index;
pub mod io;
pub mod types;
