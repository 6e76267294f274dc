//! Full-text indexing, positional phrase search and corpus term auditing.

pub mod analysis;
pub mod index;
pub mod query;
pub mod bulk;
pub mod synth;
pub mod shard;
pub mod metrics;
pub mod audit;
pub mod server;
pub mod cli;
