//! Batch analytics over Ethereum transaction traces: trace-tree assembly,
//! DeFi protocol ground truth, interaction networks, topology and community
//! analysis, and extraction of nested protocol building blocks.

pub mod blocks;
pub mod community;
pub mod error;
pub mod ground_truth;
pub mod ingest;
pub mod network;
pub mod pipeline;
pub mod reports;
pub mod topology;
pub mod types;

pub use error::{Diagnostic, Diagnostics, Error, Result};
