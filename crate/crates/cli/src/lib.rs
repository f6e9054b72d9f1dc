//! Operator commands for the three-party engine: protocol benchmarks, secure
//! inference and training on MNIST-scale data, and dataset ingestion.

pub mod bench;
pub mod costmodel;
pub mod infer;
pub mod reference;
pub mod runner;
pub mod train;
