//! Criterion benchmarks for the model, the batch objectives and feature
//! extraction; see `benches/model.rs`.
