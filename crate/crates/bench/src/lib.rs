//! Criterion benchmarks for `evpose-core`; see `benches/pipeline.rs`.
