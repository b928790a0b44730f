//! Benchmarks for the hot paths of `qhedge`; see `benches/kernels.rs`.
