//! Criterion benchmarks for the sampling pipeline live under `benches/`.
