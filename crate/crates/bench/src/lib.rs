//! Criterion benchmarks for tagflow; see `benches/`.
