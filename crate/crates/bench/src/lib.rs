//! Criterion benchmarks for `brwre-core`; see `benches/`.
