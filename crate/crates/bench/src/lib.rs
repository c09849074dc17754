//! Criterion benchmarks for `crtnd-core`; see `benches/`.
