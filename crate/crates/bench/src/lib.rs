//! Criterion benchmarks for the hot paths of `blm-core`.
