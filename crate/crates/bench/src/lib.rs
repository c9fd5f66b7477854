//! Criterion benchmarks for the estimator hot paths; see `benches/`.
