//! Benchmarks for the solvers; see `benches/`.
