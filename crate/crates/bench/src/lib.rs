//! Criterion benchmarks for the glued toolkit live under `benches/`.
