//! Criterion benchmarks for the rewiring kernels live under `benches/`.
