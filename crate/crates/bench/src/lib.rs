//! Criterion benchmarks for the nearfield-core kernels; see `benches/`.
