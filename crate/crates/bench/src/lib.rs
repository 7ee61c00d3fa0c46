//! Criterion benchmarks for the labeling and rendering hot paths; see `benches/`.
