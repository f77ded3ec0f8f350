//! Criterion benchmarks for the geometry and mechanisms; see `benches/`.
