//! Criterion benchmarks for `tckim-core`; see `benches/`.
