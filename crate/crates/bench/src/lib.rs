//! Benchmarks live in `benches/`.

pub use estor_core;
