//! Benchmark-only crate; the Criterion targets live under `benches/`.
//!
//! Run with `cargo bench -p opal-bench`.
