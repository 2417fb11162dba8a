//! Benchmark-only crate; see `benches/ops.rs`. The counter-asserting grid
//! (the authoritative cost reproduction) lives in `habe_core::bench` and is
//! exposed through `habe bench`.
