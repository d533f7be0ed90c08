//! Benchmarks for the ietjoin crate; see benches/core.rs.
