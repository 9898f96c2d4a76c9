//! Holds the acceptance suite in `tests/acceptance.rs`. Run it with
//! `cargo test -p validation --test acceptance -- --test-threads=1`.
