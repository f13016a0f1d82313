//! Acceptance checks for the `idsim` workspace live in `tests/acceptance.rs`.
