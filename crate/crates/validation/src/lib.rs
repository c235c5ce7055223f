//! End-to-end acceptance checks across the library and the `niq` command.
//! Everything lives in `tests/acceptance.rs`.
