//! The user guide, one module per chapter.
//!
//! The guide sources live in `book/` and render with mdBook; including
//! them here makes `cargo test --doc` compile and run every code block,
//! so the prose cannot drift away from the library. One module per
//! chapter keeps doctest failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/systems.md")]
pub mod systems {}

#[doc = include_str!("../../../book/src/signals.md")]
pub mod signals {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/augmentation.md")]
pub mod augmentation {}

#[doc = include_str!("../../../book/src/riccati.md")]
pub mod riccati_flow {}

#[doc = include_str!("../../../book/src/optimal-control.md")]
pub mod optimal_control {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
