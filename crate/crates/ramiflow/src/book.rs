//! The guide's chapters, compiled as doctests.
//!
//! Each module below embeds one markdown chapter from `book/src/`, so
//! `cargo test --doc` runs every code block in the book and the narrative
//! cannot drift from the library. Build the rendered book with
//! `mdbook build book`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/costs.md")]
pub mod costs {}

#[doc = include_str!("../../../book/src/measures.md")]
pub mod measures {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/consolidation.md")]
pub mod consolidation {}

#[doc = include_str!("../../../book/src/patterns.md")]
pub mod patterns {}

#[doc = include_str!("../../../book/src/hierarchy.md")]
pub mod hierarchy {}

#[doc = include_str!("../../../book/src/distance.md")]
pub mod distance {}

#[doc = include_str!("../../../book/src/optimizer.md")]
pub mod optimizer {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
