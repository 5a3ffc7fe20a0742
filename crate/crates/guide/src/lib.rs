// The book lives in /book and is built by mdbook. mdbook cannot run Rust
// snippets against a workspace crate, so each chapter is pulled in here as a
// module doc and `cargo test --doc -p choquard-guide` runs the snippets.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/constants.md")]
pub mod constants {}
#[doc = include_str!("../../../book/src/grids.md")]
pub mod grids {}
#[doc = include_str!("../../../book/src/riesz.md")]
pub mod riesz {}
#[doc = include_str!("../../../book/src/spectrum.md")]
pub mod spectrum {}
#[doc = include_str!("../../../book/src/energy.md")]
pub mod energy {}
#[doc = include_str!("../../../book/src/bubbles.md")]
pub mod bubbles {}
#[doc = include_str!("../../../book/src/minimax.md")]
pub mod minimax {}
#[doc = include_str!("../../../book/src/limits.md")]
pub mod limits {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
