// Each chapter of the guide in `book/src` becomes a module's docs, so
// `cargo test --doc -p faciesgan-book` runs every listing in the book.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/synthesis.md")]
pub mod synthesis {}
#[doc = include_str!("../../../book/src/conditioning.md")]
pub mod conditioning {}
#[doc = include_str!("../../../book/src/condition_sampling.md")]
pub mod condition_sampling {}
#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
