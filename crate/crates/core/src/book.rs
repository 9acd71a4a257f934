// Every chapter of the guide becomes the doc comment of an empty module, so
// `cargo test --doc` compiles and runs its snippets. One module per chapter
// keeps failures traceable to their source file.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/graphs.md")]
mod graphs {}
#[doc = include_str!("../../../book/src/delivery.md")]
mod delivery {}
#[doc = include_str!("../../../book/src/self-supervision.md")]
mod self_supervision {}
#[doc = include_str!("../../../book/src/training.md")]
mod training {}
#[doc = include_str!("../../../book/src/metrics.md")]
mod metrics {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
