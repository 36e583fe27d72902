//! Doc tests for the guide in `book/src`. Each chapter becomes the
//! documentation of one module so a failing listing names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/acquisition.md")]
pub mod acquisition {}

#[doc = include_str!("../../../book/src/benchmarks.md")]
pub mod benchmarks {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
