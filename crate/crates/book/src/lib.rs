//! The guide in `book/src`, compiled so its snippets run as doc-tests.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/games.md")]
pub mod games {}

#[doc = include_str!("../../../book/src/duality_gap.md")]
pub mod duality_gap {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/stability.md")]
pub mod stability {}

#[doc = include_str!("../../../book/src/landscapes.md")]
pub mod landscapes {}

#[doc = include_str!("../../../book/src/stochastic.md")]
pub mod stochastic {}

#[doc = include_str!("../../../book/src/mog.md")]
pub mod mog {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
