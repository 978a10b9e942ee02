//! The chapters of the guide in `book/`, included so that `cargo test` runs
//! their snippets.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/poisson.md")]
pub mod poisson {}

#[doc = include_str!("../../../book/src/semigroup.md")]
pub mod semigroup {}

#[doc = include_str!("../../../book/src/functionals.md")]
pub mod functionals {}

#[doc = include_str!("../../../book/src/quadrature.md")]
pub mod quadrature {}

#[doc = include_str!("../../../book/src/follmer.md")]
pub mod follmer {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
