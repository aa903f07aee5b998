//! Adaptive priority mechanisms for allocating a scarce resource among
//! agents who differ in score and group.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod analytics;
pub mod economy;
pub mod error;
pub mod mechanisms;
pub mod numerics;
pub mod market;
pub mod preferences;
pub mod selfcheck;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/economies.md")]
    mod economies {}
    #[doc = include_str!("../../../book/src/mechanisms.md")]
    mod mechanisms {}
    #[doc = include_str!("../../../book/src/markets.md")]
    mod markets {}
    #[doc = include_str!("../../../book/src/analytics.md")]
    mod analytics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
