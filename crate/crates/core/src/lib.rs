//! Simulation of spatial matching between uniform supply and demand in the
//! unit cube: exact static solvers, hierarchical greedy, dynamic engines
//! and scaling experiments.

pub mod engines;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod policies;
pub mod static_match;
pub mod stats;

pub use error::{Error, Result};
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/static_matching.md")]
    mod static_matching {}
    #[doc = include_str!("../../../book/src/hierarchical_greedy.md")]
    mod hierarchical_greedy {}
    #[doc = include_str!("../../../book/src/engines.md")]
    mod engines {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
