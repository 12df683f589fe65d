//! Wasserstein distributionally robust chance-constrained programs with
//! right-hand-side uncertainty: mixed-integer formulations, cutting planes,
//! a branch-and-cut solver on a bundled simplex, exact feasibility oracles
//! and a transportation benchmark.
//!
//! The guide in `book/` walks through each module with runnable examples.

pub mod bench;
pub mod bnc;
pub mod cuts;
pub mod error;
pub mod formulations;
pub mod lp;
pub mod mip;
pub mod model;
pub mod numfmt;
pub mod oracles;
pub mod tol;
pub mod transport;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/lp.md")]
    mod lp {}
    #[doc = include_str!("../../../book/src/formulations.md")]
    mod formulations {}
    #[doc = include_str!("../../../book/src/cuts.md")]
    mod cuts {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/branch_and_cut.md")]
    mod branch_and_cut {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
