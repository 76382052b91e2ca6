//! Reservoir-computing control of chaotic flows.
//!
//! An echo state network learns the dynamics of a Lorenz or Rössler flow.
//! After the flow's parameters change, the network's free-running forecast
//! serves as the target of a proportional controller that pulls the changed
//! system back toward the learned behavior. [`measures`] quantifies the
//! result and [`experiments`] runs seeded ensembles of the whole pipeline.
//! The guide in `book/` walks through each stage.

pub mod cli;
pub mod control;
pub mod dynamics;
pub mod experiments;
pub mod io;
pub mod measures;
pub mod reservoir;
pub mod rng;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/reservoir.md")]
    mod reservoir {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
