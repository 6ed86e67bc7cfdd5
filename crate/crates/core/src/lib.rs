//! List-replicable planning and learning on finite-horizon tabular MDPs.
//!
//! The crate is organized bottom up. [`mdp`] and [`dp`] hold the model and its
//! exact dynamic programs, [`oracle`] checks them by brute force, [`planner`]
//! implements tolerance-based robust planning, [`truncation`] builds the
//! truncated models, [`learners`] contains the episodic learners, and
//! [`harness`] measures how many distinct outputs a learner produces across
//! seeded runs. The guide in `book/` walks through each layer.

// `!(x >= 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dp;
pub mod envs;
pub mod error;
pub mod harness;
pub mod learners;
pub mod mdp;
pub mod oracle;
pub mod perturb;
pub mod planner;
pub mod truncation;
pub mod verify;

pub use error::{Error, Result};
pub use mdp::{OccupancyTable, Policy, TabularMdp, Trajectory, ValueTables};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/robust-planning.md")]
    mod robust_planning {}
    #[doc = include_str!("../../../book/src/truncation.md")]
    mod truncation {}
    #[doc = include_str!("../../../book/src/learners.md")]
    mod learners {}
    #[doc = include_str!("../../../book/src/replicability.md")]
    mod replicability {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
