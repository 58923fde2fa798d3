//! Point-based value iteration for finite POMDPs, in two flavors: the
//! classical scalar backup over α-vectors and a distributional backup over
//! ψ-vectors of categorical return distributions.
//!
//! [`pbvi`] and [`dpbvi`] share the stopping rule in [`solver`]. [`envs`]
//! holds the built-in domains and the plaintext model format, and
//! [`harness`] runs side-by-side comparisons and handles file I/O.

pub mod dist;
pub mod dpbvi;
pub mod envs;
pub mod harness;
pub mod model;
pub mod pbvi;
pub mod solver;
