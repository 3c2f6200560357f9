//! Matrix-product ("rational") probability measures on words, their
//! enlarged Markov-bridge representation, and large-deviation rate
//! functionals for finite models and the boundary-driven TASEP.
//!
//! Module map:
//!
//! - [`perron`]: Perron data, Doob transform, infinite tridiagonal family.
//! - [`rational`]: rational measures, couplings, the enlarged chain, bridges.
//! - [`empirical`]: algebraic and spatial empirical measures.
//! - [`rate_finite`]: pair rate functional of finite models, primal and dual.
//! - [`tasep`]: the TASEP representation, samplers and generator oracle.
//! - [`rate_tasep`]: TASEP rate functionals and the profile optimizer.
//! - [`verify`]: enumeration oracles and finite-N large-deviation estimates.
//! - [`cli`]: command-line front end.

pub mod error;
pub mod perron;
pub mod rational;
pub mod empirical;
pub mod rate_finite;
pub mod tasep;
pub mod rate_tasep;
pub mod verify;
pub mod cli;

pub use error::{Error, Result};
