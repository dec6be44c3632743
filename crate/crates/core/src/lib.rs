//! Stochastic Boolean function evaluation (SBFE) for k-of-n functions.
//!
//! Variables `x_1..x_n` are independent Bernoulli(`p_i`) and can be tested at
//! integer cost `c_i`. The function is 1 iff at least `k` variables are 1. A
//! policy tests variables until the value is certain; its quality is the
//! expected cost paid.
//!
//! Modules:
//!
//! - [`instance`]: instances, determination, partial policies and composition.
//! - [`eval`]: exact cost distributions of fixed orders, plus a Monte Carlo
//!   runner that also drives adaptive strategies.
//! - [`oracle`]: brute-force optima and outcome enumeration for small `n`.
//! - [`adaptive`]: the optimal adaptive policy (ratio-prefix rule).
//! - [`dominance`]: two-sided dominance, milestones and bucket construction.
//! - [`ptas`]: the approximation scheme for the best non-adaptive order under
//!   unit costs, with a guided certification mode.
//! - [`gapbench`]: the lower-bound family for the adaptivity gap.
//!
//! All indices are 0-based inside the library. File formats and the CLI use
//! 1-based indices.

pub mod adaptive;
pub mod dominance;
pub mod error;
pub mod eval;
pub mod gapbench;
pub mod instance;
pub mod oracle;
pub mod ptas;

pub use error::{Error, Result};
pub use instance::{Determination, DeterminationState, Instance, PartialPolicy};
