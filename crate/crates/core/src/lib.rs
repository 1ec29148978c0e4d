//! Block-sparse signal recovery with Block Orthogonal Matching Pursuit (BOMP).
//!
//! The crate is organised around five pieces:
//!
//! * [`block`]: block-structured vectors and matrices, mixed `l2/lp` norms,
//!   supports, decay profiles and mutual coherence.
//! * [`bomp`]: the pursuit loop itself with fixed-iteration and residual-norm
//!   stopping, full tracing and selectable tie-breaking.
//! * [`rip`]: exact block restricted-isometry constants by exhaustive support
//!   enumeration, plus numeric checkers for the supporting inequalities.
//! * [`conditions`]: the recovery-condition calculus (`g_i`, its inverse,
//!   `h_i`, threshold predicates and noise magnitude bounds).
//! * [`counterexample`]: adversarial matrix/signal pairs that sit exactly on
//!   or beyond the recovery thresholds.
//!
//! [`harness`] ties these together into seeded Monte-Carlo experiments and
//! [`io`] holds the on-disk instance format used by the `bsr` binary.

pub mod block;
pub mod bomp;
pub mod conditions;
pub mod counterexample;
pub mod error;
pub mod harness;
pub mod io;
pub mod par;
pub mod rip;
pub mod tol;

pub use block::{BlockShape, BlockSupport, BlockVector, DecayProfile, MixedNorm, SensingMatrix};
pub use bomp::{bomp_run, BompResult, StopRule, TieBreak};
pub use error::{Error, Result};
pub use par::Exec;
pub use rip::{block_rip_constant, RipReport};
