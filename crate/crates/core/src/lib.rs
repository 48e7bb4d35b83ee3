//! Optimal stopping rules that minimize the expected rank of a stopped
//! symmetric random walk with at most three steps.
//!
//! Two observation models are covered:
//!
//! * **full information**: the decision maker sees every step `X_1, ..., X_k`;
//! * **relative ranks**: only the rank of `S_k` among `S_0, ..., S_k` is seen.
//!
//! The crate is organized bottom-up:
//!
//! - [`distributions`]: continuous step laws symmetric about zero.
//! - [`numerics`]: adaptive Gauss–Kronrod quadrature and Brent root finding.
//! - [`walk`]: paths, rank bookkeeping, and the policy abstraction.
//! - [`fullinfo`]: the three-step full-information solution.
//! - [`relranks`]: the `(p, q)` parameters, the 24-ordering table and the
//!   three-step relative-ranks solution.
//! - [`oracle`]: brute-force verifiers (policy enumeration, grid DP).
//! - [`simulate`]: seeded, chunked Monte Carlo policy evaluation.
//! - [`report`]: the machine-readable reports behind the command-line tool.

// `!(x > 0.0)` deliberately treats NaN as out of range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
mod error;
pub mod fullinfo;
pub mod numerics;
pub mod oracle;
pub mod relranks;
pub mod report;
pub mod simulate;
pub mod walk;

pub use distributions::{DistSpec, SymmetricDistribution};
pub use error::{Error, Result};
pub use fullinfo::{FullInfo, FullInfoRule, FullInfoSolution};
pub use oracle::{GridDpResult, RankPolicyTable};
pub use relranks::{PermutationTable, PqParams, RelativeRankRule, RuleBranch};
pub use simulate::{SimConfig, SimResult};
pub use walk::{Decision, ObservationModel, RankView, StoppingPolicy, WalkPath};
