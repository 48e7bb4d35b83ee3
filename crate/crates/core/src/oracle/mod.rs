//! Brute-force verifiers: exhaustive enumeration of relative-rank policies
//! and a discretized backward induction for the full-information problem.

mod enumerate;
mod grid_dp;

pub use enumerate::{
    enumerate_relrank_policies, evaluate_policy_exact, ordering_distribution, EnumerationResult,
    RankPolicyTable,
};
pub use grid_dp::{grid_dp_full_info, GridDpResult};
