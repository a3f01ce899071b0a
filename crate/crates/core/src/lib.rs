//! Weak solutions of the double-phase 1-Laplacian Dirichlet problem
//!
//! ```text
//! −div(∇u/|∇u| + a(x)|∇u|^{q−2}∇u) = 0 in Ω,   u = h on ∂Ω
//! ```
//!
//! on uniform P1 meshes of an interval or a rectangle. Two routes produce a
//! solution: driving the p,q double-phase problem to `p → 1`
//! ([`continuation`]) and minimizing the limit functional
//! `I(u) = ∫|∇u| + (1/q)∫a|∇u|^q` directly ([`limit`]). Either result can be
//! checked against the weak-solution certificate: a field `z` with
//! `‖z‖∞ ≤ 1`, `div(z + a|∇u|^{q−2}∇u) = 0` weakly and `z·∇u = |∇u|`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod continuation;
pub mod energy;
pub mod error;
pub mod io;
pub mod limit;
pub mod linalg;
pub mod mesh;
mod newton;
pub mod oracle1d;
pub mod pq_solver;
pub mod spaces;

pub use continuation::{
    convergence_diagnostics, run_continuation, ContinuationOptions, ContinuationTrace,
    ConvergenceReport, LimitCandidate, ScheduleParams,
};
pub use energy::{
    energy_fp, energy_i, grad_energy, hess_energy, EnergyKind, EnergyReport, ProblemSpec,
};
pub use error::{Error, Hypothesis, Result};
pub use limit::{
    cross_check, minimality_probe, solve_limit, verify_certificate, Certificate, CrossCheck,
    LimitOptions, LimitSolution, MinimalityReport, Thresholds,
};
pub use mesh::{gradient, trace, Mesh, ScalarField, VectorField};
pub use oracle1d::{oracle_limit_1d, oracle_pq_1d, OracleSolution};
pub use pq_solver::{solve_pq, weak_residual_pq, PqOptions, PqSolution};
pub use spaces::{
    luxemburg_norm, modular_theta_p, muckenhoupt_aq_estimate, total_variation, weighted_lq_norm,
    Exponents, Weight,
};
