//! Self-contained dense solvers for the per-step subproblems: a two-phase
//! simplex for the linear programs and a barrier interior-point method for
//! the small semidefinite programs behind the sum-of-squares certificates.

pub mod lp;
pub mod sdp;
