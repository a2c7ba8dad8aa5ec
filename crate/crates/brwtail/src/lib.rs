//! Tail asymptotics of subcritical branching random walks.
//!
//! A subcritical branching random walk dies out almost surely, so its global
//! maximal displacement M is finite; P(M > x) decays like κ·e^{-γx} where γ
//! solves E[e^{γX}] = 1/m. This crate computes that picture two ways and
//! checks the routes against each other:
//!
//! - [`laws`]: offspring/step distributions, the generating functional ψ,
//!   the tilt exponent γ and the exponentially tilted step law.
//! - [`walk`]: Monte Carlo functionals of the positively drifting tilted
//!   walk (ladder heights, the all-time minimum, renewal sums).
//! - [`brw`]: the tree simulator (with and without killing at 0) and the
//!   many-to-one / submartingale consistency checkers.
//! - [`tail`]: exact lattice fixed-point solvers for P(M > x) and the
//!   killed variant, plus evaluators of the limit constant κ and the
//!   killed-tail prefactor.
//! - [`enumeration`]: exact small-instance oracle by exhaustive outcome
//!   enumeration, independent of both the simulator and the solvers.
//! - [`model`]: the JSON model-file format consumed by the CLI.
//!
//! Every estimator takes a master seed and a worker configuration; results
//! are bit-identical for any worker count (fixed-size chunking, per-path
//! RNG streams). The `parallel` feature (default) backs ensembles with
//! rayon; without it the same chunk loop runs sequentially.

pub mod brw;
pub mod enumeration;
pub mod estimate;
pub mod exec;
pub mod laws;
pub mod model;
pub mod tail;
pub mod walk;

pub use estimate::Estimate;
pub use exec::Workers;
