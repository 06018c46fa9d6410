//! Sparse solutions of `y = Ax` for dictionaries `A = [Φ₁, …, Φ_p]` made of
//! square orthogonal blocks.
//!
//! The central algorithms are the splitting alternating iterations
//! ([`tsaa_solve`] for two blocks, [`msaa_solve`] for more), which split the
//! measurements across blocks, solve each orthogonal subsystem by thresholding,
//! and refine the combined estimate with two small least-squares projections.
//! IHT, HTP, SP, CoSaMP, OMP and FISTA are provided for comparison through the
//! same [`solve`] entry point.
//!
//! Alongside the solvers the crate evaluates the coherence-based recovery
//! guarantees ([`theory`]), generates seeded test problems ([`synthetic`]),
//! runs success-rate sweeps ([`harness`]) and reconstructs images from
//! compressive measurements of their Haar coefficients ([`imaging`]).

pub mod error;
pub mod harness;
pub mod imaging;
pub mod linalg;
pub mod seed;
pub mod solvers;
pub mod synthetic;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{
    hard_threshold, mutual_coherence, restricted_least_squares, top_k_indices, BlockDictionary,
    IndexSet,
};
pub use solvers::{
    baseline_solve, msaa_solve, msaa_step, solve, tsaa_solve, tsaa_step, InitialPoint, Problem,
    SolveResult, SolverConfig, SolverKind, SolverRun, SolverState, StopReason, TraceEntry,
};
pub use synthetic::{gen_instance, recovery_success, Instance, InstanceSpec};
pub use theory::{bound_report, BoundReport, BoundVariant};
