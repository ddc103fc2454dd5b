//! Spectral toolkit for approximate controllability of a non-autonomous wave
//! equation `y_tt = y_ξξ + b(t) y_ξ + Bu + f` on the circle, with delay,
//! non-instantaneous impulses and nonlocal initial conditions.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` aliases below name the usual double-precision instantiations.

// `!(a < b)` is how NaN gets rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod gramian;
pub mod mild;
pub mod quadrature;
pub mod scalar;
pub mod spectral;
pub mod trajectory;
pub mod wave;

pub use error::{Error, Result};
pub use evolution::{
    autonomous_cosine, autonomous_sine, build_evolution_table, check_evolution_axioms, growth_bound_violations, solve_mode_ivp, AxiomReport, Coefficient, EvolutionTable,
    FundamentalPair, OperatorBounds,
};
pub use gramian::{
    assemble_gramian, assemble_gramian_on_grid, build_control_operator, control_eval, controllability_certificate,
    linear_feedback_control, resolvent_residual, resolvent_solve, Certificate, ControlOperator, FeedbackLaw, Gramian,
    KernelDescriptor, LinearFeedback,
};
pub use mild::{
    feasibility_check, validate_schedule, Feasibility, FeasibilityConstants, HistoryFn, Impulse, ImpulseMap,
    ImpulseSchedule, MildSolver, NonlocalBounds, NonlocalMap, Nonlinearity, PhiOutput, ProblemConfig, Solution,
    VerificationReport,
};
pub use scalar::{Cplx, Real};
pub use spectral::{
    d_norm, duality_map, duality_map_grid, evaluate_on_grid, lp_norm_grid, pc_norm, project_to_modes,
    HistorySegment, ModeBasis, SpectralField,
};
pub use trajectory::{PiecewiseTrajectory, TimeGrid};
pub use wave::{
    gamma, impulse_bounds, wave_impulse, wave_impulse_deriv, wave_nonlinearity, wave_nonlocal_g, wave_nonlocal_h,
    ImpulseKernel, ScalarKernel, WaveImpulse, WaveInstance,
};

pub type ModeBasisF64 = ModeBasis<f64>;
pub type SpectralFieldF64 = SpectralField<f64>;
pub type PiecewiseTrajectoryF64 = PiecewiseTrajectory<f64>;
pub type TimeGridF64 = TimeGrid<f64>;
pub type EvolutionTableF64 = EvolutionTable<f64>;
pub type GramianF64 = Gramian<f64>;
pub type ControlOperatorF64 = ControlOperator<f64>;
pub type ProblemConfigF64 = ProblemConfig<f64>;
pub type MildSolverF64 = MildSolver<f64>;
pub type WaveInstanceF64 = WaveInstance<f64>;
