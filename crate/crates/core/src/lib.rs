//! Lyapunov safety envelopes for residual learning controllers.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the precision for callers that do not care.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod eigen;
pub mod error;
pub mod geometry;
pub mod matrix;
pub mod sampler;
pub mod scalar;

pub use control::{
    build_certificate, dlqr_gain, lyapunov_p, residual_action, safety_reward, synthesize, Certificate,
    CertificateReport, LinearModel, SynthesisSpec,
};
pub use eigen::{eigendecompose, is_positive_definite, EigenDecomposition};
pub use error::{CoreError, Result, ViolatedCondition};
pub use geometry::{
    classify, containment_ratios, envelope_contained_in_set, envelope_support, lyapunov_value,
    SafetyEnvelope, SafetySet, StateClass, RUNTIME_BOUNDARY_TOL,
};
pub use matrix::{expm, inverse, solve_linear, solve_matrix, spectral_radius, Matrix, SymmetricMatrix};
pub use sampler::{
    boundary_point, episode_count, generate_grid, random_initial_condition, AngleGridSpec, WorstCaseGrid,
};
pub use scalar::Scalar;

pub type MatrixF64 = Matrix<f64>;
pub type SymmetricMatrixF64 = SymmetricMatrix<f64>;
pub type SafetySetF64 = SafetySet<f64>;
pub type SafetyEnvelopeF64 = SafetyEnvelope<f64>;
pub type CertificateF64 = Certificate<f64>;
pub type LinearModelF64 = LinearModel<f64>;
pub type WorstCaseGridF64 = WorstCaseGrid<f64>;

pub type MatrixF32 = Matrix<f32>;
pub type SymmetricMatrixF32 = SymmetricMatrix<f32>;
pub type SafetySetF32 = SafetySet<f32>;
pub type SafetyEnvelopeF32 = SafetyEnvelope<f32>;
pub type CertificateF32 = Certificate<f32>;
pub type LinearModelF32 = LinearModel<f32>;
pub type WorstCaseGridF32 = WorstCaseGrid<f32>;
