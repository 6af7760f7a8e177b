//! Plants, learner and training curriculum for residual safe control.
//!
//! Everything here is `f64`; the scalar-generic math lives in `wcs-core`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod cartpole;
pub mod curriculum;
pub mod env;
pub mod error;
pub mod linear;
pub mod nn;
pub mod quadrotor;
pub mod replay;
pub mod rng;

pub use agent::{AgentConfig, Checkpoint, DdpgAgent, FrozenActor, Learner, Policy, UpdateStats, ZeroPolicy};
pub use cartpole::{CartPole, CartPoleParams, CART_POLE_BOUNDS};
pub use curriculum::{
    failure_rate, rollout, run_curriculum, run_random_baseline, write_trajectory_csv, EpisodeRecord,
    RunRecord, SamplingKind, SamplingScheme, TrainOptions, TrajectoryStep,
};
pub use env::{Disturbance, DisturbanceSpec, Environment, EpisodeConfig, SafetySpec, StepOutcome};
pub use error::{Result, RlError};
pub use linear::LinearPlant;
pub use nn::{gradient_check, Adam, GradientCheck, Mlp, OutputActivation};
pub use quadrotor::{Quadrotor, QuadrotorParams, QUADROTOR_BOUNDS};
pub use replay::{ReplayBuffer, Transition};
