//! Planar quadrotor with two rotors, stabilized at a hover waypoint.
//!
//! State order is `(x, z, θ, v_x, v_z, v_θ)`; actions are per-rotor thrust
//! deviations from hover, so the zero action holds the vehicle in place.

use serde::{Deserialize, Serialize};
use wcs_core::{LinearModelF64, MatrixF64, SafetySetF64};

use crate::env::{
    check_action, check_state, discretize, rk4, saturate, signum0, Disturbance, Environment, EpisodeConfig,
    SafetySpec, StepOutcome,
};
use crate::error::{Result, RlError};

/// Admissible magnitudes of the tracking errors `(x, z, θ, v_x, v_z, v_θ)`.
pub const QUADROTOR_BOUNDS: [f64; 6] = [0.5, 0.8, 0.8, 1.0, 10.0, 45.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia: f64,
    /// Rotor distance from the centre of mass.
    pub arm: f64,
    pub gravity: f64,
    pub dt: f64,
    /// Waypoint `(r_x, r_z, r_θ)`.
    pub reference: [f64; 3],
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: 0.01,
            arm: 0.1,
            gravity: 9.81,
            dt: 0.02,
            reference: [2.0, 4.0, 0.0],
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.inertia > 0.0
            && self.arm > 0.0
            && self.gravity > 0.0
            && self.dt > 0.0
            && self.reference.iter().all(|r| r.is_finite());
        if ok {
            Ok(())
        } else {
            Err(RlError::Config(format!("invalid quadrotor parameters {self:?}")))
        }
    }

    fn hover_thrust(&self) -> f64 {
        0.5 * self.mass * self.gravity
    }

    /// Time derivative of the physical state under rotor thrusts `t1, t2`.
    pub fn derivative(&self, s: &[f64; 6], t1: f64, t2: f64, friction: f64) -> [f64; 6] {
        let [_, _, theta, vx, vz, vtheta] = *s;
        let (sin, cos) = theta.sin_cos();
        let total = t1 + t2;
        [
            vx,
            vz,
            vtheta,
            (total * sin - friction * signum0(vx)) / self.mass,
            total * cos / self.mass - self.gravity,
            self.arm * (t1 - t2) / self.inertia,
        ]
    }

    pub fn continuous_jacobians(&self) -> (MatrixF64, MatrixF64) {
        let mut ac = MatrixF64::zeros(6, 6);
        for i in 0..3 {
            ac[(i, i + 3)] = 1.0;
        }
        ac[(3, 2)] = self.gravity;
        let mut bc = MatrixF64::zeros(6, 2);
        bc[(4, 0)] = 1.0 / self.mass;
        bc[(4, 1)] = 1.0 / self.mass;
        bc[(5, 0)] = self.arm / self.inertia;
        bc[(5, 1)] = -self.arm / self.inertia;
        (ac, bc)
    }
}

#[derive(Clone, Debug)]
pub struct Quadrotor {
    params: QuadrotorParams,
    /// Physical state.
    state: [f64; 6],
    disturbance: Disturbance,
    episode: EpisodeConfig,
    steps: usize,
    set: SafetySetF64,
}

impl Quadrotor {
    pub fn new(params: QuadrotorParams, episode: EpisodeConfig) -> Result<Self> {
        params.validate()?;
        episode.validate()?;
        let mut state = [0.0; 6];
        state[..3].copy_from_slice(&params.reference);
        Ok(Self {
            params,
            state,
            disturbance: Disturbance::default(),
            episode,
            steps: 0,
            set: SafetySetF64::symmetric_box(&QUADROTOR_BOUNDS)?,
        })
    }

    pub fn params(&self) -> &QuadrotorParams {
        &self.params
    }

    fn reference6(&self) -> [f64; 6] {
        let r = self.params.reference;
        [r[0], r[1], r[2], 0.0, 0.0, 0.0]
    }

    /// Position or attitude error at its bound.
    pub fn termination_flag(err: &[f64]) -> bool {
        (0..3).any(|i| err[i].abs() >= QUADROTOR_BOUNDS[i])
    }
}

impl Environment for Quadrotor {
    fn name(&self) -> &'static str {
        "quadrotor"
    }

    fn state_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn state(&self) -> Vec<f64> {
        let r = self.reference6();
        self.state.iter().zip(r).map(|(s, r)| s - r).collect()
    }

    fn set_state(&mut self, s: &[f64]) -> Result<()> {
        check_state(s, 6)?;
        let r = self.reference6();
        for i in 0..6 {
            self.state[i] = s[i] + r[i];
        }
        self.steps = 0;
        Ok(())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, 2)?;
        let a = saturate(action, &self.action_bounds());
        let p = self.params;
        let hover = p.hover_thrust();
        let friction = self.disturbance.friction;
        self.state = rk4(&self.state, p.dt, |s| {
            p.derivative(s, hover + a[0], hover + a[1], friction)
        });
        self.steps += 1;
        if self.state.iter().any(|x| !x.is_finite()) {
            return Err(RlError::NonFiniteState { steps: self.steps });
        }
        let err = self.state();
        let violation = !self.set.contains(&err)?;
        let terminated = self.episode.terminate_on_violation && Self::termination_flag(&err);
        Ok(StepOutcome {
            state: err,
            violation,
            terminated,
            truncated: !terminated && self.steps >= self.episode.max_steps,
        })
    }

    fn linearize(&self) -> LinearModelF64 {
        let (ac, bc) = self.params.continuous_jacobians();
        discretize(&ac, &bc, self.params.dt)
    }

    fn safety_spec(&self) -> SafetySpec {
        SafetySpec {
            set: self.set.clone(),
            reference: self.reference6().to_vec(),
        }
    }

    /// Each rotor thrust stays in `[0, m·g]`.
    fn action_bounds(&self) -> Vec<f64> {
        vec![self.params.hover_thrust(); 2]
    }

    fn set_disturbance(&mut self, d: Disturbance) {
        self.disturbance = d;
    }

    fn episode_config(&self) -> &EpisodeConfig {
        &self.episode
    }

    fn set_episode_config(&mut self, cfg: EpisodeConfig) -> Result<()> {
        cfg.validate()?;
        self.episode = cfg;
        Ok(())
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }
}
