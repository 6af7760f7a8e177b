//! Cart with a uniform pole hinged on top, pole angle measured from upright.
//!
//! State order is `(x, v, θ, ω)`. The reference is the upright equilibrium at
//! the origin, so physical and error coordinates coincide.

use serde::{Deserialize, Serialize};
use wcs_core::{LinearModelF64, MatrixF64, SafetySetF64};

use crate::env::{
    check_action, check_state, discretize, rk4, saturate, signum0, Disturbance, Environment, EpisodeConfig,
    SafetySpec, StepOutcome,
};
use crate::error::{Result, RlError};

/// Admissible magnitudes of `(x, v, θ, ω)`.
pub const CART_POLE_BOUNDS: [f64; 4] = [0.9, 3.0, 0.8, 4.5];
/// Episode stops once `|x|` reaches this.
pub const TERMINATION_X: f64 = 0.9;
/// Episode stops once `|θ|` reaches this.
pub const TERMINATION_THETA: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from hinge to the pole's centre of mass.
    pub half_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub force_limit: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.8,
            dt: 0.02,
            force_limit: 15.0,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cart_mass > 0.0
            && self.pole_mass >= 0.0
            && self.half_length > 0.0
            && self.gravity.is_finite()
            && self.dt > 0.0
            && self.force_limit > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RlError::Config(format!("invalid cart-pole parameters {self:?}")))
        }
    }

    fn total_mass(&self) -> f64 {
        self.cart_mass + self.pole_mass
    }

    /// Time derivative of `(x, v, θ, ω)` under applied force `force`.
    pub fn derivative(&self, s: &[f64; 4], force: f64) -> [f64; 4] {
        let [_, _, theta, omega] = *s;
        let (sin, cos) = theta.sin_cos();
        let mt = self.total_mass();
        let ml = self.pole_mass * self.half_length;
        let temp = (force + ml * omega * omega * sin) / mt;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / mt));
        let x_acc = temp - ml * theta_acc * cos / mt;
        [s[1], x_acc, omega, theta_acc]
    }

    /// Kinetic plus potential energy, conserved when unforced.
    pub fn energy(&self, s: &[f64; 4]) -> f64 {
        let [_, v, theta, omega] = *s;
        let l = self.half_length;
        let mp = self.pole_mass;
        0.5 * self.total_mass() * v * v
            + mp * l * theta.cos() * v * omega
            + 0.5 * (4.0 / 3.0) * mp * l * l * omega * omega
            + mp * self.gravity * l * theta.cos()
    }

    /// Continuous-time Jacobians at the upright equilibrium.
    pub fn continuous_jacobians(&self) -> (MatrixF64, MatrixF64) {
        let mt = self.total_mass();
        let mp = self.pole_mass;
        let l = self.half_length;
        let kappa = 4.0 / 3.0 - mp / mt;
        let theta_theta = self.gravity / (l * kappa);
        let theta_force = -1.0 / (mt * l * kappa);
        let x_theta = -mp * l * theta_theta / mt;
        let x_force = 1.0 / mt - mp * l * theta_force / mt;
        let ac = MatrixF64::from_rows(&[
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, x_theta, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, theta_theta, 0.0],
        ])
        .expect("4x4");
        let bc = MatrixF64::from_rows(&[[0.0], [x_force], [0.0], [theta_force]]).expect("4x1");
        (ac, bc)
    }
}

#[derive(Clone, Debug)]
pub struct CartPole {
    params: CartPoleParams,
    state: [f64; 4],
    disturbance: Disturbance,
    episode: EpisodeConfig,
    steps: usize,
    set: SafetySetF64,
}

impl CartPole {
    pub fn new(params: CartPoleParams, episode: EpisodeConfig) -> Result<Self> {
        params.validate()?;
        episode.validate()?;
        Ok(Self {
            params,
            state: [0.0; 4],
            disturbance: Disturbance::default(),
            episode,
            steps: 0,
            set: SafetySetF64::symmetric_box(&CART_POLE_BOUNDS)?,
        })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    /// `γ̂ = 1` iff `|x| ≥ 0.9` or `|θ| ≥ 0.8`.
    pub fn termination_flag(s: &[f64]) -> bool {
        s[0].abs() >= TERMINATION_X || s[2].abs() >= TERMINATION_THETA
    }
}

impl Environment for CartPole {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn set_state(&mut self, s: &[f64]) -> Result<()> {
        check_state(s, 4)?;
        self.state.copy_from_slice(s);
        self.steps = 0;
        Ok(())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, 1)?;
        let force = saturate(action, &[self.params.force_limit])[0];
        let friction = self.disturbance.friction;
        let p = self.params;
        self.state = rk4(&self.state, p.dt, |s| {
            p.derivative(s, force - friction * signum0(s[1]))
        });
        self.steps += 1;
        if self.state.iter().any(|x| !x.is_finite()) {
            return Err(RlError::NonFiniteState { steps: self.steps });
        }
        let violation = !self.set.contains(&self.state)?;
        let terminated = self.episode.terminate_on_violation && Self::termination_flag(&self.state);
        Ok(StepOutcome {
            state: self.state.to_vec(),
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
            reference: vec![0.0; 4],
        }
    }

    fn action_bounds(&self) -> Vec<f64> {
        vec![self.params.force_limit]
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
