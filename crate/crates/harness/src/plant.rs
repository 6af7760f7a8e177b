//! The configurable plants behind one concrete type.

use wcs_core::{LinearModelF64, SafetySetF64};
use wcs_rl::{
    CartPole, Disturbance, Environment, EpisodeConfig, LinearPlant, Quadrotor, Result, SafetySpec,
    StepOutcome,
};

#[derive(Clone, Debug)]
pub enum Plant {
    CartPole(CartPole),
    Quadrotor(Quadrotor),
    Linear(LinearPlant),
}

macro_rules! delegate {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            Plant::CartPole($p) => $e,
            Plant::Quadrotor($p) => $e,
            Plant::Linear($p) => $e,
        }
    };
}

impl Plant {
    pub fn safety_set(&self) -> SafetySetF64 {
        self.safety_spec().set
    }

    pub fn linear_model(&self) -> LinearModelF64 {
        self.linearize()
    }
}

impl Environment for Plant {
    fn name(&self) -> &'static str {
        delegate!(self, p => p.name())
    }

    fn state_dim(&self) -> usize {
        delegate!(self, p => p.state_dim())
    }

    fn action_dim(&self) -> usize {
        delegate!(self, p => p.action_dim())
    }

    fn state(&self) -> Vec<f64> {
        delegate!(self, p => p.state())
    }

    fn set_state(&mut self, s: &[f64]) -> Result<()> {
        delegate!(self, p => p.set_state(s))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        delegate!(self, p => p.step(action))
    }

    fn linearize(&self) -> LinearModelF64 {
        delegate!(self, p => p.linearize())
    }

    fn safety_spec(&self) -> SafetySpec {
        delegate!(self, p => p.safety_spec())
    }

    fn action_bounds(&self) -> Vec<f64> {
        delegate!(self, p => p.action_bounds())
    }

    fn set_disturbance(&mut self, d: Disturbance) {
        delegate!(self, p => p.set_disturbance(d))
    }

    fn episode_config(&self) -> &EpisodeConfig {
        delegate!(self, p => p.episode_config())
    }

    fn set_episode_config(&mut self, cfg: EpisodeConfig) -> Result<()> {
        delegate!(self, p => p.set_episode_config(cfg))
    }

    fn steps_taken(&self) -> usize {
        delegate!(self, p => p.steps_taken())
    }
}
