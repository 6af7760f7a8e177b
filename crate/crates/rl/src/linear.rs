//! Plant that evolves exactly by its own linear model, `s' = A·s + B·a`.
//!
//! No saturation and no mismatch: the setting in which the certificate's
//! invariance guarantee is exact.

use wcs_core::{LinearModelF64, SafetySetF64};

use crate::env::{
    check_action, check_state, Disturbance, Environment, EpisodeConfig, SafetySpec, StepOutcome,
};
use crate::error::{Result, RlError};

#[derive(Clone, Debug)]
pub struct LinearPlant {
    model: LinearModelF64,
    set: SafetySetF64,
    state: Vec<f64>,
    episode: EpisodeConfig,
    steps: usize,
}

impl LinearPlant {
    pub fn new(model: LinearModelF64, set: SafetySetF64, episode: EpisodeConfig) -> Result<Self> {
        episode.validate()?;
        if set.state_dim() != model.state_dim() {
            return Err(RlError::Dimension {
                context: "safety set",
                expected: model.state_dim(),
                actual: set.state_dim(),
            });
        }
        let n = model.state_dim();
        Ok(Self {
            model,
            set,
            state: vec![0.0; n],
            episode,
            steps: 0,
        })
    }

    pub fn model(&self) -> &LinearModelF64 {
        &self.model
    }
}

impl Environment for LinearPlant {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.model.action_dim()
    }

    fn state(&self) -> Vec<f64> {
        self.state.clone()
    }

    fn set_state(&mut self, s: &[f64]) -> Result<()> {
        check_state(s, self.state_dim())?;
        self.state.copy_from_slice(s);
        self.steps = 0;
        Ok(())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, self.action_dim())?;
        self.state = self.model.step(&self.state, action);
        self.steps += 1;
        if self.state.iter().any(|x| !x.is_finite()) {
            return Err(RlError::NonFiniteState { steps: self.steps });
        }
        let violation = !self.set.contains(&self.state)?;
        let terminated = self.episode.terminate_on_violation && violation;
        Ok(StepOutcome {
            state: self.state.clone(),
            violation,
            terminated,
            truncated: !terminated && self.steps >= self.episode.max_steps,
        })
    }

    fn linearize(&self) -> LinearModelF64 {
        self.model.clone()
    }

    fn safety_spec(&self) -> SafetySpec {
        SafetySpec {
            set: self.set.clone(),
            reference: vec![0.0; self.state_dim()],
        }
    }

    fn action_bounds(&self) -> Vec<f64> {
        vec![f64::INFINITY; self.action_dim()]
    }

    /// The exact plant has no mismatch; disturbances are ignored.
    fn set_disturbance(&mut self, _d: Disturbance) {}

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
