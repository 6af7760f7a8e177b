//! Common interface of the simulated plants.
//!
//! States exchanged through [`Environment`] are in error coordinates
//! (physical state minus the reference), the same coordinates the
//! certificate, the envelope and the safety set live in.

use rand::Rng;
use serde::{Deserialize, Serialize};
use wcs_core::{expm, LinearModelF64, MatrixF64, SafetySetF64};

use crate::error::{Result, RlError};

/// Episode bookkeeping shared by all plants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_true")]
    pub terminate_on_violation: bool,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
}

fn default_max_steps() -> usize {
    500
}

fn default_true() -> bool {
    true
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: default_max_steps(),
            terminate_on_violation: true,
            disturbance: DisturbanceSpec::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(RlError::Config("max_steps must be at least 1".into()));
        }
        self.disturbance.validate()
    }
}

/// Per-episode model mismatch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    #[default]
    None,
    /// Velocity-opposing force with magnitude uniform in `[0, f_max]`,
    /// drawn once per episode.
    UniformFriction { f_max: f64 },
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisturbanceSpec::None => Ok(()),
            DisturbanceSpec::UniformFriction { f_max } if f_max >= 0.0 && f_max.is_finite() => Ok(()),
            DisturbanceSpec::UniformFriction { f_max } => Err(RlError::Config(format!(
                "friction bound must be finite and >= 0, got {f_max}"
            ))),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Disturbance {
        match *self {
            DisturbanceSpec::None => Disturbance::default(),
            DisturbanceSpec::UniformFriction { f_max } => Disturbance {
                friction: if f_max > 0.0 {
                    rng.gen_range(0.0..=f_max)
                } else {
                    0.0
                },
            },
        }
    }
}

/// One draw of the disturbance, held fixed for an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Coulomb friction magnitude (N) on the translational velocity.
    pub friction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    /// The state left the safety set.
    pub violation: bool,
    /// The episode stops here and the state is terminal.
    pub terminated: bool,
    /// The step budget ran out; the state is not terminal.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Safety set in error coordinates plus the physical reference it is centred on.
#[derive(Clone, Debug)]
pub struct SafetySpec {
    pub set: SafetySetF64,
    pub reference: Vec<f64>,
}

pub trait Environment {
    fn name(&self) -> &'static str;

    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Current state in error coordinates.
    fn state(&self) -> Vec<f64>;

    /// Places the plant exactly at `s` and resets the step counter.
    fn set_state(&mut self, s: &[f64]) -> Result<()>;

    /// Advances one timestep. The action is saturated before integration.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;

    /// Discretized Jacobian linearization about the reference.
    fn linearize(&self) -> LinearModelF64;

    fn safety_spec(&self) -> SafetySpec;

    /// Symmetric actuator limits, one per action component.
    fn action_bounds(&self) -> Vec<f64>;

    fn set_disturbance(&mut self, d: Disturbance);

    fn episode_config(&self) -> &EpisodeConfig;

    fn set_episode_config(&mut self, cfg: EpisodeConfig) -> Result<()>;

    fn steps_taken(&self) -> usize;
}

/// Fixed-step classic Runge-Kutta.
pub(crate) fn rk4<const N: usize>(x: &[f64; N], dt: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let shifted = |base: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] {
        let mut out = *base;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(x);
    let k2 = f(&shifted(x, &k1, 0.5 * dt));
    let k3 = f(&shifted(x, &k2, 0.5 * dt));
    let k4 = f(&shifted(x, &k3, dt));
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

pub(crate) fn saturate(action: &[f64], bounds: &[f64]) -> Vec<f64> {
    action.iter().zip(bounds).map(|(&a, &b)| a.clamp(-b, b)).collect()
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(RlError::Dimension {
            context: "action",
            expected: dim,
            actual: action.len(),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(RlError::NonFiniteAction);
    }
    Ok(())
}

pub(crate) fn check_state(s: &[f64], dim: usize) -> Result<()> {
    if s.len() != dim {
        return Err(RlError::Dimension {
            context: "state",
            expected: dim,
            actual: s.len(),
        });
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(RlError::Config("state must be finite".into()));
    }
    Ok(())
}

/// Zero-order-hold discretization `[A B; 0 I] = exp([Ac Bc; 0 0]·dt)`.
pub fn discretize(ac: &MatrixF64, bc: &MatrixF64, dt: f64) -> LinearModelF64 {
    let n = ac.rows();
    let m = bc.cols();
    let aug = MatrixF64::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
        (true, true) => ac[(i, j)] * dt,
        (true, false) => bc[(i, j - n)] * dt,
        _ => 0.0,
    });
    let e = expm(&aug);
    LinearModelF64::new(e.block(0, 0, n, n), e.block(0, n, n, m)).expect("finite discretization")
}

/// Sign with `sign(0) = 0`, so the equilibrium stays a fixed point under friction.
pub(crate) fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rk4_integrates_exponential() {
        let mut x = [1.0];
        for _ in 0..100 {
            x = rk4(&x, 0.01, |y| [-y[0]]);
        }
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn friction_draws_stay_in_range() {
        let spec = DisturbanceSpec::UniformFriction { f_max: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let d = spec.draw(&mut rng);
            assert!((0.0..=1.0).contains(&d.friction));
        }
        assert_eq!(DisturbanceSpec::None.draw(&mut rng), Disturbance::default());
        assert!(DisturbanceSpec::UniformFriction { f_max: -1.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn episode_config_rejects_zero_steps() {
        let cfg = EpisodeConfig {
            max_steps: 0,
            ..EpisodeConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
