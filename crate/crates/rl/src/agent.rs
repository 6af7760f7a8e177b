//! Deterministic policy-gradient actor-critic producing the learned action term.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RlError};
use crate::nn::{Adam, Grads, Mlp, OutputActivation, Tape};
use crate::replay::{Batch, ReplayBuffer, Transition};
use crate::rng::{stream_rng, AGENT_STREAM};

pub const CHECKPOINT_VERSION: u32 = 1;
const CRITIC_FINAL_INIT: f64 = 3e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub discount: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Exploration std as a fraction of the action bound, first episode.
    pub noise_start: f64,
    /// Same, last episode; interpolated linearly in between.
    pub noise_end: f64,
    /// Bound on the learned action term; the plant's actuator limits when absent.
    pub action_bound: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            discount: 0.99,
            tau: 0.005,
            batch_size: 64,
            buffer_capacity: 100_000,
            noise_start: 0.3,
            noise_end: 0.0,
            action_bound: None,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RlError::Config(msg));
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount must lie in (0, 1], got {}", self.discount));
        }
        if !(self.tau >= 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return bad("exploration noise must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub mean_q: f64,
}

/// Frozen map from error-coordinate state to the learned action term.
pub trait Policy: Sync {
    fn action_dim(&self) -> usize;

    fn act(&self, s: &[f64]) -> Vec<f64>;
}

/// Online learner driven by the training curriculum.
pub trait Learner {
    fn action_dim(&self) -> usize;

    /// Called before episode `index` of `total`.
    fn begin_episode(&mut self, index: usize, total: usize);

    fn act(&mut self, s: &[f64], explore: bool) -> Vec<f64>;

    /// Stores the transition and performs at most one update.
    fn observe(&mut self, t: &Transition) -> Result<Option<UpdateStats>>;
}

/// Learned term identically zero: the residual policy reduces to `F·s`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroPolicy {
    pub action_dim: usize,
}

impl Policy for ZeroPolicy {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act(&self, _s: &[f64]) -> Vec<f64> {
        vec![0.0; self.action_dim]
    }
}

impl Learner for ZeroPolicy {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn begin_episode(&mut self, _index: usize, _total: usize) {}

    fn act(&mut self, _s: &[f64], _explore: bool) -> Vec<f64> {
        vec![0.0; self.action_dim]
    }

    fn observe(&mut self, _t: &Transition) -> Result<Option<UpdateStats>> {
        Ok(None)
    }
}

/// Deterministic actor detached from training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenActor {
    pub actor: Mlp,
    pub obs_scale: Vec<f64>,
}

impl FrozenActor {
    fn observe_into(&self, s: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(s.iter().zip(&self.obs_scale).map(|(x, k)| x / k));
    }
}

impl Policy for FrozenActor {
    fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    fn act(&self, s: &[f64]) -> Vec<f64> {
        let mut obs = Vec::with_capacity(s.len());
        self.observe_into(s, &mut obs);
        self.actor.forward(&obs, 1)
    }
}

#[derive(Clone, Debug)]
pub struct DdpgAgent {
    cfg: AgentConfig,
    action_bound: Vec<f64>,
    policy: FrozenActor,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    sigma: f64,
    updates: u64,
    scratch: Scratch,
}

#[derive(Clone, Debug, Default)]
struct Scratch {
    batch: Batch,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    critic_in: Vec<f64>,
    targets: Vec<f64>,
    actor_tape: Tape,
    critic_tape: Tape,
    target_tape: Tape,
}

impl DdpgAgent {
    /// `obs_scale` divides each state component before it reaches a network;
    /// `default_bound` is used when the config does not fix the action bound.
    pub fn new(cfg: AgentConfig, obs_scale: Vec<f64>, default_bound: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let action_bound = cfg.action_bound.clone().unwrap_or(default_bound);
        if action_bound.is_empty() || action_bound.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(RlError::Config(format!(
                "action bound must be finite and positive, got {action_bound:?}"
            )));
        }
        if obs_scale.is_empty() || obs_scale.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(RlError::Config(format!(
                "observation scale must be finite and positive, got {obs_scale:?}"
            )));
        }
        let n = obs_scale.len();
        let m = action_bound.len();
        let mut rng = stream_rng(cfg.seed, AGENT_STREAM);
        let mut actor_sizes = vec![n];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(m);
        let mut critic_sizes = vec![n + m];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(
            &actor_sizes,
            OutputActivation::Tanh {
                scale: action_bound.clone(),
            },
            0.0,
            &mut rng,
        )?;
        let critic = Mlp::new(
            &critic_sizes,
            OutputActivation::Identity,
            CRITIC_FINAL_INIT,
            &mut rng,
        )?;
        Ok(Self {
            actor_opt: Adam::new(&actor, cfg.actor_lr),
            critic_opt: Adam::new(&critic, cfg.critic_lr),
            buffer: ReplayBuffer::new(cfg.buffer_capacity, n, m),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            policy: FrozenActor { actor, obs_scale },
            critic,
            action_bound,
            sigma: cfg.noise_start,
            cfg,
            rng,
            updates: 0,
            scratch: Scratch::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn action_bound(&self) -> &[f64] {
        &self.action_bound
    }

    pub fn actor(&self) -> &Mlp {
        &self.policy.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn frozen(&self) -> FrozenActor {
        self.policy.clone()
    }

    fn state_dim(&self) -> usize {
        self.policy.obs_scale.len()
    }

    fn scale_obs(obs_scale: &[f64], states: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let n = obs_scale.len();
        for row in states.chunks_exact(n) {
            out.extend(row.iter().zip(obs_scale).map(|(x, k)| x / k));
        }
    }

    /// Rows of `[obs | action / bound]`.
    fn critic_input(obs: &[f64], actions: &[f64], bound: &[f64], n: usize, out: &mut Vec<f64>) {
        let m = bound.len();
        out.clear();
        for (o, a) in obs.chunks_exact(n).zip(actions.chunks_exact(m)) {
            out.extend_from_slice(o);
            out.extend(a.iter().zip(bound).map(|(a, b)| a / b));
        }
    }

    /// One critic regression, one actor ascent step and a soft target update.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let n = self.state_dim();
        let m = self.action_bound.len();
        let bsz = self.cfg.batch_size;
        let gamma = self.cfg.discount;
        let s = &mut self.scratch;
        self.buffer.sample_into(bsz, &mut self.rng, &mut s.batch);
        Self::scale_obs(&self.policy.obs_scale, &s.batch.states, &mut s.obs);
        Self::scale_obs(&self.policy.obs_scale, &s.batch.next_states, &mut s.next_obs);

        self.actor_target
            .forward_tape(&s.next_obs, bsz, &mut s.target_tape);
        let next_actions = s.target_tape.output().to_vec();
        Self::critic_input(
            &s.next_obs,
            &next_actions,
            &self.action_bound,
            n,
            &mut s.critic_in,
        );
        self.critic_target
            .forward_tape(&s.critic_in, bsz, &mut s.target_tape);
        s.targets.clear();
        for (i, &q_next) in s.target_tape.output().iter().enumerate() {
            s.targets
                .push(s.batch.rewards[i] + gamma * (1.0 - s.batch.dones[i]) * q_next);
        }

        Self::critic_input(&s.obs, &s.batch.actions, &self.action_bound, n, &mut s.critic_in);
        self.critic.forward_tape(&s.critic_in, bsz, &mut s.critic_tape);
        let q = s.critic_tape.output();
        let mut loss = 0.0;
        let mut mean_q = 0.0;
        let mut d_q = Vec::with_capacity(bsz);
        for (qi, yi) in q.iter().zip(&s.targets) {
            let r = qi - yi;
            loss += r * r;
            mean_q += qi;
            d_q.push(2.0 * r / bsz as f64);
        }
        loss /= bsz as f64;
        mean_q /= bsz as f64;
        if !loss.is_finite() {
            return Err(RlError::NonFiniteLoss { what: "critic loss" });
        }
        let mut critic_grads = self.critic.zero_grads();
        self.critic
            .backward(&s.critic_tape, &d_q, Some(&mut critic_grads));
        self.critic_opt.step(&mut self.critic, &critic_grads);

        self.policy.actor.forward_tape(&s.obs, bsz, &mut s.actor_tape);
        let actions = s.actor_tape.output().to_vec();
        Self::critic_input(&s.obs, &actions, &self.action_bound, n, &mut s.critic_in);
        self.critic.forward_tape(&s.critic_in, bsz, &mut s.critic_tape);
        let d_ascent = vec![-1.0 / bsz as f64; bsz];
        let d_in = self.critic.backward(&s.critic_tape, &d_ascent, None);
        let mut d_action = Vec::with_capacity(bsz * m);
        for row in d_in.chunks_exact(n + m) {
            d_action.extend(row[n..].iter().zip(&self.action_bound).map(|(d, b)| d / b));
        }
        let mut actor_grads: Grads = self.policy.actor.zero_grads();
        self.policy
            .actor
            .backward(&s.actor_tape, &d_action, Some(&mut actor_grads));
        self.actor_opt.step(&mut self.policy.actor, &actor_grads);

        self.critic
            .soft_update_into(&mut self.critic_target, self.cfg.tau);
        self.policy
            .actor
            .soft_update_into(&mut self.actor_target, self.cfg.tau);
        if !self.policy.actor.is_finite() || !self.critic.is_finite() {
            return Err(RlError::NonFiniteLoss {
                what: "network weights",
            });
        }
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss: loss,
            mean_q,
        })
    }

    pub fn checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            config: self.cfg.clone(),
            action_bound: self.action_bound.clone(),
            policy: self.policy.clone(),
            critic: self.critic.clone(),
            actor_target: self.actor_target.clone(),
            critic_target: self.critic_target.clone(),
            updates: self.updates,
        }
    }
}

impl Learner for DdpgAgent {
    fn action_dim(&self) -> usize {
        self.action_bound.len()
    }

    fn begin_episode(&mut self, index: usize, total: usize) {
        let frac = if total > 1 {
            (index as f64 / (total - 1) as f64).min(1.0)
        } else {
            0.0
        };
        self.sigma = self.cfg.noise_start + (self.cfg.noise_end - self.cfg.noise_start) * frac;
    }

    fn act(&mut self, s: &[f64], explore: bool) -> Vec<f64> {
        let mut a = self.policy.act(s);
        if explore && self.sigma > 0.0 {
            for (ai, &b) in a.iter_mut().zip(&self.action_bound) {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *ai = (*ai + self.sigma * b * z).clamp(-b, b);
            }
        }
        a
    }

    fn observe(&mut self, t: &Transition) -> Result<Option<UpdateStats>> {
        self.buffer.push(t);
        if self.buffer.len() >= self.cfg.batch_size {
            self.update().map(Some)
        } else {
            Ok(None)
        }
    }
}

impl Policy for DdpgAgent {
    fn action_dim(&self) -> usize {
        self.action_bound.len()
    }

    fn act(&self, s: &[f64]) -> Vec<f64> {
        self.policy.act(s)
    }
}

/// Versioned dump of all network weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: AgentConfig,
    pub action_bound: Vec<f64>,
    pub policy: FrozenActor,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub updates: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| RlError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| RlError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(RlError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use rand::{Rng, SeedableRng};

    fn agent(cfg: AgentConfig) -> DdpgAgent {
        DdpgAgent::new(cfg, vec![0.9, 3.0, 0.8, 4.5], vec![15.0]).unwrap()
    }

    fn synthetic(k: usize) -> Transition {
        let x = (k as f64 * 0.37).sin();
        Transition {
            state: vec![x, 0.5 * x, -x, 0.1],
            action: vec![3.0 * x],
            reward: x * x - 0.2,
            next_state: vec![0.9 * x, 0.4 * x, -0.8 * x, 0.05],
            done: k.is_multiple_of(17),
        }
    }

    #[test]
    fn fresh_actor_outputs_zero() {
        let a = agent(AgentConfig::default());
        assert_eq!(Policy::act(&a, &[0.3, -1.0, 0.2, 2.0]), vec![0.0]);
    }

    #[test]
    fn deterministic_action_is_repeatable_and_bounded() {
        let mut a = agent(AgentConfig {
            batch_size: 8,
            ..AgentConfig::default()
        });
        for k in 0..200 {
            a.observe(&synthetic(k)).unwrap();
        }
        let s = [0.2, 0.1, -0.3, 0.4];
        assert_eq!(Learner::act(&mut a, &s, false), Learner::act(&mut a, &s, false));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-50.0..50.0)).collect();
            assert!(Policy::act(&a, &s)[0].abs() <= 15.0);
            assert!(Learner::act(&mut a, &s, true)[0].abs() <= 15.0);
        }
    }

    #[test]
    fn tau_one_copies_online_weights() {
        let mut a = agent(AgentConfig {
            batch_size: 4,
            tau: 1.0,
            ..AgentConfig::default()
        });
        for k in 0..4 {
            a.observe(&synthetic(k)).unwrap();
        }
        assert_eq!(a.updates(), 1);
        assert_eq!(a.actor_target(), a.actor());
        assert_eq!(a.critic_target(), a.critic());
    }

    #[test]
    fn tau_zero_freezes_targets() {
        let mut a = agent(AgentConfig {
            batch_size: 4,
            tau: 0.0,
            ..AgentConfig::default()
        });
        let (t_actor, t_critic) = (a.actor_target().clone(), a.critic_target().clone());
        for k in 0..20 {
            a.observe(&synthetic(k)).unwrap();
        }
        assert_ne!(a.critic(), &t_critic);
        assert_eq!(a.actor_target(), &t_actor);
        assert_eq!(a.critic_target(), &t_critic);
    }

    #[test]
    fn fixed_seed_replays_bit_identically() {
        let run = || {
            let mut a = agent(AgentConfig {
                batch_size: 16,
                seed: 42,
                ..AgentConfig::default()
            });
            for k in 0..115 {
                a.observe(&synthetic(k)).unwrap();
                Learner::act(&mut a, &synthetic(k).state, true);
            }
            assert_eq!(a.updates(), 100);
            (a.actor().clone(), a.critic().clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn critic_learns_constant_reward() {
        let mut a = agent(AgentConfig {
            batch_size: 32,
            discount: 0.5,
            tau: 0.05,
            ..AgentConfig::default()
        });
        for k in 0..3000 {
            let mut t = synthetic(k);
            t.reward = 1.0;
            t.done = false;
            a.observe(&t).unwrap();
        }
        // Fixed point of q = 1 + 0.5·q.
        let q = a.critic().forward(&[0.0, 0.0, 0.0, 0.0, 0.0], 1)[0];
        assert!((q - 2.0).abs() < 0.2, "q = {q}");
    }

    #[test]
    fn default_shapes_pass_gradient_check() {
        let a = agent(AgentConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let quad = |y: &[f64]| (0.5 * y.iter().map(|v| v * v).sum::<f64>(), y.to_vec());
        // Random weights in the final layer so the actor gradient is not trivially zero.
        let mut actor = a.actor().clone();
        let last = actor.layers.len() - 1;
        actor.layers[last]
            .w
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-0.1..0.1));
        let x: Vec<f64> = (0..4 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(gradient_check(&actor, &x, 4, &quad).max_rel_error <= 1e-4);
        let xc: Vec<f64> = (0..4 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(gradient_check(a.critic(), &xc, 4, &quad).max_rel_error <= 1e-4);
    }

    #[test]
    fn checkpoint_round_trips() {
        let a = agent(AgentConfig::default());
        let dir = std::env::temp_dir().join(format!("wcs-ck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("agent.json");
        let ck = a.checkpoint("abc");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            AgentConfig {
                discount: 0.0,
                ..AgentConfig::default()
            },
            AgentConfig {
                tau: 1.5,
                ..AgentConfig::default()
            },
            AgentConfig {
                batch_size: 0,
                ..AgentConfig::default()
            },
        ] {
            assert!(DdpgAgent::new(cfg, vec![1.0], vec![1.0]).is_err());
        }
    }
}
