//! Training loops: the periodic worst-case curriculum and the uniform random
//! baseline, each with or without episode termination.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use wcs_core::{random_initial_condition, residual_action, safety_reward, CertificateF64, WorstCaseGridF64};

use crate::agent::{Learner, Policy};
use crate::env::{Environment, EpisodeConfig};
use crate::error::{Result, RlError};
use crate::replay::Transition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    WorstCase,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub kind: SamplingKind,
    pub termination: bool,
}

impl SamplingScheme {
    pub const ALL: [SamplingScheme; 4] = [
        SamplingScheme {
            kind: SamplingKind::WorstCase,
            termination: true,
        },
        SamplingScheme {
            kind: SamplingKind::Random,
            termination: true,
        },
        SamplingScheme {
            kind: SamplingKind::WorstCase,
            termination: false,
        },
        SamplingScheme {
            kind: SamplingKind::Random,
            termination: false,
        },
    ];

    pub fn name(&self) -> &'static str {
        match (self.kind, self.termination) {
            (SamplingKind::WorstCase, true) => "worst-case",
            (SamplingKind::Random, true) => "random",
            (SamplingKind::WorstCase, false) => "worst-case-w.t.",
            (SamplingKind::Random, false) => "random-w.t.",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    /// Curriculum period, `0` for the random baseline.
    pub period: usize,
    pub initial_state: Vec<f64>,
    pub steps: usize,
    /// The state left the safety set at some step.
    pub failed: bool,
    pub terminated: bool,
    pub episodic_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: SamplingScheme,
    pub seed: u64,
    pub config_hash: String,
    pub episodes: Vec<EpisodeRecord>,
}

impl RunRecord {
    pub fn failed_episodes(&self) -> usize {
        self.episodes.iter().filter(|e| e.failed).count()
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.steps).sum()
    }

    /// One row per episode: `index,period,steps,failed,terminated,return,s0_1..s0_n`.
    pub fn write_episodes_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.episodes.first().map_or(0, |e| e.initial_state.len());
        write!(w, "index,period,steps,failed,terminated,return")?;
        for i in 1..=n {
            write!(w, ",s0_{i}")?;
        }
        writeln!(w)?;
        for e in &self.episodes {
            write!(
                w,
                "{},{},{},{},{},{:e}",
                e.index, e.period, e.steps, e.failed as u8, e.terminated as u8, e.episodic_return
            )?;
            for x in &e.initial_state {
                write!(w, ",{x:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Failed episodes over total episodes.
pub fn failure_rate(record: &RunRecord) -> f64 {
    if record.episodes.is_empty() {
        return 0.0;
    }
    record.failed_episodes() as f64 / record.episodes.len() as f64
}

/// Options shared by both training loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub episode: EpisodeConfig,
    /// Constant `w` added to every reward.
    pub reward_offset: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            reward_offset: 0.0,
            seed: 0,
            config_hash: String::new(),
        }
    }
}

fn check_dims<E: Environment + ?Sized>(env: &E, cert: &CertificateF64, n: usize) -> Result<()> {
    for (context, actual) in [
        ("environment state", env.state_dim()),
        ("certificate state", cert.state_dim()),
    ] {
        if actual != n {
            return Err(RlError::Dimension {
                context,
                expected: n,
                actual,
            });
        }
    }
    if env.action_dim() != cert.action_dim() {
        return Err(RlError::Dimension {
            context: "certificate action",
            expected: env.action_dim(),
            actual: cert.action_dim(),
        });
    }
    Ok(())
}

/// Rolls one training episode from `s0` with the residual policy and the
/// safety-embedded reward, updating the learner online.
#[allow(clippy::too_many_arguments)]
fn train_episode<E, L, R>(
    env: &mut E,
    agent: &mut L,
    cert: &CertificateF64,
    s0: &[f64],
    opts: &TrainOptions,
    disturbance_rng: &mut R,
    index: usize,
    period: usize,
    total: usize,
) -> Result<EpisodeRecord>
where
    E: Environment + ?Sized,
    L: Learner + ?Sized,
    R: Rng + ?Sized,
{
    env.set_state(s0)?;
    env.set_disturbance(opts.episode.disturbance.draw(disturbance_rng));
    agent.begin_episode(index, total);
    let set = env.safety_spec().set;
    let mut failed = !set.contains(s0)?;
    let mut ret = 0.0;
    let mut s = s0.to_vec();
    loop {
        let a_drl = agent.act(&s, true);
        let a = residual_action(cert, &s, &a_drl)?;
        let out = env.step(&a)?;
        let r = safety_reward(cert, &s, &out.state, opts.reward_offset);
        failed |= out.violation;
        ret += r;
        agent.observe(&Transition {
            state: s,
            action: a_drl,
            reward: r,
            next_state: out.state.clone(),
            done: out.terminated,
        })?;
        let done = out.done();
        s = out.state;
        if done {
            return Ok(EpisodeRecord {
                index,
                period,
                initial_state: s0.to_vec(),
                steps: env.steps_taken(),
                failed,
                terminated: out.terminated,
                episodic_return: ret,
            });
        }
    }
}

/// Every period walks the grid in generation order, one episode per point.
pub fn run_curriculum<E, L>(
    env: &mut E,
    agent: &mut L,
    cert: &CertificateF64,
    grid: &WorstCaseGridF64,
    opts: &TrainOptions,
) -> Result<RunRecord>
where
    E: Environment + ?Sized,
    L: Learner + ?Sized,
{
    check_dims(env, cert, grid.envelope().dim())?;
    env.set_episode_config(opts.episode.clone())?;
    let mut dist_rng = crate::rng::stream_rng(opts.seed, crate::rng::DISTURBANCE_STREAM);
    let total = grid.len() * grid.spec().period;
    let mut episodes = Vec::with_capacity(total);
    for (k, (period, _, s0)) in grid.curriculum().enumerate() {
        episodes.push(train_episode(
            env,
            agent,
            cert,
            s0,
            opts,
            &mut dist_rng,
            k,
            period,
            total,
        )?);
    }
    Ok(RunRecord {
        scheme: SamplingScheme {
            kind: SamplingKind::WorstCase,
            termination: opts.episode.terminate_on_violation,
        },
        seed: opts.seed,
        config_hash: opts.config_hash.clone(),
        episodes,
    })
}

/// Same loop with initial states uniform over `intervals`.
pub fn run_random_baseline<E, L>(
    env: &mut E,
    agent: &mut L,
    cert: &CertificateF64,
    intervals: &[(f64, f64)],
    n_episodes: usize,
    opts: &TrainOptions,
) -> Result<RunRecord>
where
    E: Environment + ?Sized,
    L: Learner + ?Sized,
{
    if n_episodes == 0 {
        return Err(RlError::Config(
            "random baseline needs at least one episode".into(),
        ));
    }
    check_dims(env, cert, intervals.len())?;
    env.set_episode_config(opts.episode.clone())?;
    let mut init_rng = crate::rng::stream_rng(opts.seed, crate::rng::INITIAL_STATE_STREAM);
    let mut dist_rng = crate::rng::stream_rng(opts.seed, crate::rng::DISTURBANCE_STREAM);
    let mut episodes = Vec::with_capacity(n_episodes);
    for k in 0..n_episodes {
        let s0 = random_initial_condition(intervals, &mut init_rng)?;
        episodes.push(train_episode(
            env,
            agent,
            cert,
            &s0,
            opts,
            &mut dist_rng,
            k,
            0,
            n_episodes,
        )?);
    }
    Ok(RunRecord {
        scheme: SamplingScheme {
            kind: SamplingKind::Random,
            termination: opts.episode.terminate_on_violation,
        },
        seed: opts.seed,
        config_hash: opts.config_hash.clone(),
        episodes,
    })
}

/// One step of a frozen-policy rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub violation: bool,
}

/// Rolls `policy` (plus the certificate feedback) for at most `horizon` steps,
/// stopping early only on termination.
pub fn rollout<E, P>(
    env: &mut E,
    policy: &P,
    cert: &CertificateF64,
    s0: &[f64],
    horizon: usize,
) -> Result<Vec<TrajectoryStep>>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    env.set_state(s0)?;
    let mut s = s0.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let a = residual_action(cert, &s, &policy.act(&s))?;
        let o = env.step(&a)?;
        let r = safety_reward(cert, &s, &o.state, 0.0);
        out.push(TrajectoryStep {
            step: k + 1,
            state: o.state.clone(),
            action: a,
            reward: r,
            violation: o.violation,
        });
        s = o.state;
        if o.terminated {
            break;
        }
    }
    Ok(out)
}

/// `step,s1..sn,a1..am,reward,violation`.
pub fn write_trajectory_csv<W: Write>(traj: &[TrajectoryStep], mut w: W) -> io::Result<()> {
    let (n, m) = traj.first().map_or((0, 0), |t| (t.state.len(), t.action.len()));
    write!(w, "step")?;
    for i in 1..=n {
        write!(w, ",s{i}")?;
    }
    for i in 1..=m {
        write!(w, ",a{i}")?;
    }
    writeln!(w, ",reward,violation")?;
    for t in traj {
        write!(w, "{}", t.step)?;
        for x in t.state.iter().chain(&t.action) {
            write!(w, ",{x:e}")?;
        }
        writeln!(w, ",{:e},{}", t.reward, t.violation as u8)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ZeroPolicy;
    use crate::linear::LinearPlant;
    use wcs_core::{
        generate_grid, synthesize, AngleGridSpec, LinearModelF64, MatrixF64, SafetySetF64,
        SymmetricMatrixF64, SynthesisSpec,
    };

    fn linear_setup(terminate: bool) -> (LinearPlant, CertificateF64) {
        let model = LinearModelF64::new(
            MatrixF64::from_rows(&[[1.0, 0.05], [0.0, 1.0]]).unwrap(),
            MatrixF64::from_rows(&[[0.00125], [0.05]]).unwrap(),
        )
        .unwrap();
        let set = SafetySetF64::symmetric_box(&[1.0, 2.0]).unwrap();
        let cert = synthesize(
            &model,
            &SynthesisSpec {
                state_weight: SymmetricMatrixF64::identity(2),
                input_weight: SymmetricMatrixF64::from_diag(&[1.0]),
                alpha: 0.9,
                stability_radius: None,
            },
            &set,
        )
        .unwrap();
        let cfg = EpisodeConfig {
            max_steps: 50,
            terminate_on_violation: terminate,
            ..EpisodeConfig::default()
        };
        (LinearPlant::new(model, set, cfg).unwrap(), cert)
    }

    #[test]
    fn no_op_agent_on_exact_plant_never_fails() {
        let (mut env, cert) = linear_setup(true);
        let grid = generate_grid(
            &cert.envelope(1.0).unwrap(),
            &AngleGridSpec::uniform(2, 8, 2).unwrap(),
        )
        .unwrap();
        let opts = TrainOptions {
            episode: env.episode_config().clone(),
            ..TrainOptions::default()
        };
        let rec = run_curriculum(&mut env, &mut ZeroPolicy { action_dim: 1 }, &cert, &grid, &opts).unwrap();
        assert_eq!(rec.episodes.len(), 16);
        assert_eq!(failure_rate(&rec), 0.0);
        for (k, (_, i, s0)) in grid.curriculum().enumerate() {
            assert_eq!(rec.episodes[k].initial_state.as_slice(), s0);
            assert_eq!(rec.episodes[k].initial_state, grid.points()[i]);
        }
    }

    #[test]
    fn single_point_curriculum() {
        let (mut env, cert) = linear_setup(true);
        let env_ = cert.envelope(1.0).unwrap();
        let grid = generate_grid(&env_, &AngleGridSpec::new(2, vec![1], 1.0, 1).unwrap()).unwrap();
        let opts = TrainOptions {
            episode: env.episode_config().clone(),
            ..TrainOptions::default()
        };
        let rec = run_curriculum(&mut env, &mut ZeroPolicy { action_dim: 1 }, &cert, &grid, &opts).unwrap();
        assert_eq!(rec.episodes.len(), 1);
        assert_eq!(rec.episodes[0].initial_state, grid.points()[0]);
    }

    #[test]
    fn without_termination_every_episode_runs_full_length() {
        let (mut env, cert) = linear_setup(false);
        let opts = TrainOptions {
            episode: env.episode_config().clone(),
            ..TrainOptions::default()
        };
        let rec = run_random_baseline(
            &mut env,
            &mut ZeroPolicy { action_dim: 1 },
            &cert,
            &[(-1.0, 1.0), (-2.0, 2.0)],
            30,
            &opts,
        )
        .unwrap();
        assert_eq!(rec.episodes.len(), 30);
        assert!(rec.episodes.iter().all(|e| e.steps == 50));
    }

    #[test]
    fn degenerate_intervals_start_at_origin() {
        let (mut env, cert) = linear_setup(true);
        let opts = TrainOptions {
            episode: env.episode_config().clone(),
            ..TrainOptions::default()
        };
        let rec = run_random_baseline(
            &mut env,
            &mut ZeroPolicy { action_dim: 1 },
            &cert,
            &[(0.0, 0.0), (0.0, 0.0)],
            5,
            &opts,
        )
        .unwrap();
        assert!(rec
            .episodes
            .iter()
            .all(|e| e.initial_state == vec![0.0, 0.0] && !e.failed));
    }

    #[test]
    fn random_initial_states_replay_with_seed() {
        let run = |seed| {
            let (mut env, cert) = linear_setup(true);
            let opts = TrainOptions {
                episode: env.episode_config().clone(),
                seed,
                ..TrainOptions::default()
            };
            run_random_baseline(
                &mut env,
                &mut ZeroPolicy { action_dim: 1 },
                &cert,
                &[(-1.0, 1.0), (-2.0, 2.0)],
                10,
                &opts,
            )
            .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3).episodes[0].initial_state, run(4).episodes[0].initial_state);
    }

    #[test]
    fn failure_rate_examples() {
        let rec = |failed: usize, total: usize| RunRecord {
            scheme: SamplingScheme::ALL[0],
            seed: 0,
            config_hash: String::new(),
            episodes: (0..total)
                .map(|i| EpisodeRecord {
                    index: i,
                    period: 0,
                    initial_state: vec![],
                    steps: 1,
                    failed: i < failed,
                    terminated: false,
                    episodic_return: 0.0,
                })
                .collect(),
        };
        assert!((failure_rate(&rec(3, 30)) - 0.10).abs() < 1e-15);
        assert_eq!(failure_rate(&rec(0, 30)), 0.0);
        assert_eq!(failure_rate(&rec(30, 30)), 1.0);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SamplingScheme::ALL {
            assert_eq!(SamplingScheme::parse(s.name()), Some(s));
        }
    }

    #[test]
    fn episode_csv_has_one_row_per_episode() {
        let (mut env, cert) = linear_setup(true);
        let opts = TrainOptions {
            episode: env.episode_config().clone(),
            ..TrainOptions::default()
        };
        let rec = run_random_baseline(
            &mut env,
            &mut ZeroPolicy { action_dim: 1 },
            &cert,
            &[(-0.1, 0.1), (0.0, 0.0)],
            4,
            &opts,
        )
        .unwrap();
        let mut buf = Vec::new();
        rec.write_episodes_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("index,period,steps,failed,terminated,return,s0_1,s0_2"));
    }
}
