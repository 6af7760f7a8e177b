//! Run configuration: one TOML file with nested sections.
//!
//! Matrices are row-major nested arrays. [`RunConfig::effective`] fills in
//! every default so the emitted copy describes the run completely, and
//! [`RunConfig::hash`] fingerprints that copy.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wcs_core::{
    build_certificate, envelope_contained_in_set, episode_count, synthesize, AngleGridSpec, CertificateF64,
    LinearModelF64, MatrixF64, SafetySetF64, SymmetricMatrixF64, SynthesisSpec,
};
use wcs_rl::{
    AgentConfig, CartPoleParams, DisturbanceSpec, Environment, EpisodeConfig, QuadrotorParams, SamplingScheme,
};

use crate::error::{HarnessError, Result};
use crate::plant::Plant;

pub const CONFIG_VERSION: u32 = 1;
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WCS_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "config_version")]
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub synthesis: SynthesisConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn config_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    CartPole {
        #[serde(default)]
        params: CartPoleParams,
    },
    Quadrotor {
        #[serde(default)]
        params: QuadrotorParams,
    },
    /// Exact linear plant `s' = A·s + B·a` on the set `|D·s| ≤ bounds`.
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        bounds: Vec<f64>,
        /// Constraint rows `D`; the identity when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<Vec<Vec<f64>>>,
    },
}

/// Either weights for the LQR design or an explicit `(F, P)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_weight: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_weight: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_gain: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// `worst-case`, `random`, `worst-case-w.t.` or `random-w.t.`.
    pub scheme: String,
    /// Number of curriculum periods `p`.
    pub period: usize,
    /// `q_1..q_{n-1}`.
    pub q: Vec<usize>,
    #[serde(default = "one")]
    pub phi: f64,
    /// Random-baseline intervals; the safety bounds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
    /// Random-baseline episode count; the worst-case count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
}

fn default_alpha() -> f64 {
    0.8
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_steps: usize,
    pub disturbance: DisturbanceSpec,
    /// Constant `w` added to every reward.
    pub reward_offset: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_steps: 500,
            disturbance: DisturbanceSpec::None,
            reward_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// State indices spanning the swept plane.
    pub plane: [usize; 2],
    /// Probes per axis.
    pub resolution: usize,
    /// Finite stand-in for "all future steps".
    pub horizon: usize,
    /// Drawn independently per probe.
    pub disturbance: DisturbanceSpec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            plane: [0, 1],
            resolution: 41,
            horizon: 500,
            disturbance: DisturbanceSpec::UniformFriction { f_max: 1.0 },
        }
    }
}

fn matrix(key: &str, rows: &[Vec<f64>]) -> Result<MatrixF64> {
    MatrixF64::from_rows(rows).map_err(|e| HarnessError::config(key, e.to_string()))
}

fn symmetric(key: &str, rows: &[Vec<f64>]) -> Result<SymmetricMatrixF64> {
    SymmetricMatrixF64::new(matrix(key, rows)?).map_err(|e| HarnessError::config(key, e.to_string()))
}

fn check_len(key: &str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(HarnessError::config(
            key,
            format!("expected dimension {expected}, got {actual}"),
        ))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Copy with every implicit default written out, validated.
    pub fn effective(&self) -> Result<Self> {
        let mut cfg = self.clone();
        if cfg.agent.seed == AgentConfig::default().seed {
            cfg.agent.seed = cfg.seed;
        }
        let plant = cfg.plant(true)?;
        if cfg.sampling.intervals.is_none() {
            let set = plant.safety_set();
            cfg.sampling.intervals = Some(
                set.lower()
                    .iter()
                    .zip(set.upper())
                    .map(|(l, u)| [*l, *u])
                    .collect(),
            );
        }
        if cfg.sampling.episodes.is_none() {
            cfg.sampling.episodes = Some(episode_count(&cfg.grid_spec()?));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(HarnessError::config(
                "version",
                format!("unsupported version {} (expected {CONFIG_VERSION})", self.version),
            ));
        }
        if self.agent.seed != self.seed {
            return Err(HarnessError::config(
                "agent.seed",
                "must be omitted or equal to seed",
            ));
        }
        self.agent
            .validate()
            .map_err(|e| HarnessError::config("agent", e.to_string()))?;
        self.scheme()?;
        let plant = self.plant(true)?;
        let n = plant.state_dim();
        let spec = self.grid_spec()?;
        check_len("sampling.q", n - 1, spec.q.len())?;
        if let Some(iv) = &self.sampling.intervals {
            check_len("sampling.intervals", n, iv.len())?;
            if let Some(k) = iv.iter().position(|[l, h]| !(l <= h)) {
                return Err(HarnessError::config(
                    format!("sampling.intervals[{k}]"),
                    "low exceeds high",
                ));
            }
        }
        if self.sampling.episodes == Some(0) {
            return Err(HarnessError::config("sampling.episodes", "must be at least 1"));
        }
        if self.training.max_steps == 0 {
            return Err(HarnessError::config("training.max_steps", "must be at least 1"));
        }
        self.training
            .disturbance
            .validate()
            .map_err(|e| HarnessError::config("training.disturbance", e.to_string()))?;
        self.eval
            .disturbance
            .validate()
            .map_err(|e| HarnessError::config("eval.disturbance", e.to_string()))?;
        if self.eval.resolution < 2 {
            return Err(HarnessError::config("eval.resolution", "must be at least 2"));
        }
        if self.eval.horizon == 0 {
            return Err(HarnessError::config("eval.horizon", "must be at least 1"));
        }
        if let Some(&i) = self.eval.plane.iter().find(|&&i| i >= n) {
            return Err(HarnessError::config(
                "eval.plane",
                format!("index {i} out of range for state dimension {n}"),
            ));
        }
        if self.eval.plane[0] == self.eval.plane[1] {
            return Err(HarnessError::config("eval.plane", "indices must differ"));
        }
        if let Some(bound) = &self.agent.action_bound {
            check_len("agent.action_bound", plant.action_dim(), bound.len())?;
        }
        Ok(())
    }

    /// SHA-256 of the effective config's TOML, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let text = self.effective()?.to_toml_string();
        Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
    }

    pub fn scheme(&self) -> Result<SamplingScheme> {
        SamplingScheme::parse(&self.sampling.scheme).ok_or_else(|| {
            HarnessError::config(
                "sampling.scheme",
                format!(
                    "unknown scheme `{}`; expected one of {}",
                    self.sampling.scheme,
                    SamplingScheme::ALL.map(|s| s.name()).join(", ")
                ),
            )
        })
    }

    pub fn grid_spec(&self) -> Result<AngleGridSpec> {
        let n = self.sampling.q.len() + 1;
        AngleGridSpec::new(
            n,
            self.sampling.q.clone(),
            self.sampling.phi,
            self.sampling.period,
        )
        .map_err(|e| HarnessError::config("sampling", e.to_string()))
    }

    /// Episode settings for training, with termination taken from the scheme.
    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        Ok(EpisodeConfig {
            max_steps: self.training.max_steps,
            terminate_on_violation: self.scheme()?.termination,
            disturbance: self.training.disturbance.clone(),
        })
    }

    /// Instantiates the plant; `training` selects the training episode settings.
    pub fn plant(&self, training: bool) -> Result<Plant> {
        let episode = if training {
            self.episode_config()?
        } else {
            EpisodeConfig {
                max_steps: self.eval.horizon.max(1),
                terminate_on_violation: false,
                disturbance: DisturbanceSpec::None,
            }
        };
        match &self.env {
            EnvConfig::CartPole { params } => Ok(Plant::CartPole(wcs_rl::CartPole::new(*params, episode)?)),
            EnvConfig::Quadrotor { params } => {
                Ok(Plant::Quadrotor(wcs_rl::Quadrotor::new(*params, episode)?))
            }
            EnvConfig::Linear { a, b, bounds, rows } => {
                let a = matrix("env.a", a)?;
                let b = matrix("env.b", b)?;
                if !a.is_square() {
                    return Err(HarnessError::config("env.a", "must be square"));
                }
                check_len("env.b rows", a.rows(), b.rows())?;
                let set = match rows {
                    Some(rows) => {
                        let d = matrix("env.rows", rows)?;
                        check_len("env.rows columns", a.rows(), d.cols())?;
                        check_len("env.bounds", d.rows(), bounds.len())?;
                        SafetySetF64::symmetric_rows(d, bounds)
                    }
                    None => {
                        check_len("env.bounds", a.rows(), bounds.len())?;
                        SafetySetF64::symmetric_box(bounds)
                    }
                }
                .map_err(|e| HarnessError::config("env.bounds", e.to_string()))?;
                let model =
                    LinearModelF64::new(a, b).map_err(|e| HarnessError::config("env.b", e.to_string()))?;
                Ok(Plant::Linear(wcs_rl::LinearPlant::new(model, set, episode)?))
            }
        }
    }

    /// Builds and validates the certificate against the plant's linearization.
    pub fn certificate(&self) -> Result<CertificateF64> {
        let plant = self.plant(true)?;
        let model = plant.linear_model();
        let set = plant.safety_set();
        let (n, m) = (model.state_dim(), model.action_dim());
        let s = &self.synthesis;
        let cert = match (&s.f_gain, &s.p, &s.state_weight, &s.input_weight) {
            (Some(f), Some(p), None, None) => {
                let f = matrix("synthesis.f_gain", f)?;
                check_len("synthesis.f_gain rows", m, f.rows())?;
                check_len("synthesis.f_gain columns", n, f.cols())?;
                let p = symmetric("synthesis.p", p)?;
                check_len("synthesis.p", n, p.dim())?;
                build_certificate(&model, &f, &p, s.alpha)?
            }
            (None, None, Some(q), Some(r)) => {
                let q = symmetric("synthesis.state_weight", q)?;
                check_len("synthesis.state_weight", n, q.dim())?;
                let r = symmetric("synthesis.input_weight", r)?;
                check_len("synthesis.input_weight", m, r.dim())?;
                let spec = SynthesisSpec {
                    state_weight: q,
                    input_weight: r,
                    alpha: s.alpha,
                    stability_radius: s.stability_radius,
                };
                synthesize(&model, &spec, &set)?
            }
            _ => {
                return Err(HarnessError::config(
                    "synthesis",
                    "give either state_weight and input_weight, or f_gain and p",
                ))
            }
        };
        Ok(cert)
    }

    /// Whether `{sᵀPs ≤ φ}` lies inside the plant's safety set.
    pub fn envelope_contained(&self, cert: &CertificateF64) -> Result<bool> {
        let env = cert.envelope(self.sampling.phi)?;
        Ok(envelope_contained_in_set(&env, &self.plant(true)?.safety_set())?)
    }

    pub fn intervals(&self) -> Result<Vec<(f64, f64)>> {
        let cfg = self.effective()?;
        Ok(cfg
            .sampling
            .intervals
            .expect("effective config materializes intervals")
            .into_iter()
            .map(|[l, h]| (l, h))
            .collect())
    }

    /// Explicit directory, then `WCS_OUT_DIR`, then `runs/`.
    pub fn resolve_output_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

/// Desk-scale cart-pole preset: `(2-5)` curriculum, `α = 0.98`.
pub fn cart_pole_preset(scheme: SamplingScheme, seed: u64) -> RunConfig {
    RunConfig {
        version: CONFIG_VERSION,
        seed,
        output_dir: None,
        env: EnvConfig::CartPole {
            params: CartPoleParams::default(),
        },
        synthesis: SynthesisConfig {
            alpha: 0.98,
            state_weight: Some(diag(&[1.0, 1.0, 10.0, 1.0])),
            input_weight: Some(diag(&[1.0])),
            stability_radius: None,
            f_gain: None,
            p: None,
        },
        sampling: SamplingConfig {
            scheme: scheme.name().to_string(),
            period: 2,
            q: vec![5, 5, 5],
            phi: 1.0,
            intervals: None,
            episodes: None,
        },
        training: TrainingConfig::default(),
        agent: AgentConfig::default(),
        eval: EvalConfig {
            plane: [0, 2],
            ..EvalConfig::default()
        },
    }
}

fn diag(d: &[f64]) -> Vec<Vec<f64>> {
    (0..d.len())
        .map(|i| (0..d.len()).map(|j| if i == j { d[i] } else { 0.0 }).collect())
        .collect()
}
