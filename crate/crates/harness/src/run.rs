//! Training and evaluation driven by a [`RunConfig`], plus the on-disk run layout.
//!
//! A run directory holds `config.toml` (effective config), `record.json`,
//! `episodes.csv`, `checkpoint.json` and, after evaluation, `eval.json`,
//! `eval.csv` and `safety_area.svg`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wcs_core::{generate_grid, CertificateF64};
use wcs_rl::{
    run_curriculum, run_random_baseline, Checkpoint, DdpgAgent, Environment, FrozenActor, Policy, RunRecord,
    SamplingKind, TrainOptions,
};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::eval::{axis_extents, sweep_safety_area, EvalReport, SweepSpec};

pub const RECORD_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "config.toml";
pub const RECORD_FILE: &str = "record.json";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EVAL_JSON_FILE: &str = "eval.json";
pub const EVAL_CSV_FILE: &str = "eval.csv";
pub const EVAL_SVG_FILE: &str = "safety_area.svg";

/// Versioned JSON envelope around a [`RunRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    pub version: u32,
    #[serde(flatten)]
    pub record: RunRecord,
}

pub struct TrainOutcome {
    pub config: RunConfig,
    pub config_hash: String,
    pub certificate: CertificateF64,
    pub record: RunRecord,
    pub agent: DdpgAgent,
}

/// Largest magnitude of each coordinate inside the safety set; the agent's
/// observation scale.
fn observation_scale(cfg: &RunConfig) -> Result<Vec<f64>> {
    let set = cfg.plant(true)?.safety_set();
    let scale: Vec<f64> = axis_extents(&set)
        .iter()
        .map(|(l, h)| l.abs().max(h.abs()))
        .collect();
    if scale.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(HarnessError::config(
            "env",
            "every state coordinate needs a finite safety bound",
        ));
    }
    Ok(scale)
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let cfg = cfg.effective()?;
    let config_hash = cfg.hash()?;
    let certificate = cfg.certificate()?;
    let mut plant = cfg.plant(true)?;
    let default_bound = plant.action_bounds();
    if cfg.agent.action_bound.is_none() && default_bound.iter().any(|b| !b.is_finite()) {
        return Err(HarnessError::config(
            "agent.action_bound",
            "required when the plant has no actuator limits",
        ));
    }
    let mut agent = DdpgAgent::new(cfg.agent.clone(), observation_scale(&cfg)?, default_bound)?;
    let opts = TrainOptions {
        episode: cfg.episode_config()?,
        reward_offset: cfg.training.reward_offset,
        seed: cfg.seed,
        config_hash: config_hash.clone(),
    };
    let record = match cfg.scheme()?.kind {
        SamplingKind::WorstCase => {
            let grid = generate_grid(&certificate.envelope(cfg.sampling.phi)?, &cfg.grid_spec()?)?;
            run_curriculum(&mut plant, &mut agent, &certificate, &grid, &opts)?
        }
        SamplingKind::Random => {
            let episodes = cfg
                .sampling
                .episodes
                .expect("effective config materializes episodes");
            run_random_baseline(
                &mut plant,
                &mut agent,
                &certificate,
                &cfg.intervals()?,
                episodes,
                &opts,
            )?
        }
    };
    Ok(TrainOutcome {
        config: cfg,
        config_hash,
        certificate,
        record,
        agent,
    })
}

/// Sweeps the configured plane with the plant's evaluation settings.
pub fn evaluate<P: Policy + ?Sized>(
    cfg: &RunConfig,
    policy: &P,
    cert: &CertificateF64,
) -> Result<EvalReport> {
    let cfg = cfg.effective()?;
    let plant = cfg.plant(false)?;
    let spec = SweepSpec {
        plane: cfg.eval.plane,
        resolution: cfg.eval.resolution,
        horizon: cfg.eval.horizon,
        disturbance: cfg.eval.disturbance.clone(),
        seed: cfg.seed,
    };
    let mut report = sweep_safety_area(&plant, policy, cert, &spec)?;
    report.scheme = Some(cfg.sampling.scheme.clone());
    report.config_hash = Some(cfg.hash()?);
    Ok(report)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize to JSON")
}

/// `<scheme>-seed<seed>` under `root`.
pub fn run_dir(root: &Path, cfg: &RunConfig) -> PathBuf {
    root.join(format!("{}-seed{}", cfg.sampling.scheme, cfg.seed))
}

pub fn save_training(dir: &Path, out: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write(&dir.join(CONFIG_FILE), out.config.to_toml_string())?;
    write(&dir.join(RECORD_FILE), record_json(&out.record))?;
    let mut csv = Vec::new();
    out.record
        .write_episodes_csv(&mut csv)
        .map_err(|e| HarnessError::io(dir.join(EPISODES_FILE), e))?;
    write(&dir.join(EPISODES_FILE), csv)?;
    out.agent
        .checkpoint(&out.config_hash)
        .save(&dir.join(CHECKPOINT_FILE))?;
    Ok(())
}

pub fn record_json(record: &RunRecord) -> String {
    json(&RecordFile {
        version: RECORD_VERSION,
        record: record.clone(),
    })
}

pub fn load_record(dir: &Path) -> Result<RunRecord> {
    let path = dir.join(RECORD_FILE);
    let file: RecordFile = serde_json::from_str(&read(&path)?).map_err(|e| HarnessError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if file.version != RECORD_VERSION {
        return Err(HarnessError::Parse {
            path,
            message: format!("unsupported record version {}", file.version),
        });
    }
    Ok(file.record)
}

pub fn load_config(dir: &Path) -> Result<RunConfig> {
    RunConfig::load(&dir.join(CONFIG_FILE))
}

pub fn load_policy(dir: &Path) -> Result<FrozenActor> {
    Ok(Checkpoint::load(&dir.join(CHECKPOINT_FILE))?.policy)
}

pub fn save_eval(dir: &Path, report: &EvalReport, cert: &CertificateF64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write(&dir.join(EVAL_JSON_FILE), json(report))?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write(&dir.join(EVAL_CSV_FILE), csv)?;
    write(
        &dir.join(EVAL_SVG_FILE),
        crate::report::safety_area_svg(report, cert)?,
    )?;
    Ok(())
}

pub fn load_eval(dir: &Path) -> Result<EvalReport> {
    let path = dir.join(EVAL_JSON_FILE);
    let report: EvalReport = serde_json::from_str(&read(&path)?).map_err(|e| HarnessError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if report.version != crate::eval::EVAL_REPORT_VERSION {
        return Err(HarnessError::Parse {
            path,
            message: format!("unsupported eval report version {}", report.version),
        });
    }
    Ok(report)
}
