//! Frozen-policy evaluation: IE/EE labels over a 2-D slice of the safety set.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wcs_core::{lyapunov_value, residual_action, CertificateF64, SafetyEnvelopeF64, SafetySetF64};
use wcs_rl::{DisturbanceSpec, Environment, Policy};

use crate::error::{HarnessError, Result};

pub const EVAL_REPORT_VERSION: u32 = 1;
/// Probe `k` draws its disturbance from stream `PROBE_STREAM_BASE + k`,
/// clear of the training streams.
pub const PROBE_STREAM_BASE: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Starts in the envelope and never leaves it.
    IE,
    /// Stays in the safety set and visits it outside the envelope.
    EE,
    Fail,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::IE => "IE",
            Label::EE => "EE",
            Label::Fail => "Fail",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Label::IE, Label::EE, Label::Fail]
            .into_iter()
            .find(|l| l.as_str() == s)
    }
}

/// Rounding slack on envelope membership: `sᵀPs ≤ 1 + ENVELOPE_TOL` counts as
/// inside, so states constructed on the boundary are not lost to rounding.
pub const ENVELOPE_TOL: f64 = 1e-9;

fn in_envelope(omega: &SafetyEnvelopeF64, s: &[f64]) -> Result<bool> {
    Ok(lyapunov_value(omega, s)? <= omega.phi() + ENVELOPE_TOL)
}

/// The envelope the labels refer to, `{sᵀPs ≤ 1}`.
pub fn evaluation_envelope(cert: &CertificateF64) -> Result<SafetyEnvelopeF64> {
    Ok(cert.envelope(1.0)?)
}

/// Labels the closed-loop rollout of `a = policy(s) + F·s` from `s0`.
///
/// Checks `s0` and the next `horizon` states. Uses whatever disturbance the
/// environment currently carries and ignores its termination flag.
pub fn classify_ie_ee<E, P>(
    env: &mut E,
    policy: &P,
    cert: &CertificateF64,
    s0: &[f64],
    horizon: usize,
) -> Result<Label>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let omega = evaluation_envelope(cert)?;
    let set = env.safety_spec().set;
    classify_with(env, policy, cert, &omega, &set, s0, horizon)
}

fn classify_with<E, P>(
    env: &mut E,
    policy: &P,
    cert: &CertificateF64,
    omega: &SafetyEnvelopeF64,
    set: &SafetySetF64,
    s0: &[f64],
    horizon: usize,
) -> Result<Label>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if horizon == 0 {
        return Err(HarnessError::config("eval.horizon", "must be at least 1"));
    }
    if !set.contains(s0)? {
        return Err(HarnessError::ProbeOutsideSet { state: s0.to_vec() });
    }
    env.set_state(s0)?;
    let mut inside_omega = in_envelope(omega, s0)?;
    let mut s = s0.to_vec();
    for _ in 0..horizon {
        let a = residual_action(cert, &s, &policy.act(&s))?;
        s = env.step(&a)?.state;
        if !set.contains(&s)? {
            return Ok(Label::Fail);
        }
        inside_omega &= in_envelope(omega, &s)?;
    }
    Ok(if inside_omega { Label::IE } else { Label::EE })
}

/// Half-widths of the set along each coordinate axis, other coordinates zero.
pub fn axis_extents(set: &SafetySetF64) -> Vec<(f64, f64)> {
    let d = set.d();
    (0..set.state_dim())
        .map(|i| {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for r in 0..d.rows() {
                let c = d[(r, i)];
                if c == 0.0 {
                    continue;
                }
                let (a, b) = (
                    (set.lower()[r] + set.v()[r]) / c,
                    (set.upper()[r] + set.v()[r]) / c,
                );
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
            (lo, hi)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub index: usize,
    pub i: usize,
    pub j: usize,
    /// Coordinates on the two plane axes.
    pub coords: [f64; 2],
    pub label: Label,
    pub in_envelope: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub ie: usize,
    pub ee: usize,
    pub fail: usize,
}

impl LabelCounts {
    pub fn of(probes: &[Probe]) -> Self {
        let mut c = Self::default();
        for p in probes {
            match p.label {
                Label::IE => c.ie += 1,
                Label::EE => c.ee += 1,
                Label::Fail => c.fail += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.ie + self.ee + self.fail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub plane: [usize; 2],
    pub resolution: usize,
    pub horizon: usize,
    pub disturbance: DisturbanceSpec,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub env: String,
    pub scheme: Option<String>,
    pub config_hash: Option<String>,
    pub sweep: SweepSpec,
    /// Probe coordinates along each plane axis.
    pub axes: [Vec<f64>; 2],
    pub probes: Vec<Probe>,
    pub counts: LabelCounts,
    pub ie_fraction: f64,
    pub ee_fraction: f64,
    /// Fraction of probes whose initial state lies in the envelope.
    pub envelope_fraction: f64,
    /// Area of the swept rectangle times each fraction.
    pub ie_area: f64,
    pub ee_area: f64,
    /// Probes off the plane are fixed at zero.
    pub off_plane_zeroed: bool,
}

impl EvalReport {
    /// `index,i,j,c1,c2,label,in_envelope`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| HarnessError::Parse {
            path: "<eval csv>".into(),
            message: e.to_string(),
        };
        out.write_record(["index", "i", "j", "c1", "c2", "label", "in_envelope"])
            .map_err(io)?;
        for p in &self.probes {
            out.write_record([
                p.index.to_string(),
                p.i.to_string(),
                p.j.to_string(),
                format!("{:e}", p.coords[0]),
                format!("{:e}", p.coords[1]),
                p.label.as_str().to_string(),
                (p.in_envelope as u8).to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| HarnessError::io("<eval csv>", e))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<Probe>> {
        let bad = |m: String| HarnessError::Parse {
            path: "<eval csv>".into(),
            message: m,
        };
        let mut rdr = csv::Reader::from_reader(r);
        let mut probes = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |k: usize| rec.get(k).ok_or_else(|| bad(format!("missing column {k}")));
            let num =
                |k: usize| -> Result<f64> { field(k)?.parse().map_err(|e| bad(format!("column {k}: {e}"))) };
            let int = |k: usize| -> Result<usize> {
                field(k)?.parse().map_err(|e| bad(format!("column {k}: {e}")))
            };
            probes.push(Probe {
                index: int(0)?,
                i: int(1)?,
                j: int(2)?,
                coords: [num(3)?, num(4)?],
                label: Label::parse(field(5)?).ok_or_else(|| bad(format!("unknown label {:?}", field(5))))?,
                in_envelope: int(6)? == 1,
            });
        }
        Ok(probes)
    }
}

/// Regular `resolution × resolution` sweep over `plane`, other components zero.
///
/// Probe `k = i·resolution + j` sits at the `i`-th value on the first axis and
/// the `j`-th on the second; its disturbance depends only on `(seed, k)`, so
/// the report is independent of how probes are scheduled.
pub fn sweep_safety_area<E, P>(
    env: &E,
    policy: &P,
    cert: &CertificateF64,
    spec: &SweepSpec,
) -> Result<EvalReport>
where
    E: Environment + Clone + Send + Sync,
    P: Policy + ?Sized,
{
    let n = env.state_dim();
    let [pa, pb] = spec.plane;
    if pa >= n || pb >= n || pa == pb {
        return Err(HarnessError::config(
            "eval.plane",
            format!("invalid plane {:?} for dimension {n}", spec.plane),
        ));
    }
    if spec.resolution < 2 {
        return Err(HarnessError::config("eval.resolution", "must be at least 2"));
    }
    spec.disturbance.validate()?;
    let set = env.safety_spec().set;
    let omega = evaluation_envelope(cert)?;
    let ext = axis_extents(&set);
    let res = spec.resolution;
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..res)
            .map(|k| lo + (hi - lo) * k as f64 / (res - 1) as f64)
            .collect()
    };
    let axes = [axis(ext[pa]), axis(ext[pb])];

    let probes: Vec<Result<Probe>> = (0..res * res)
        .into_par_iter()
        .map_init(
            || env.clone(),
            |env, k| {
                let (i, j) = (k / res, k % res);
                let mut s0 = vec![0.0; n];
                s0[pa] = axes[0][i];
                s0[pb] = axes[1][j];
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(PROBE_STREAM_BASE + k as u64);
                env.set_disturbance(spec.disturbance.draw(&mut rng));
                let label = if set.contains(&s0)? {
                    classify_with(env, policy, cert, &omega, &set, &s0, spec.horizon)?
                } else {
                    Label::Fail
                };
                Ok(Probe {
                    index: k,
                    i,
                    j,
                    coords: [s0[pa], s0[pb]],
                    label,
                    in_envelope: in_envelope(&omega, &s0)?,
                })
            },
        )
        .collect();
    let probes = probes.into_iter().collect::<Result<Vec<_>>>()?;
    let counts = LabelCounts::of(&probes);
    let total = probes.len() as f64;
    let area = (ext[pa].1 - ext[pa].0) * (ext[pb].1 - ext[pb].0);
    let ie_fraction = counts.ie as f64 / total;
    let ee_fraction = counts.ee as f64 / total;
    Ok(EvalReport {
        version: EVAL_REPORT_VERSION,
        env: env.name().to_string(),
        scheme: None,
        config_hash: None,
        sweep: spec.clone(),
        axes,
        envelope_fraction: probes.iter().filter(|p| p.in_envelope).count() as f64 / total,
        probes,
        counts,
        ie_fraction,
        ee_fraction,
        ie_area: ie_fraction * area,
        ee_area: ee_fraction * area,
        off_plane_zeroed: true,
    })
}
