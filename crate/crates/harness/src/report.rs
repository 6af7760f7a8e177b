//! Failure-rate tables over training runs and SVG plots of evaluation sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use wcs_core::CertificateF64;
use wcs_rl::{RunRecord, SamplingScheme};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::eval::{EvalReport, Label};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Scheme name plus the `(p-q)` budget, e.g. `worst-case (2-5)`.
    pub label: String,
    pub scheme: String,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub failed: usize,
    pub failure_rate: f64,
}

/// `(p-q)` when every `q_r` is equal, `(p-q_1,q_2,…)` otherwise.
pub fn budget_label(cfg: &RunConfig) -> String {
    let q = &cfg.sampling.q;
    let qs = if q.iter().all(|&x| Some(&x) == q.first()) {
        q.first().map_or(String::new(), |x| x.to_string())
    } else {
        q.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    };
    format!("({}-{qs})", cfg.sampling.period)
}

fn scheme_rank(name: &str) -> usize {
    SamplingScheme::ALL
        .iter()
        .position(|s| s.name() == name)
        .unwrap_or(usize::MAX)
}

/// One row per `(budget, scheme)`; episodes and failures pooled over seeds.
pub fn summarize(runs: &[(RunConfig, RunRecord)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, String), SummaryRow> = BTreeMap::new();
    for (cfg, rec) in runs {
        let budget = budget_label(cfg);
        let scheme = rec.scheme.name().to_string();
        let row = groups
            .entry((budget.clone(), scheme_rank(&scheme), scheme.clone()))
            .or_insert_with(|| SummaryRow {
                label: format!("{scheme} {budget}"),
                scheme,
                seeds: Vec::new(),
                episodes: 0,
                failed: 0,
                failure_rate: 0.0,
            });
        row.seeds.push(rec.seed);
        row.episodes += rec.episodes.len();
        row.failed += rec.failed_episodes();
    }
    groups
        .into_values()
        .map(|mut r| {
            r.seeds.sort_unstable();
            r.failure_rate = if r.episodes == 0 {
                0.0
            } else {
                r.failed as f64 / r.episodes as f64
            };
            r
        })
        .collect()
}

pub fn format_table(rows: &[SummaryRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(0)
        .max("Scheme".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| {:<width$} | {:>5} | {:>7} | {:>10} | {:>12} |",
        "Scheme", "Seeds", "EPs Num", "Failed Eps", "Failure rate"
    );
    let _ = writeln!(
        out,
        "|{}|{}|{}|{}|{}|",
        "-".repeat(width + 2),
        "-".repeat(7),
        "-".repeat(9),
        "-".repeat(12),
        "-".repeat(14)
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {:<width$} | {:>5} | {:>7} | {:>10} | {:>11.2}% |",
            r.label,
            r.seeds.len(),
            r.episodes,
            r.failed,
            100.0 * r.failure_rate
        );
    }
    out
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| HarnessError::Parse {
        path: "<summary csv>".into(),
        message: e.to_string(),
    };
    out.write_record(["label", "scheme", "seeds", "episodes", "failed", "failure_rate"])
        .map_err(err)?;
    for r in rows {
        let seeds = r
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        out.write_record([
            r.label.clone(),
            r.scheme.clone(),
            seeds,
            r.episodes.to_string(),
            r.failed.to_string(),
            format!("{:e}", r.failure_rate),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| HarnessError::io("<summary csv>", e))
}

const PLOT: f64 = 480.0;
const MARGIN: f64 = 48.0;

fn label_colour(l: Label) -> &'static str {
    match l {
        Label::IE => "#1f5fbf",
        Label::EE => "#2e9e44",
        Label::Fail => "#e4e4e4",
    }
}

/// Probe scatter (IE blue, EE green, Fail grey) with the envelope's slice.
pub fn safety_area_svg(report: &EvalReport, cert: &CertificateF64) -> Result<String> {
    let [ax, bx] = &report.axes;
    let (x0, x1) = (ax[0], ax[ax.len() - 1]);
    let (y0, y1) = (bx[0], bx[bx.len() - 1]);
    if !(x1 > x0 && y1 > y0) {
        return Err(HarnessError::config("eval", "degenerate sweep extents"));
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * PLOT;
    let py = |y: f64| MARGIN + (y1 - y) / (y1 - y0) * PLOT;
    let cell_w = PLOT / (ax.len() - 1) as f64;
    let cell_h = PLOT / (bx.len() - 1) as f64;
    let size = PLOT + 2.0 * MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for p in &report.probes {
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            px(p.coords[0]) - cell_w / 2.0,
            py(p.coords[1]) - cell_h / 2.0,
            cell_w,
            cell_h,
            label_colour(p.label)
        );
    }

    let [a, b] = report.sweep.plane;
    let pm = cert.p().matrix();
    let (paa, pab, pbb) = (pm[(a, a)], pm[(a, b)], pm[(b, b)]);
    let mut path = String::new();
    for k in 0..=360 {
        let t = (k as f64).to_radians();
        let (c, s) = (t.cos(), t.sin());
        let r = 1.0 / (paa * c * c + 2.0 * pab * c * s + pbb * s * s).sqrt();
        let _ = write!(
            path,
            "{}{:.2},{:.2} ",
            if k == 0 { "M" } else { "L" },
            px(r * c),
            py(r * s)
        );
    }
    let _ = writeln!(
        svg,
        r#"<path d="{}Z" fill="none" stroke="black" stroke-width="1.5"/>"#,
        path.trim_end()
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}" fill="none" stroke="#555"/>"##
    );
    let title = format!(
        "{} {}: IE {:.1}%  EE {:.1}%",
        report.env,
        report.scheme.as_deref().unwrap_or(""),
        100.0 * report.ie_fraction,
        100.0 * report.ee_fraction
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="14">{}</text>"#,
        MARGIN - 16.0,
        title
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="12" text-anchor="middle">s{} in [{x0}, {x1}]</text>"#,
        MARGIN + PLOT / 2.0,
        size - 12.0,
        a + 1
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.0}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.0})">s{} in [{y0}, {y1}]</text>"#,
        MARGIN + PLOT / 2.0,
        MARGIN + PLOT / 2.0,
        b + 1
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}
