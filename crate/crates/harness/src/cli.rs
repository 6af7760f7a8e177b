//! `wcs` subcommands.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use wcs_core::{generate_grid, CoreError};
use wcs_rl::{failure_rate, RlError, ZeroPolicy};

use crate::config::{RunConfig, OUT_DIR_ENV};
use crate::error::{HarnessError, Result};
use crate::report::{format_table, summarize, write_summary_csv};
use crate::run::{self, EVAL_SVG_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
/// Usage errors, as reported by the argument parser.
pub const EXIT_USAGE: i32 = 2;
/// Training or simulation produced non-finite numbers.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "wcs",
    version,
    about = "Worst-case sampling for safe residual reinforcement learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the certificate, check it and print its eigenvalue margins.
    Synthesize {
        #[arg(short, long)]
        config: PathBuf,
        /// Also write certificate.json here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the episode count and write the worst-case grid as CSV.
    Sample {
        #[arg(short, long)]
        config: PathBuf,
        /// CSV destination; `<out dir>/grid.csv` when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train one scheme and write a run directory.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides `sampling.scheme`.
        #[arg(long)]
        scheme: Option<String>,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Parent of the run directory.
        #[arg(short, long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Sweep the configured plane and label every probe IE, EE or Fail.
    Eval {
        /// Run directory written by `train`.
        #[arg(long, conflicts_with = "config")]
        run: Option<PathBuf>,
        /// Evaluate the certificate alone (learned term zero).
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Where to write results; the run directory by default.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run directories into a failure-rate table.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Writes summary.csv and summary.md here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn is_numeric(e: &HarnessError) -> bool {
    matches!(
        e,
        HarnessError::Rl(
            RlError::NonFiniteState { .. } | RlError::NonFiniteAction | RlError::NonFiniteLoss { .. }
        ) | HarnessError::Core(CoreError::NonFinite(_))
    )
}

/// Rewords synthesis failures as the certificate problem they are.
fn certificate_error(e: HarnessError) -> HarnessError {
    match e {
        HarnessError::Core(CoreError::CertificateViolation { .. }) => e,
        HarnessError::Core(inner) => HarnessError::Config {
            key: "synthesis".into(),
            message: format!("certificate violation: no valid certificate for this model ({inner})"),
        },
        other => other,
    }
}

/// Runs the tool on `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if is_numeric(&e) {
                EXIT_NUMERIC
            } else {
                EXIT_ERROR
            }
        }
    }
}

fn io_out(e: std::io::Error) -> HarnessError {
    HarnessError::io("<stdout>", e)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Synthesize { config, out: dir } => synthesize(&config, dir.as_deref(), out),
        Command::Sample { config, output } => sample(&config, output, out),
        Command::Train {
            config,
            scheme,
            seed,
            out: dir,
        } => train(&config, scheme, seed, dir.as_deref(), out),
        Command::Eval {
            run,
            config,
            out: dir,
        } => eval(run, config, dir, out),
        Command::Report { runs, out: dir } => report(&runs, dir.as_deref(), out),
    }
}

fn synthesize(path: &Path, dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(path)?.effective()?;
    let cert = cfg.certificate().map_err(certificate_error)?;
    let contained = cfg.envelope_contained(&cert)?;
    let rep = cert.report();
    writeln!(out, "config hash: {}", cfg.hash()?).map_err(io_out)?;
    writeln!(out, "alpha: {}", rep.alpha).map_err(io_out)?;
    writeln!(out, "F: {:?}", rep.f_gain).map_err(io_out)?;
    writeln!(out, "min eig H: {:e}", cert.h_margin()).map_err(io_out)?;
    writeln!(out, "min eig (alpha*P - H): {:e}", cert.decay_margin()).map_err(io_out)?;
    writeln!(out, "envelope inside safety set: {contained}").map_err(io_out)?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join("certificate.json");
        let json = serde_json::to_string_pretty(&rep).expect("certificate report serializes");
        fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    }
    if !contained {
        return Err(HarnessError::config(
            "sampling.phi",
            "envelope is not contained in the safety set",
        ));
    }
    Ok(())
}

fn sample(path: &Path, output: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(path)?.effective()?;
    let cert = cfg.certificate().map_err(certificate_error)?;
    let grid = generate_grid(&cert.envelope(cfg.sampling.phi)?, &cfg.grid_spec()?)?;
    let dest = output.unwrap_or_else(|| cfg.resolve_output_dir(None).join("grid.csv"));
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).map_err(|e| HarnessError::io(&dest, e))?;
    fs::write(&dest, csv).map_err(|e| HarnessError::io(&dest, e))?;
    writeln!(out, "config hash: {}", cfg.hash()?).map_err(io_out)?;
    writeln!(out, "points per period: {}", grid.len()).map_err(io_out)?;
    writeln!(out, "episodes: {}", grid.len() * cfg.sampling.period).map_err(io_out)?;
    writeln!(out, "grid: {}", dest.display()).map_err(io_out)?;
    Ok(())
}

fn train(
    path: &Path,
    scheme: Option<String>,
    seed: Option<u64>,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = scheme {
        cfg.sampling.scheme = s;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
        cfg.agent.seed = seed;
    }
    let root = cfg.resolve_output_dir(dir);
    let outcome = run::train(&cfg)?;
    let run_dir = run::run_dir(&root, &outcome.config);
    run::save_training(&run_dir, &outcome)?;
    let rec = &outcome.record;
    writeln!(out, "config hash: {}", outcome.config_hash).map_err(io_out)?;
    writeln!(out, "seed: {}", rec.seed).map_err(io_out)?;
    writeln!(
        out,
        "{}: {} episodes, {} failed ({:.2}%)",
        rec.scheme.name(),
        rec.episodes.len(),
        rec.failed_episodes(),
        100.0 * failure_rate(rec)
    )
    .map_err(io_out)?;
    writeln!(out, "run: {}", run_dir.display()).map_err(io_out)?;
    Ok(())
}

fn eval(
    run_dir: Option<PathBuf>,
    config: Option<PathBuf>,
    dir: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let (cfg, report, cert, dest) = match (run_dir, config) {
        (Some(rd), None) => {
            let cfg = run::load_config(&rd)?;
            let cert = cfg.certificate()?;
            let policy = run::load_policy(&rd)?;
            let report = run::evaluate(&cfg, &policy, &cert)?;
            (cfg, report, cert, dir.unwrap_or(rd))
        }
        (None, Some(path)) => {
            let cfg = RunConfig::load(&path)?.effective()?;
            let cert = cfg.certificate().map_err(certificate_error)?;
            let policy = ZeroPolicy {
                action_dim: cert.action_dim(),
            };
            let report = run::evaluate(&cfg, &policy, &cert)?;
            let dest = dir.unwrap_or_else(|| cfg.resolve_output_dir(None).join("certificate-eval"));
            (cfg, report, cert, dest)
        }
        _ => {
            return Err(HarnessError::config(
                "eval",
                "pass exactly one of --run or --config",
            ))
        }
    };
    run::save_eval(&dest, &report, &cert)?;
    writeln!(out, "config hash: {}", cfg.hash()?).map_err(io_out)?;
    writeln!(out, "seed: {}", cfg.seed).map_err(io_out)?;
    writeln!(
        out,
        "IE {:.4}  EE {:.4}  fail {:.4}  (envelope covers {:.4})",
        report.ie_fraction,
        report.ee_fraction,
        report.counts.fail as f64 / report.counts.total() as f64,
        report.envelope_fraction
    )
    .map_err(io_out)?;
    writeln!(out, "plot: {}", dest.join(EVAL_SVG_FILE).display()).map_err(io_out)?;
    Ok(())
}

fn report(runs: &[PathBuf], dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let mut loaded = Vec::with_capacity(runs.len());
    for rd in runs {
        loaded.push((run::load_config(rd)?, run::load_record(rd)?));
    }
    let rows = summarize(&loaded);
    let table = format_table(&rows);
    write!(out, "{table}").map_err(io_out)?;
    for rd in runs {
        if let Ok(ev) = run::load_eval(rd) {
            writeln!(
                out,
                "{}: IE {:.4}  EE {:.4}",
                rd.display(),
                ev.ie_fraction,
                ev.ee_fraction
            )
            .map_err(io_out)?;
        }
    }
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut csv = Vec::new();
        write_summary_csv(&rows, &mut csv)?;
        fs::write(dir.join("summary.csv"), csv).map_err(|e| HarnessError::io(dir.join("summary.csv"), e))?;
        fs::write(dir.join("summary.md"), &table).map_err(|e| HarnessError::io(dir.join("summary.md"), e))?;
    }
    Ok(())
}
