use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wcs_harness::run::{load_eval, load_record, EPISODES_FILE, EVAL_CSV_FILE};
use wcs_harness::{cart_pole_preset, EvalReport, RunConfig};
use wcs_rl::SamplingScheme;

fn wcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcs"))
        .args(args)
        .env_remove("WCS_OUT_DIR")
        .output()
        .expect("wcs runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// Short cart-pole run: (2-3) budget, 40-step episodes, small networks.
fn quick_config(dir: &Path, scheme: SamplingScheme, seed: u64) -> PathBuf {
    let mut cfg = cart_pole_preset(scheme, seed);
    cfg.sampling.q = vec![3, 3, 3];
    cfg.training.max_steps = 40;
    cfg.agent.hidden = vec![16, 16];
    cfg.agent.batch_size = 16;
    cfg.eval.resolution = 5;
    cfg.eval.horizon = 50;
    let path = dir.join(format!("{}-{seed}.toml", scheme.name()));
    fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

#[test]
fn sample_reports_170_episodes_and_85_rows() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    let out = wcs(&[
        "sample",
        "-c",
        configs().join("cartpole-2-5.toml").to_str().unwrap(),
        "-o",
        grid.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).lines().any(|l| l == "episodes: 170"));
    let mut rdr = csv::Reader::from_path(&grid).unwrap();
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().skip(1).map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 85);
    assert!(rows.iter().all(|r| r.len() == 4));
}

#[test]
fn synthesize_rejects_unstabilizable_model() {
    let out = wcs(&[
        "synthesize",
        "-c",
        configs().join("unstabilizable.toml").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
    assert!(
        text(&out.stderr).contains("certificate violation"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn synthesize_reports_positive_margins() {
    let dir = tempfile::tempdir().unwrap();
    let out = wcs(&[
        "synthesize",
        "-c",
        configs().join("cartpole-2-5.toml").to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("envelope inside safety set: true"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert!(report["h_margin"].as_f64().unwrap() > 0.0);
    assert!(report["decay_margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_config_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = \"zero\"\n").unwrap();
    let out = wcs(&["synthesize", "-c", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("cannot parse"));

    let mismatch = fs::read_to_string(configs().join("unstabilizable.toml"))
        .unwrap()
        .replace("b = [[0.0], [0.0]]", "b = [[0.0], [0.0], [1.0]]");
    fs::write(&bad, mismatch).unwrap();
    let out = wcs(&["sample", "-c", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("env.b rows"), "{}", text(&out.stderr));

    let out = wcs(&[
        "train",
        "-c",
        configs().join("cartpole-2-3.toml").to_str().unwrap(),
        "--scheme",
        "sideways",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("sampling.scheme"));

    assert_eq!(wcs(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn config_round_trips_through_toml() {
    for name in ["cartpole-2-3.toml", "cartpole-2-5.toml", "unstabilizable.toml"] {
        let cfg = RunConfig::load(&configs().join(name)).unwrap();
        let eff = cfg.effective().unwrap();
        let back = RunConfig::from_toml_str(&eff.to_toml_string()).unwrap();
        assert_eq!(back, eff, "{name}");
        assert_eq!(back.effective().unwrap(), eff, "{name}: effective is idempotent");
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }
    let preset = cart_pole_preset(SamplingScheme::ALL[1], 3);
    let back = RunConfig::from_toml_str(&preset.to_toml_string()).unwrap();
    assert_eq!(back, preset);
}

#[test]
fn train_twice_gives_identical_record_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), SamplingScheme::ALL[0], 11);
    let mut records = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("out{k}"));
        let out = wcs(&[
            "train",
            "-c",
            cfg.to_str().unwrap(),
            "-o",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        records.push(fs::read_to_string(out_dir.join("worst-case-seed11/record.json")).unwrap());
    }
    assert_eq!(records[0], records[1]);
}

#[test]
fn output_directory_falls_back_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), SamplingScheme::ALL[1], 2);
    let root = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_wcs"))
        .args(["train", "-c", cfg.to_str().unwrap()])
        .env("WCS_OUT_DIR", &root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(root.join("random-seed2/record.json").exists());
}

/// Trains all four schemes, evaluates each and checks the artifacts re-parse
/// and the report agrees with the raw per-episode CSV.
#[test]
fn four_scheme_report_is_consistent_with_raw_csv() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("runs");
    let mut run_dirs = Vec::new();
    for scheme in SamplingScheme::ALL {
        let cfg = quick_config(dir.path(), scheme, 5);
        let out = wcs(&["train", "-c", cfg.to_str().unwrap(), "-o", root.to_str().unwrap()]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        let rd = root.join(format!("{}-seed5", scheme.name()));
        let out = wcs(&["eval", "--run", rd.to_str().unwrap()]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        run_dirs.push(rd);
    }

    let summary_dir = dir.path().join("summary");
    let mut args = vec![
        "report".to_string(),
        "-o".into(),
        summary_dir.to_str().unwrap().into(),
    ];
    args.extend(run_dirs.iter().map(|d| d.to_str().unwrap().to_string()));
    let out = Command::new(env!("CARGO_BIN_EXE_wcs"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let table_rows: Vec<&str> = stdout
        .lines()
        .filter(|l| l.starts_with("| ") && !l.contains("Scheme"))
        .collect();
    assert_eq!(table_rows.len(), 4, "{stdout}");
    assert!(stdout.contains("EPs Num") && stdout.contains("Failed Eps") && stdout.contains("Failure rate"));

    let mut rdr = csv::Reader::from_path(summary_dir.join("summary.csv")).unwrap();
    let mut seen = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let scheme = &rec[1];
        let rate: f64 = rec[5].parse().unwrap();
        let episodes: usize = rec[3].parse().unwrap();
        let rd = root.join(format!("{scheme}-seed5"));
        let mut raw = csv::Reader::from_path(rd.join(EPISODES_FILE)).unwrap();
        let (mut n, mut failed) = (0usize, 0usize);
        for row in raw.records() {
            n += 1;
            failed += (&row.unwrap()[3] == "1") as usize;
        }
        assert_eq!(n, episodes);
        assert_eq!(rate, failed as f64 / n as f64, "{scheme}");
        seen += 1;
    }
    assert_eq!(seen, 4);

    for rd in &run_dirs {
        let rec = load_record(rd).unwrap();
        let reparsed: wcs_harness::run::RecordFile =
            serde_json::from_str(&wcs_harness::run::record_json(&rec)).unwrap();
        assert_eq!(reparsed.record, rec);
        let report = load_eval(rd).unwrap();
        let probes = EvalReport::read_csv(fs::File::open(rd.join(EVAL_CSV_FILE)).unwrap()).unwrap();
        assert_eq!(probes, report.probes);
        let cfg = RunConfig::load(&rd.join("config.toml")).unwrap();
        assert_eq!(cfg.effective().unwrap(), cfg);
        assert_eq!(Some(cfg.hash().unwrap()), report.config_hash);
        assert_eq!(cfg.hash().unwrap(), rec.config_hash);
    }
}
