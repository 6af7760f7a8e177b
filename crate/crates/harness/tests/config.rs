use wcs_harness::{cart_pole_preset, HarnessError, RunConfig};
use wcs_rl::SamplingScheme;

const LINEAR: &str = r#"
[env]
name = "linear"
a = [[1.0, 0.1], [0.0, 1.0]]
b = [[0.0], [0.1]]
bounds = [1.0, 2.0]

[synthesis]
state_weight = [[1.0, 0.0], [0.0, 1.0]]
input_weight = [[1.0]]

[sampling]
scheme = "random"
period = 2
q = [6]
"#;

fn key_of(e: HarnessError) -> String {
    match e {
        HarnessError::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn defaults_are_materialized() {
    let eff = RunConfig::from_toml_str(LINEAR).unwrap().effective().unwrap();
    assert_eq!(eff.synthesis.alpha, 0.8);
    assert_eq!(eff.sampling.phi, 1.0);
    assert_eq!(eff.sampling.episodes, Some(12));
    assert_eq!(eff.sampling.intervals, Some(vec![[-1.0, 1.0], [-2.0, 2.0]]));
    assert_eq!(eff.training.max_steps, 500);
    assert_eq!(eff.agent.hidden, vec![64, 64]);
    let text = eff.to_toml_string();
    for key in [
        "alpha",
        "phi",
        "episodes",
        "intervals",
        "max_steps",
        "hidden",
        "horizon",
    ] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = LINEAR.replace("period = 2", "period = 2\nperiods = 3");
    assert!(matches!(
        RunConfig::from_toml_str(&text),
        Err(HarnessError::Parse { .. })
    ));
}

#[test]
fn dimension_mismatches_name_the_key() {
    let cfg = RunConfig::from_toml_str(&LINEAR.replace("q = [6]", "q = [6, 6]")).unwrap();
    assert_eq!(key_of(cfg.effective().unwrap_err()), "sampling.q");

    let cfg = RunConfig::from_toml_str(&LINEAR.replace(
        "input_weight = [[1.0]]",
        "input_weight = [[1.0, 0.0], [0.0, 1.0]]",
    ))
    .unwrap();
    assert_eq!(key_of(cfg.certificate().unwrap_err()), "synthesis.input_weight");

    let mut cfg = RunConfig::from_toml_str(LINEAR).unwrap();
    cfg.eval.plane = [0, 5];
    assert_eq!(key_of(cfg.effective().unwrap_err()), "eval.plane");

    let mut cfg = RunConfig::from_toml_str(LINEAR).unwrap();
    cfg.sampling.intervals = Some(vec![[0.0, 1.0]]);
    assert_eq!(key_of(cfg.effective().unwrap_err()), "sampling.intervals");
}

#[test]
fn synthesis_needs_one_complete_route() {
    let cfg = RunConfig::from_toml_str(&LINEAR.replace("input_weight = [[1.0]]\n", "")).unwrap();
    assert_eq!(key_of(cfg.certificate().unwrap_err()), "synthesis");
}

#[test]
fn precomputed_gain_and_p_are_validated_not_trusted() {
    let synthesized = RunConfig::from_toml_str(LINEAR).unwrap().certificate().unwrap();
    let mut cfg = RunConfig::from_toml_str(LINEAR).unwrap();
    cfg.synthesis.state_weight = None;
    cfg.synthesis.input_weight = None;
    cfg.synthesis.f_gain = Some(synthesized.f_gain().to_rows());
    cfg.synthesis.p = Some(synthesized.p().matrix().to_rows());
    let imported = cfg.certificate().unwrap();
    assert_eq!(
        imported.h().matrix().to_rows(),
        synthesized.h().matrix().to_rows()
    );

    cfg.synthesis.f_gain = Some(vec![vec![0.0, 0.0]]);
    assert!(matches!(
        cfg.certificate().unwrap_err(),
        HarnessError::Core(wcs_core::CoreError::CertificateViolation { .. })
    ));
}

#[test]
fn agent_seed_follows_run_seed() {
    let mut cfg = cart_pole_preset(SamplingScheme::ALL[0], 9);
    assert_eq!(cfg.effective().unwrap().agent.seed, 9);
    cfg.agent.seed = 4;
    assert_eq!(key_of(cfg.effective().unwrap_err()), "agent.seed");
}

#[test]
fn hash_tracks_content() {
    let a = cart_pole_preset(SamplingScheme::ALL[0], 0);
    let mut b = a.clone();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    b.training.max_steps = 499;
    assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    assert_eq!(a.hash().unwrap().len(), 64);
}
