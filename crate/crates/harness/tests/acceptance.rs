//! Exit gate: one test per acceptance criterion, each printing a single
//! `criterion N: PASS|FAIL` line to stdout (uncaptured) before asserting.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcs_core::{
    boundary_point, eigendecompose, envelope_contained_in_set, episode_count, generate_grid, residual_action,
    safety_reward, synthesize, AngleGridSpec, CertificateF64, MatrixF64, SymmetricMatrixF64, SynthesisSpec,
};
use wcs_harness::run::record_json;
use wcs_harness::{cart_pole_preset, evaluate, train};
use wcs_rl::{
    failure_rate, gradient_check, run_curriculum, AgentConfig, CartPole, CartPoleParams, DdpgAgent,
    Environment, EpisodeConfig, LinearPlant, Mlp, Quadrotor, QuadrotorParams, SamplingScheme, TrainOptions,
    ZeroPolicy, CART_POLE_BOUNDS, QUADROTOR_BOUNDS,
};

fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    // Direct handle writes are not captured by the test harness.
    let _ = std::io::stdout().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn cart_pole_certificate(alpha: f64) -> (CartPole, CertificateF64) {
    let env = CartPole::new(CartPoleParams::default(), EpisodeConfig::default()).unwrap();
    let spec = SynthesisSpec {
        state_weight: SymmetricMatrixF64::from_diag(&[1.0, 1.0, 10.0, 1.0]),
        input_weight: SymmetricMatrixF64::identity(1),
        alpha,
        stability_radius: None,
    };
    let cert = synthesize(&env.linearize(), &spec, &env.safety_spec().set).unwrap();
    (env, cert)
}

#[test]
fn criterion_1_episode_counts() {
    let t = Instant::now();
    let mut got = Vec::new();
    for (q, expected) in [(3, 30), (4, 80), (5, 170)] {
        let spec = AngleGridSpec::uniform(4, q, 2).unwrap();
        let (_, cert) = cart_pole_certificate(0.98);
        let grid = generate_grid(&cert.envelope(1.0).unwrap(), &spec).unwrap();
        got.push((episode_count(&spec), grid.len() * spec.period, expected));
    }
    let elapsed = t.elapsed();
    let pass = got.iter().all(|&(c, g, e)| c == e && g == e) && elapsed < Duration::from_secs(1);
    verdict(
        1,
        pass,
        &format!("(count, generated, expected) = {got:?} in {elapsed:?}"),
    );
}

#[test]
fn criterion_2_boundary_exactness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = 2 + k % 5;
        let m = MatrixF64::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let pd = m.matmul(&m.transpose()).add(&MatrixF64::identity(n).scale(0.1));
        let p = SymmetricMatrixF64::new(pd).unwrap();
        let decomp = eigendecompose(&p).unwrap();
        let phi: f64 = rng.gen_range(0.1..10.0);
        for _ in 0..100 {
            let thetas: Vec<f64> = (0..n - 1)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let s = boundary_point(&decomp, phi, &thetas).unwrap();
            // Oracle: the quadratic form evaluated directly on the dense matrix.
            let v: f64 = (0..n)
                .map(|i| (0..n).map(|j| s[i] * p.matrix()[(i, j)] * s[j]).sum::<f64>())
                .sum();
            worst = worst.max((v - phi).abs() / phi);
        }
    }
    let elapsed = t.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(5);
    verdict(
        2,
        pass,
        &format!("max |sᵀPs − φ|/φ = {worst:e} over 10^4 points in {elapsed:?}"),
    );
}

#[test]
fn criterion_3_certificate_soundness() {
    let (env, cert) = cart_pole_certificate(0.8);
    let contained = envelope_contained_in_set(&cert.envelope(1.0).unwrap(), &env.safety_spec().set).unwrap();
    let pass = cert.h_margin() > 0.0 && cert.decay_margin() > 0.0 && contained;
    verdict(
        3,
        pass,
        &format!(
            "α = 0.8: λmin(H) = {:e}, λmin(αP − H) = {:e}, Ω ⊆ X: {contained}",
            cert.h_margin(),
            cert.decay_margin()
        ),
    );
}

/// Rollouts of the certificate alone on the exact linearization, from every
/// `(2-5)` grid point. Returns (max decay excess, max reward residual,
/// left Ω, failed episodes).
fn linear_rollouts(alpha: f64) -> (f64, f64, bool, usize) {
    let (cp, cert) = cart_pole_certificate(alpha);
    let model = cp.linearize();
    let set = cp.safety_spec().set;
    let episode = EpisodeConfig {
        max_steps: 500,
        terminate_on_violation: true,
        ..EpisodeConfig::default()
    };
    let mut plant = LinearPlant::new(model, set, episode.clone()).unwrap();
    let envelope = cert.envelope(1.0).unwrap();
    let grid = generate_grid(&envelope, &AngleGridSpec::uniform(4, 5, 2).unwrap()).unwrap();
    let p = cert.p();
    let (mut decay_excess, mut reward_resid, mut left) = (f64::NEG_INFINITY, 0.0f64, false);
    for s0 in grid.points() {
        plant.set_state(s0).unwrap();
        let mut s = s0.clone();
        left |= p.quad_form(&s) > 1.0 + 1e-9;
        for _ in 0..500 {
            let a = residual_action(&cert, &s, &[0.0]).unwrap();
            let next = plant.step(&a).unwrap().state;
            let (v, v_next) = (p.quad_form(&s), p.quad_form(&next));
            decay_excess = decay_excess.max(v_next - alpha * v);
            left |= v_next > 1.0;
            let norm2: f64 = s.iter().map(|x| x * x).sum();
            reward_resid = reward_resid.max(safety_reward(&cert, &s, &next, 0.0).abs() / (1.0 + norm2));
            s = next;
        }
    }
    let opts = TrainOptions {
        episode,
        ..TrainOptions::default()
    };
    let mut learner = ZeroPolicy { action_dim: 1 };
    let record = run_curriculum(&mut plant, &mut learner, &cert, &grid, &opts).unwrap();
    (decay_excess, reward_resid, left, record.failed_episodes())
}

#[test]
fn criterion_4_invariance_on_exact_linear_model() {
    let t = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for alpha in [0.8, 0.98] {
        let (excess, _, left, failed) = linear_rollouts(alpha);
        pass &= excess <= 1e-12 && !left && failed == 0;
        details.push(format!(
            "α = {alpha}: max V' − αV = {excess:e}, left Ω: {left}, failed: {failed}"
        ));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    verdict(4, pass, &format!("{} in {elapsed:?}", details.join("; ")));
}

#[test]
fn criterion_5_reward_telescoping() {
    let mut details = Vec::new();
    let mut pass = true;
    for alpha in [0.8, 0.98] {
        let (_, resid, _, _) = linear_rollouts(alpha);
        pass &= resid <= 1e-9;
        details.push(format!("α = {alpha}: max |c|/(1 + ‖s‖²) = {resid:e}"));
    }
    verdict(5, pass, &details.join("; "));
}

#[test]
fn criterion_6_gradient_correctness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut details = Vec::new();
    let mut pass = true;
    let shapes = [
        ("cart-pole", CART_POLE_BOUNDS.to_vec(), vec![15.0]),
        ("quadrotor", QUADROTOR_BOUNDS.to_vec(), vec![0.5 * 9.81; 2]),
    ];
    for (name, obs, bound) in shapes {
        let agent = DdpgAgent::new(AgentConfig::default(), obs.clone(), bound.clone()).unwrap();
        // The actor's zero-initialized output layer would make every upstream
        // gradient vanish; check a randomly initialized copy of its shape too.
        let random_actor = Mlp::new(
            &agent.actor().sizes(),
            agent.actor().output.clone(),
            0.1,
            &mut rng,
        )
        .unwrap();
        for (role, net) in [
            ("actor", agent.actor()),
            ("actor (random head)", &random_actor),
            ("critic", agent.critic()),
        ] {
            let batch = 4;
            let x: Vec<f64> = (0..batch * net.input_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let quad =
                |y: &[f64]| -> (f64, Vec<f64>) { (0.5 * y.iter().map(|v| v * v).sum::<f64>(), y.to_vec()) };
            let gc = gradient_check(net, &x, batch, &quad);
            let ok = gc.max_rel_error <= 1e-4 && gc.skipped_at_kinks * 100 <= gc.compared;
            pass &= ok;
            details.push(format!(
                "{name} {role} {:?}: {:e} ({} compared, {} at kinks)",
                net.sizes(),
                gc.max_rel_error,
                gc.compared,
                gc.skipped_at_kinks
            ));
        }
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    verdict(6, pass, &format!("{} in {elapsed:?}", details.join("; ")));
}

struct SeedOutcome {
    wc_rate: f64,
    rnd_rate: f64,
    wc_ie: f64,
    rnd_ie: f64,
    json: [String; 2],
}

fn run_seed(seed: u64) -> SeedOutcome {
    let mut rates = [0.0; 2];
    let mut ie = [0.0; 2];
    let mut json = [String::new(), String::new()];
    for (k, scheme) in SamplingScheme::ALL[..2].iter().enumerate() {
        let cfg = cart_pole_preset(*scheme, seed);
        let out = train(&cfg).unwrap();
        rates[k] = failure_rate(&out.record);
        ie[k] = evaluate(&cfg, &out.agent.frozen(), &out.certificate)
            .unwrap()
            .ie_fraction;
        json[k] = record_json(&out.record);
    }
    SeedOutcome {
        wc_rate: rates[0],
        rnd_rate: rates[1],
        wc_ie: ie[0],
        rnd_ie: ie[1],
        json,
    }
}

/// Criteria 7 and 8 share their training runs, so they live in one test.
#[test]
fn criteria_7_and_8_directional_reproduction_and_determinism() {
    let t = Instant::now();
    let seeds = [0u64, 1, 2];
    let first: Vec<SeedOutcome> = seeds.iter().map(|&s| run_seed(s)).collect();
    let mean = |f: &dyn Fn(&SeedOutcome) -> f64| first.iter().map(f).sum::<f64>() / first.len() as f64;
    let (wc_rate, rnd_rate) = (mean(&|o| o.wc_rate), mean(&|o| o.rnd_rate));
    let (wc_ie, rnd_ie) = (mean(&|o| o.wc_ie), mean(&|o| o.rnd_ie));
    let per_seed: Vec<String> = seeds
        .iter()
        .zip(&first)
        .map(|(s, o)| {
            format!(
                "seed {s}: rate {:.3}/{:.3}, IE {:.4}/{:.4}",
                o.wc_rate, o.rnd_rate, o.wc_ie, o.rnd_ie
            )
        })
        .collect();
    let pass7 = wc_rate < rnd_rate && wc_ie >= rnd_ie;
    let line7 = format!(
        "mean failure rate worst-case {wc_rate:.4} vs random {rnd_rate:.4}; mean IE fraction {wc_ie:.4} vs {rnd_ie:.4} \
         [{}] in {:?}",
        per_seed.join("; "),
        t.elapsed()
    );

    let second: Vec<SeedOutcome> = seeds.iter().map(|&s| run_seed(s)).collect();
    let identical = first.iter().zip(&second).all(|(a, b)| {
        a.json == b.json && a.wc_ie.to_bits() == b.wc_ie.to_bits() && a.rnd_ie.to_bits() == b.rnd_ie.to_bits()
    });
    let line8 = format!(
        "{} repeated runs, RunRecord JSON and IE fractions identical: {identical}",
        2 * seeds.len()
    );

    // Print both verdicts before either assertion can abort the test.
    let _ = std::io::stdout().write_all(
        format!(
            "criterion 7: {} {line7}\ncriterion 8: {} {line8}\n",
            if pass7 { "PASS" } else { "FAIL" },
            if identical { "PASS" } else { "FAIL" }
        )
        .as_bytes(),
    );
    assert!(pass7, "criterion 7 failed: {line7}");
    assert!(identical, "criterion 8 failed: {line8}");
}

#[test]
fn criterion_9_out_of_scope() {
    // Absolute safety-area shapes and quadrotor/quadruped numerics depend on
    // unstated simulator parameters; criteria 4, 5 and 7 stand in for them.
    // The quadrotor plant is still exercised: its linearization certifies.
    let env = Quadrotor::new(QuadrotorParams::default(), EpisodeConfig::default()).unwrap();
    let spec = SynthesisSpec {
        state_weight: SymmetricMatrixF64::identity(6),
        input_weight: SymmetricMatrixF64::identity(2),
        alpha: 0.98,
        stability_radius: None,
    };
    let certified = synthesize(&env.linearize(), &spec, &env.safety_spec().set).is_ok();
    verdict(
        9,
        certified,
        &format!("out of reproduction scope, replaced by criteria 4, 5 and 7 (quadrotor certificate builds: {certified})"),
    );
}
