//! Acceptance suite. Runs as a plain binary so that every criterion prints
//! exactly one PASS/FAIL line, and exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tower::ServiceExt;
use trustroute::config::ExperimentConfig;
use trustroute::experiment::run_experiment;
use trustroute::latency::LatencyStats;
use trustroute::service::{
    router, CreateSessionRequest, CreateSessionResponse, Mode, SessionStore, StateResponse, TraceResponse,
    TurnRequest, TurnResponse,
};
use trustroute_core::align::{
    infonce_from_similarity, infonce_gradient, infonce_loss, init_encoders, lora_forward, merge_adapter,
    retrieval_accuracy, train_alignment, AlignmentBatch, AlignmentConfig, BaseProjection, Encoder, EncoderPair,
    LoraAdapter, SyntheticConfig,
};
use trustroute_core::engine::trace::to_jsonl_string;
use trustroute_core::engine::{
    adaptive_value, agent_noise_stream, brute_force_policy, replay_estimates, run_batch, run_session, Clock,
    Policy, SessionConfig,
};
use trustroute_core::router::{
    route_strategy, select_request, validate_suggestion, ContextSnapshot, InteractionState, RequestError,
    RouterConfig, TemplateLibrary,
};
use trustroute_core::target::{builtin_profile_corpus, ArchetypeName};
use trustroute_core::trust::{
    compliance_probability, sigmoid, update_trust, ComplianceParams, EngagementFeatures, NoiseConfig,
    ObservableFactors, StrategyGains, SuspicionRisk, TrustParams, TrustState,
};
use trustroute_core::StrategyClass;

type Outcome = Result<String, String>;
type Criterion<'a> = (u32, &'static str, Box<dyn FnOnce() -> Outcome + 'a>);
type Pick = fn(&mut EncoderPair) -> &mut Array2<f64>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_s), || format!("took {elapsed:.2?}, limit {limit_s} s"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// 1 -----------------------------------------------------------------------

fn merge_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let instances = 1000;
    for _ in 0..instances {
        let d = rng.random_range(1..=64);
        let k = rng.random_range(1..=64);
        let r = rng.random_range(1..=8usize).min(d).min(k);
        let mut g = |rows, cols| Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
        let base = BaseProjection::new(g(d, k)).unwrap();
        let adapter = LoraAdapter::new(g(r, k), g(d, r), 1.0 + 15.0 * g(1, 1)[[0, 0]].abs()).unwrap();
        let x = g(k, 1).column(0).to_owned();
        let a = lora_forward(&base, &adapter, x.view()).unwrap();
        let m = merge_adapter(&base, &adapter).unwrap().dot(&x);
        worst = (&a - &m).iter().fold(worst, |w, v| w.max(v.abs()));
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!("{instances} instances, max |adapter - merged| = {worst:.2e}, {:.2?}", start.elapsed()))
}

// 2 -----------------------------------------------------------------------

fn identity_pair(d: usize) -> EncoderPair {
    let enc = || {
        let base = BaseProjection::new(Array2::eye(d)).unwrap();
        let adapter = LoraAdapter::new(Array2::zeros((1, d)), Array2::zeros((d, 1)), 1.0).unwrap();
        Encoder::new(base, adapter).unwrap()
    };
    EncoderPair::new(enc(), enc()).unwrap()
}

fn infonce_exact_values() -> Outcome {
    let enc = identity_pair(3);
    let one = AlignmentBatch::new(ndarray::arr2(&[[0.2, -1.0, 3.0]]), ndarray::arr2(&[[1.0, 0.5, 0.0]]), 0.07).unwrap();
    let l1 = infonce_loss(&one, &enc).unwrap().loss;
    ensure(l1.abs() <= 1e-12, || format!("N=1 loss {l1:e}"))?;

    let mut worst_uniform = 0.0f64;
    for n in 1..=16 {
        let same = Array2::from_shape_fn((n, 3), |(_, j)| if j == 0 { 1.0 } else { 0.0 });
        let b = AlignmentBatch::new(same.clone(), same, 0.5).unwrap();
        let l = infonce_loss(&b, &enc).unwrap().loss;
        worst_uniform = worst_uniform.max((l - (n as f64).ln()).abs());
        let s = Array2::from_elem((n, n), 1.7);
        let (ls, _, _) = infonce_from_similarity(s.view()).unwrap();
        worst_uniform = worst_uniform.max((ls - (n as f64).ln()).abs());
    }
    ensure(worst_uniform <= 1e-12, || format!("equal-similarity deviation {worst_uniform:e}"))?;

    let e = Array2::eye(2);
    let b = AlignmentBatch::new(e.clone(), e, 1.0).unwrap();
    let l2 = infonce_loss(&b, &identity_pair(2)).unwrap().loss;
    let want = (1.0 + (-1.0f64).exp()).ln();
    ensure((l2 - want).abs() <= 1e-9, || format!("orthonormal N=2 gave {l2}, want {want}"))?;
    Ok(format!("N=1 -> {l1:e}; log N max dev {worst_uniform:.1e}; N=2 orthonormal {l2:.6}"))
}

// 3 -----------------------------------------------------------------------

fn random_instance(rng: &mut ChaCha8Rng) -> (AlignmentBatch, EncoderPair) {
    let n = rng.random_range(1..=8);
    let ki = rng.random_range(1..=16);
    let kt = rng.random_range(1..=16);
    let m = rng.random_range(1..=16);
    let r = rng.random_range(1..=8usize).min(ki).min(kt).min(m);
    let distractors = rng.random_range(0..=3);
    let tau = rng.random_range(0.3..1.5);
    let mut g = |rows, cols| Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
    let batch = AlignmentBatch::with_distractors(g(n, ki), g(n, kt), g(distractors, kt), tau).unwrap();
    let mut enc = |k| {
        let base = BaseProjection::new(g(m, k)).unwrap();
        Encoder::new(base.clone(), LoraAdapter::new(g(r, k), g(m, r), 2.0).unwrap()).unwrap()
    };
    let image = enc(ki);
    let text = enc(kt);
    (batch, EncoderPair::new(image, text).unwrap())
}

/// Central differences of the loss with respect to one parameter matrix.
fn central_difference(
    batch: &AlignmentBatch,
    enc: &EncoderPair,
    pick: Pick,
) -> Array2<f64> {
    let h = 1e-5;
    let mut probe = enc.clone();
    let shape = pick(&mut probe).dim();
    Array2::from_shape_fn(shape, |ix| {
        let orig = pick(&mut probe)[ix];
        pick(&mut probe)[ix] = orig + h;
        let up = infonce_loss(batch, &probe).unwrap().loss;
        pick(&mut probe)[ix] = orig - h;
        let down = infonce_loss(batch, &probe).unwrap().loss;
        pick(&mut probe)[ix] = orig;
        (up - down) / (2.0 * h)
    })
}

fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let norm = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = norm(&(analytic - numeric));
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let picks: [(&str, Pick); 4] = [
        ("image.A", |e| &mut e.image.adapter.a),
        ("image.B", |e| &mut e.image.adapter.b),
        ("text.A", |e| &mut e.text.adapter.a),
        ("text.B", |e| &mut e.text.adapter.b),
    ];
    let instances = 120;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let (batch, enc) = random_instance(&mut rng);
        let g = infonce_gradient(&batch, &enc).unwrap();
        let analytic = [&g.image.a, &g.image.b, &g.text.a, &g.text.b];
        for ((name, pick), a) in picks.iter().zip(analytic) {
            let err = relative_error(a, &central_difference(&batch, &enc, *pick));
            ensure(err <= 1e-4, || format!("instance {i} {name}: relative error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!("{instances} instances, worst relative error {worst:.2e}, {:.2?}", start.elapsed()))
}

// 4 -----------------------------------------------------------------------

fn alignment_training() -> Outcome {
    let start = Instant::now();
    let data = SyntheticConfig::default().generate().unwrap();
    ensure(data.len() == 20, || "dataset is not 20 pairs".into())?;
    let cfg = AlignmentConfig::default();
    ensure(cfg.steps <= 500, || "more than 500 steps".into())?;
    let run = train_alignment(&data, &cfg).map_err(|e| e.to_string())?;
    let ratio = run.final_loss() / run.initial_loss();
    ensure(ratio < 0.1, || format!("final/initial loss {ratio:.4}"))?;
    let (images, texts) = (data.image_matrix().unwrap(), data.text_matrix().unwrap());
    let merged = run.encoders.merge().unwrap();
    let acc = retrieval_accuracy(&merged, images.view(), texts.view()).unwrap();
    ensure(acc >= 0.95, || format!("trained retrieval {acc}"))?;

    let seeds = 100;
    let untrained: f64 = (0..seeds)
        .map(|s| {
            let enc = init_encoders(&data, &AlignmentConfig { seed: s, ..cfg.clone() }).unwrap();
            retrieval_accuracy(&enc.merge().unwrap(), images.view(), texts.view()).unwrap()
        })
        .sum::<f64>()
        / seeds as f64;
    // chance is 1/20; 100 seeds x 20 queries keeps the standard error near 0.005
    ensure((untrained - 0.05).abs() <= 0.03, || format!("untrained control {untrained:.4} not near 0.05"))?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "loss {:.4} -> {:.4} ({:.1}%), retrieval {:.0}%, untrained {:.1}%, {:.2?}",
        run.initial_loss(),
        run.final_loss(),
        ratio * 100.0,
        acc * 100.0,
        untrained * 100.0,
        start.elapsed()
    ))
}

// 5 -----------------------------------------------------------------------

fn trust_dynamics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_fixed, mut worst_contract) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let lambda = rng.random_range(0.01..=1.0);
        let x = EngagementFeatures::clamped([rng.random(), rng.random(), rng.random(), rng.random()]);
        let w = [rng.random(), rng.random(), rng.random(), rng.random()];
        let gains = StrategyGains::uniform(w);
        let g: f64 = w.iter().zip(x.as_array()).map(|(a, b)| a * b).sum();
        let params = TrustParams::new(lambda, rng.random_range(0.0..1.0), NoiseConfig::default()).unwrap();
        let step = |t: f64| {
            update_trust(TrustState::new(t), &x, StrategyClass::Rapport, SuspicionRisk::ZERO, &params, &gains, 0.0)
                .unwrap()
                .value
        };
        worst_fixed = worst_fixed.max((step(g) - g).abs());
        let mut t = rng.random_range(-2.0..2.0);
        for _ in 0..5 {
            let next = step(t);
            let want = (1.0 - lambda) * (t - g).abs();
            worst_contract = worst_contract.max(((next - g).abs() - want).abs());
            t = next;
        }
    }
    ensure(worst_fixed <= 1e-12, || format!("fixed point deviation {worst_fixed:e}"))?;
    ensure(worst_contract <= 1e-12, || format!("contraction deviation {worst_contract:e}"))?;
    Ok(format!("1000 draws; fixed-point dev {worst_fixed:.1e}, contraction dev {worst_contract:.1e}"))
}

// 6 -----------------------------------------------------------------------

fn compliance_model() -> Outcome {
    ensure(sigmoid(0.0) == 0.5, || format!("sigmoid(0) = {}", sigmoid(0.0)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = ObservableFactors::new(vec![0.3, 0.8]).unwrap();
    for i in 0..1000 {
        let params = ComplianceParams {
            alpha_c: rng.random_range(0.1..8.0),
            gamma: rng.random_range(0.1..8.0),
            eta: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        };
        let t = rng.random_range(-1.0..1.5);
        let d = rng.random_range(0.0..1.0);
        let dt = rng.random_range(1e-3..0.5);
        let p = |t, d| compliance_probability(t, d, &z, &params).unwrap();
        ensure(p(t + dt, d) > p(t, d), || format!("sample {i}: not increasing in trust"))?;
        ensure(p(t, d + dt) < p(t, d), || format!("sample {i}: not decreasing in difficulty"))?;
    }
    Ok("1000 samples strictly monotone; sigmoid(0) = 0.5".into())
}

// 7 -----------------------------------------------------------------------

fn router_safety() -> Outcome {
    let cfg = RouterConfig::default();
    let lib = TemplateLibrary::builtin();
    let profiles = builtin_profile_corpus();
    let venues: Vec<String> = lib.venues().into_iter().map(String::from).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut commit, mut deesc, mut checked) = (0, 0, 0);
    for i in 0..10_000 {
        let mut profile = profiles[rng.random_range(0..profiles.len())].clone();
        if rng.random_bool(0.2) {
            profile = profile.without_interests();
        }
        let venue = venues[rng.random_range(0..venues.len())].clone();
        let mut s = InteractionState::new(profile, ContextSnapshot { venue, cues: vec!["the window seat".into()] });
        s.engagement = EngagementFeatures::clamped([rng.random(), rng.random(), rng.random(), rng.random()]);
        s.suspicion = SuspicionRisk::new(rng.random()).unwrap();
        s.trust_estimate = rng.random_range(-0.5..1.5);
        let last = match rng.random_range(0..5) {
            0 => None,
            k => Some(cfg.ladder[k - 1].channel),
        };

        let d = route_strategy(&s, &cfg);
        if s.suspicion.value() >= cfg.s_high {
            ensure(d.class == StrategyClass::Rapport && d.exit_flag, || format!("state {i}: no de-escalation"))?;
            deesc += 1;
        } else if d.class == StrategyClass::Commitment {
            ensure(s.trust_estimate >= cfg.theta_ready, || format!("state {i}: Commitment below threshold"))?;
            commit += 1;
        }
        let request = if d.class == StrategyClass::Commitment {
            match select_request(&s, &cfg, last) {
                Ok(r) => Some(r),
                Err(RequestError::LadderExhausted) => continue,
                Err(e) => return Err(format!("state {i}: {e}")),
            }
        } else {
            None
        };
        let (sugg, template) = lib
            .realize_for_turn(d.class, &s, d.exit_flag, request, i)
            .map_err(|e| format!("state {i}: {e}"))?;
        validate_suggestion(&sugg, &s, template).map_err(|e| format!("state {i}: {e}"))?;
        if let Some(r) = request {
            ensure(sugg.text.contains(r.channel.phrase()), || format!("state {i}: request not in text"))?;
        }
        checked += 1;
    }
    Ok(format!("10000 states: {deesc} de-escalations, {commit} Commitment moves, {checked} suggestions validated"))
}

// 8 -----------------------------------------------------------------------

fn oracle_comparison() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let cfg = SessionConfig { clock: Clock::Frozen, ..SessionConfig::new(ArchetypeName::Trusting, Policy::Adaptive, seed) };
        let best = brute_force_policy(&cfg, 3).map_err(|e| e.to_string())?;
        let adaptive = adaptive_value(&cfg, 3).map_err(|e| e.to_string())?;
        ensure(best.best_value > 0.0, || "oracle value is zero".into())?;
        ensure(adaptive >= 0.9 * best.best_value, || {
            format!("seed {seed}: adaptive {adaptive:.4} < 0.9 x oracle {:.4}", best.best_value)
        })?;
        ratios.push((adaptive / best.best_value, best));
    }
    let (ratio, best) = &ratios[0];
    Ok(format!(
        "oracle {:?} = {:.4} over {} sequences; adaptive/oracle = {ratio:.4}",
        best.best_sequence, best.best_value, best.evaluated
    ))
}

// 9 -----------------------------------------------------------------------

fn directional_experiment() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::load(&repo_root().join("configs/reference.toml")).map_err(|e| e.to_string())?;
    cfg.clock = Clock::Frozen;
    ensure(cfg.sessions == 200 && cfg.seed == 0, || "reference config is not 200 sessions from seed 0".into())?;
    let out = run_experiment(&cfg, None).map_err(|e| e.to_string())?;
    let mean = |arm, arch| out.report.cell(arm, arch).map(|c| c.mean_compliance).ok_or(format!("missing {arm}/{arch}"));
    let mut parts = Vec::new();
    for arch in ArchetypeName::ALL {
        let adaptive = mean(Policy::Adaptive, arch)?;
        let stat = mean(Policy::StaticStage, arch)?;
        let no_align = mean(Policy::NoAlignment, arch)?;
        let no_agent = mean(Policy::NoAgent, arch)?;
        if arch != ArchetypeName::Trusting {
            ensure(adaptive >= stat, || format!("{arch}: Adaptive {adaptive:.4} < StaticStage {stat:.4}"))?;
        }
        ensure(no_align < adaptive && no_agent < adaptive, || {
            format!("{arch}: ablations not below Adaptive ({no_align:.4}, {no_agent:.4} vs {adaptive:.4})")
        })?;
        parts.push(format!("{arch} A={adaptive:.3} S={stat:.3} NoAlign={no_align:.3} NoAgent={no_agent:.3}"));
    }
    within(start.elapsed(), 120)?;
    Ok(format!("{}; {:.2?}", parts.join("; "), start.elapsed()))
}

// 10 ----------------------------------------------------------------------

fn determinism() -> Outcome {
    let src = "arms = [\"Adaptive\", \"StaticStage\", \"NoAlignment\", \"NoAgent\"]\n\
               archetypes = [\"Trusting\", \"Skeptical\", \"Volatile\"]\n\
               sessions = 10\nseed = 40\nframes = 0\n"
        .replace("frames = 0\n", "frozen_clock = true\n");
    let cfg = ExperimentConfig::from_toml(&src, Path::new(".")).map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, Some(a.path())).map_err(|e| e.to_string())?;
    run_experiment(&cfg, Some(b.path())).map_err(|e| e.to_string())?;
    for f in &ra.trace_files {
        let name = f.file_name().unwrap();
        let x = std::fs::read(f).unwrap();
        let y = std::fs::read(b.path().join("traces").join(name)).unwrap();
        ensure(x == y, || format!("{name:?} differs between runs"))?;
    }
    ensure(
        std::fs::read(a.path().join("report.json")).unwrap() == std::fs::read(b.path().join("report.json")).unwrap(),
        || "report.json differs".into(),
    )?;

    let lib = Arc::new(TemplateLibrary::builtin());
    let mut cfgs = Vec::new();
    for (i, arch) in ArchetypeName::ALL.iter().enumerate() {
        for p in Policy::ALL {
            for seed in 0..8 {
                let mut c = SessionConfig { clock: Clock::Frozen, ..SessionConfig::new(*arch, p, seed * 3 + i as u64) };
                c.agent_trust.noise.sigma = 0.05;
                cfgs.push(c);
            }
        }
    }
    let serial: Vec<String> = run_batch(&cfgs, 1, lib.clone()).into_iter().map(|r| to_jsonl_string(&r.unwrap().trace)).collect();
    for p in [2, 4, 8] {
        let par: Vec<String> = run_batch(&cfgs, p, lib.clone()).into_iter().map(|r| to_jsonl_string(&r.unwrap().trace)).collect();
        ensure(par == serial, || format!("parallelism {p} changed results"))?;
    }
    Ok(format!("{} trace files byte-identical; batch of {} invariant at parallelism 1/2/4/8", ra.trace_files.len(), cfgs.len()))
}

// 11 ----------------------------------------------------------------------

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn service_contract() -> Outcome {
    let store = Arc::new(SessionStore::default());
    let app = router(Arc::clone(&store));

    // simulated session driven to completion over HTTP
    let create = CreateSessionRequest { archetype: ArchetypeName::Skeptical, seed: 11, frozen_clock: true, ..Default::default() };
    let (st, body) = call(&app, "POST", "/v1/sessions", Some(serde_json::to_string(&create).unwrap())).await;
    ensure(st == StatusCode::CREATED, || format!("create returned {st}"))?;
    let created: CreateSessionResponse = serde_json::from_slice(&body).unwrap();
    let id = created.session.id.clone();
    let (_, body) = call(&app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    let s0: StateResponse = serde_json::from_slice(&body).unwrap();
    ensure(s0.session.turn == 0 && s0.trust_estimate == 0.0, || "initial state is not turn 0 / trust 0".into())?;

    let mut reported = vec![0.0];
    loop {
        let (st, body) = call(&app, "POST", &format!("/v1/sessions/{id}/turns"), Some("{}".into())).await;
        ensure(st == StatusCode::OK, || format!("post_turn returned {st}: {}", String::from_utf8_lossy(&body)))?;
        let t: TurnResponse = serde_json::from_slice(&body).unwrap();
        reported.push(t.trust_estimate);
        let (_, body) = call(&app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
        let s: StateResponse = serde_json::from_slice(&body).unwrap();
        ensure(s.trust_estimate == t.trust_estimate, || "get_state disagrees with post_turn".into())?;
        if t.stopped.is_some() {
            break;
        }
    }
    let (_, body) = call(&app, "GET", &format!("/v1/sessions/{id}/trace"), None).await;
    let trace: TraceResponse = serde_json::from_slice(&body).unwrap();
    let cfg = create.session_config().unwrap();
    let replayed = replay_estimates(&trace.records, &cfg.agent_trust, &cfg.agent_gains, &mut agent_noise_stream(&cfg).unwrap())
        .map_err(|e| e.to_string())?;
    ensure(replayed == reported, || format!("replayed {replayed:?} != served {reported:?}"))?;
    let engine = run_session(&cfg).map_err(|e| e.to_string())?;
    ensure(engine.trace == trace.records, || "served trace differs from run_session".into())?;

    // second caller is rejected while a turn is in flight
    let human = CreateSessionRequest { mode: Mode::HumanTarget, frozen_clock: true, ..Default::default() };
    let hid = store.create(&human).map_err(|e| e.to_string())?.session.id;
    let guard = store.begin_turn(&hid).map_err(|e| e.to_string())?;
    let turn = serde_json::to_string(&TurnRequest { utterance: "sure, sounds fun!".into(), ..Default::default() }).unwrap();
    let (st, _) = call(&app, "POST", &format!("/v1/sessions/{hid}/turns"), Some(turn.clone())).await;
    ensure(st == StatusCode::CONFLICT, || format!("concurrent post_turn returned {st}"))?;
    drop(guard);
    let (st, _) = call(&app, "POST", &format!("/v1/sessions/{hid}/turns"), Some(turn)).await;
    ensure(st == StatusCode::OK, || format!("post_turn after release returned {st}"))?;
    let (st, _) = call(&app, "GET", "/v1/sessions/nope/state", None).await;
    ensure(st == StatusCode::NOT_FOUND, || format!("unknown handle returned {st}"))?;

    // nearest-rank P90 on the hand-computed example
    let xs: Vec<f64> = (1..=10).map(f64::from).collect();
    let l = LatencyStats::from_samples(&xs).map_err(|e| e.to_string())?;
    ensure(l.p90 == 9.0 && l.avg == 5.5, || format!("P90 {} avg {}", l.p90, l.avg))?;

    Ok(format!(
        "{} simulated turns replayed exactly; conflict -> 409; unknown -> 404; P90(1..10) = {}",
        trace.records.len(),
        l.p90
    ))
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let rt = tokio::runtime::Runtime::new().unwrap();
    let criteria: Vec<Criterion> = vec![
        (1, "merge equivalence", Box::new(merge_equivalence)),
        (2, "InfoNCE exact values", Box::new(infonce_exact_values)),
        (3, "gradient oracle", Box::new(gradient_oracle)),
        (4, "alignment training", Box::new(alignment_training)),
        (5, "trust dynamics", Box::new(trust_dynamics)),
        (6, "compliance model", Box::new(compliance_model)),
        (7, "router safety", Box::new(router_safety)),
        (8, "oracle comparison", Box::new(oracle_comparison)),
        (9, "directional experiment", Box::new(directional_experiment)),
        (10, "determinism", Box::new(determinism)),
        (11, "service contract", Box::new(move || rt.block_on(service_contract()))),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
