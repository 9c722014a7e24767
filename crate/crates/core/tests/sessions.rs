use std::sync::Arc;

use proptest::prelude::*;
use trustroute_core::align::{AlignmentDataset, SyntheticConfig};
use trustroute_core::engine::trace::{read_jsonl, write_jsonl};
use trustroute_core::engine::{
    agent_noise_stream, audit_trace, replay_estimates, run_session, run_session_with, Clock, Policy,
    SessionConfig,
};
use trustroute_core::router::TemplateLibrary;
use trustroute_core::target::ArchetypeName;

fn frozen(arch: ArchetypeName, policy: Policy, seed: u64) -> SessionConfig {
    SessionConfig { clock: Clock::Frozen, ..SessionConfig::new(arch, policy, seed) }
}

#[test]
fn every_cell_audits_and_replays() {
    let lib = Arc::new(TemplateLibrary::builtin());
    for arch in ArchetypeName::ALL {
        for policy in Policy::ALL {
            for seed in 0..25 {
                let mut cfg = frozen(arch, policy, seed);
                cfg.agent_trust.noise.sigma = if seed % 2 == 0 { 0.0 } else { 0.05 };
                let out = run_session_with(&cfg, lib.clone()).unwrap();
                audit_trace(&out.trace, &cfg.router, &lib, policy.is_routed())
                    .unwrap_or_else(|e| panic!("{arch}/{policy}/{seed}: {e}"));

                let replayed = replay_estimates(
                    &out.trace,
                    &cfg.agent_trust,
                    &cfg.agent_gains,
                    &mut agent_noise_stream(&cfg).unwrap(),
                )
                .unwrap();
                assert_eq!(replayed.len(), out.trace.len() + 1);
                for (r, t) in out.trace.iter().zip(&replayed) {
                    assert_eq!(r.trust_estimate, *t, "{arch}/{policy}/{seed} turn {}", r.turn);
                }
                assert_eq!(*replayed.last().unwrap(), out.result.final_estimate);
                assert_eq!(out.result.turns as usize, out.trace.len());
            }
        }
    }
}

#[test]
fn trace_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (i, policy) in Policy::ALL.into_iter().enumerate() {
        let out = run_session(&frozen(ArchetypeName::Volatile, policy, 17 + i as u64)).unwrap();
        let path = dir.path().join(format!("{policy}.jsonl"));
        write_jsonl(&path, &out.trace).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), out.trace);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), out.trace.len());
    }
}

#[test]
fn malformed_trace_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_session(&frozen(ArchetypeName::Trusting, Policy::Adaptive, 1)).unwrap();
    let path = dir.path().join("t.jsonl");
    write_jsonl(&path, &out.trace).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"turn\": \"oops\"}\n");
    std::fs::write(&path, text).unwrap();
    let err = read_jsonl(&path).unwrap_err().to_string();
    assert!(err.starts_with(&format!("line {}", out.trace.len() + 1)), "{err}");
}

#[test]
fn tampered_trace_fails_audit() {
    let lib = TemplateLibrary::builtin();
    let cfg = frozen(ArchetypeName::Trusting, Policy::Adaptive, 0);
    let mut trace = run_session(&cfg).unwrap().trace;
    assert!(audit_trace(&trace, &cfg.router, &lib, true).is_ok());
    trace.swap(0, 1);
    assert!(audit_trace(&trace, &cfg.router, &lib, true).is_err());
}

#[test]
fn alignment_fixture_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = SyntheticConfig { seed: 4, distractors: 3, ..SyntheticConfig::default() }.generate().unwrap();
    let path = dir.path().join("pairs.jsonl");
    data.write_jsonl(&path).unwrap();
    let back = AlignmentDataset::read_jsonl(&path).unwrap();
    assert_eq!(back.records, data.records);
    assert!(back.distractors.is_empty());
    assert_eq!(back.image_matrix().unwrap(), data.image_matrix().unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sessions_are_reproducible(seed in any::<u64>(), arch in 0usize..3, policy in 0usize..4) {
        let cfg = frozen(ArchetypeName::ALL[arch], Policy::ALL[policy], seed);
        let a = run_session(&cfg).unwrap();
        let b = run_session(&cfg).unwrap();
        prop_assert_eq!(a.trace, b.trace);
        prop_assert!(a.result.turns <= cfg.horizon);
        prop_assert!(a.result.granted.len() <= 4);
    }
}
