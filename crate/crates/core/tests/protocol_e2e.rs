use std::path::Path;

use acabe::ledger::{Ledger, LedgerEvent};
use acabe::policy::{judge_attrs, AttributeSet};
use acabe::protocol::{
    first_divergence, run_instance, Adversary, AuthorityConfig, OwnerConfig, Payload, ScenarioConfig, Trace, UserConfig, UserStatus,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_policy(r: &mut ChaCha20Rng, words: &[String], leaves: usize) -> String {
    if leaves == 1 {
        return words.choose(r).unwrap().clone();
    }
    let k = r.gen_range(1..leaves);
    let op = if r.gen_bool(0.5) { "AND" } else { "OR" };
    format!("( {} ) {op} ( {} )", random_policy(r, words, k), random_policy(r, words, leaves - k))
}

fn random_config(seed: u64) -> ScenarioConfig {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let authorities: Vec<AuthorityConfig> = (0..r.gen_range(1..=3))
        .map(|i| AuthorityConfig {
            id: format!("A{i}"),
            attributes: (0..r.gen_range(1..=3)).map(|j| format!("t{j}")).collect(),
            stake: r.gen_bool(0.3).then(|| r.gen_range(100..300)),
        })
        .collect();
    let words: Vec<String> = authorities.iter().flat_map(|a| a.attributes.iter().map(move |t| format!("{t}@{}", a.id))).collect();
    let owner_val = r.gen_range(0..8);
    let users = (0..r.gen_range(1..=3))
        .map(|i| UserConfig {
            address: format!("user{i}"),
            attributes: words.iter().filter(|_| r.gen_bool(0.6)).cloned().collect(),
            deposit: r.gen_range(1..14),
        })
        .collect();
    let leaves = r.gen_range(1..=4);
    ScenarioConfig {
        name: format!("random-{seed}"),
        seed,
        curve: "bn254".into(),
        min_stake: 100,
        initial_balance: 1000,
        owner: OwnerConfig {
            address: "owner".into(),
            data: Payload::Text { text: format!("payload for {seed}") },
            policy: random_policy(&mut r, &words, leaves),
            owner_val,
        },
        authorities,
        users,
        adversaries: Vec::new(),
    }
}

/// What the protocol must report for `u`, derived from the config alone.
fn expected_status(cfg: &ScenarioConfig, u: &UserConfig) -> UserStatus {
    let attrs: AttributeSet = u.attributes.iter().cloned().collect();
    if u.deposit > cfg.initial_balance {
        UserStatus::InsufficientDeposit
    } else if !judge_attrs(&attrs, &cfg.owner.policy).unwrap() {
        UserStatus::PolicyNotSatisfied
    } else if u.deposit <= cfg.owner.owner_val {
        UserStatus::InsufficientDeposit
    } else {
        UserStatus::Recovered
    }
}

#[test]
fn random_scenarios_match_the_oracle() {
    for seed in 0..30 {
        let cfg = random_config(seed);
        cfg.validate().unwrap();
        let report = run_instance(&cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(report.conserved, "seed {seed}");
        for u in &cfg.users {
            let got = report.user(&u.address).unwrap();
            assert_eq!(got.status, expected_status(&cfg, u), "seed {seed} {}: policy `{}`", u.address, cfg.owner.policy);
            if got.status == UserStatus::Recovered {
                assert_eq!(got.plaintext.as_deref(), Some(cfg.owner.data.bytes().as_slice()));
            }
        }

        // One settlement per recovering user.
        let settled = report.ledger.events().iter().filter(|e| matches!(e.event, LedgerEvent::Settled { .. })).count();
        let recovered = report.users.iter().filter(|u| u.status == UserStatus::Recovered).count();
        assert_eq!(settled, recovered, "seed {seed}");

        // Each ledger seq appears at most once in the trace, in order.
        let seqs: Vec<u64> = report.trace.events.iter().filter_map(|e| e.seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]), "seed {seed}: {seqs:?}");

        let again = run_instance(&cfg).unwrap();
        assert_eq!(first_divergence(&report.trace, &again.trace), None, "seed {seed}");
        let replayed = Ledger::replay(report.ledger.gp().clone(), report.ledger.journal()).unwrap();
        assert_eq!(replayed.state_digest(), report.ledger.state_digest());
    }
}

#[test]
fn adversaries_hold_on_random_scenarios() {
    let mut checked = 0;
    for seed in 100..140 {
        let mut cfg = random_config(seed);
        let ok = cfg.users.iter().any(|u| expected_status(&cfg, u) == UserStatus::Recovered);
        if !ok {
            continue;
        }
        cfg.adversaries = Adversary::ALL.to_vec();
        if cfg.validate().is_err() {
            // Colluders need a policy that takes two or more attributes.
            cfg.adversaries.retain(|a| *a != Adversary::CrossGidColluders);
        }
        let report = run_instance(&cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        for a in &report.adversaries {
            assert!(a.held, "seed {seed} {}: {}", a.tag.as_str(), a.observed);
        }
        assert!(report.conserved);
        checked += 1;
        if checked == 8 {
            break;
        }
    }
    assert_eq!(checked, 8);
}

#[test]
fn seed_changes_the_trace() {
    let a = run_instance(&ScenarioConfig::gamefi()).unwrap();
    let b = run_instance(&ScenarioConfig { seed: 1, ..ScenarioConfig::gamefi() }).unwrap();
    assert_ne!(a.gid, b.gid);
    let d = first_divergence(&a.trace, &b.trace).expect("different seeds diverge");
    let text = a.trace.to_jsonl();
    assert_eq!(Trace::from_jsonl(&text).unwrap(), a.trace);
    assert!(d.to_string().starts_with("trace diverges at step"));
}

#[test]
fn shipped_scenario_files_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let gamefi = ScenarioConfig::from_json(&std::fs::read_to_string(dir.join("gamefi.json")).unwrap()).unwrap();
    assert_eq!(gamefi, ScenarioConfig::gamefi());
    let adv = ScenarioConfig::from_json(&std::fs::read_to_string(dir.join("gamefi-adversaries.json")).unwrap()).unwrap();
    let report = run_instance(&adv).unwrap();
    assert!(report.adversaries_held());
    assert_eq!(report.user("player2").unwrap().status, UserStatus::Recovered);
}

#[test]
fn unknown_fields_are_rejected() {
    let text = r#"{"name":"x","seed":1,"authorities":[],"owner":{"address":"o","data":{"text":"a"},"policy":"a@A","owner_val":0},"users":[],"colour":"red"}"#;
    assert!(ScenarioConfig::from_json(text).is_err());
}
