use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acabe_cli::bench::CSV_HEADER;

fn acabe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acabe")).current_dir(dir).args(args).output().expect("spawn acabe")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn demo_player2_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let o = acabe(dir.path(), &["demo", "gamefi", "--as", "player2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("player2: plaintext recovered"), "{out}");
    assert!(out.contains("skin:aurora-blade"), "{out}");
    assert!(dir.path().join("gamefi.trace.jsonl").exists());
}

#[test]
fn demo_player3_is_a_phase_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = acabe(dir.path(), &["demo", "gamefi", "--as", "player3"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("player3: policy not satisfied"), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&acabe(dir.path(), &["demo", "missing.json"])), 2);
    assert_eq!(code(&acabe(dir.path(), &["demo", "gamefi", "--adversary", "nobody"])), 2);
    assert_eq!(code(&acabe(dir.path(), &["demo", "gamefi", "--as", "nobody"])), 2);
    assert_eq!(code(&acabe(dir.path(), &["bench", "sizes", "--max-attrs", "0"])), 2);
    assert_eq!(code(&acabe(dir.path(), &["bench", "times", "--max-attrs", "1", "--payload-mb", "0"])), 2);
    assert_eq!(code(&acabe(dir.path(), &["verify", "missing.json"])), 2);
    fs::write(dir.path().join("junk.json"), "{\"version\": 1}").unwrap();
    assert_eq!(code(&acabe(dir.path(), &["verify", "junk.json"])), 2);
}

#[test]
fn demo_adversaries_hold() {
    let dir = tempfile::tempdir().unwrap();
    let o = acabe(
        dir.path(),
        &[
            "demo",
            "gamefi",
            "--adversary",
            "dishonest_authority",
            "--adversary",
            "impersonator",
            "--adversary",
            "cross_gid_colluders",
            "--adversary",
            "key_discloser",
        ],
    );
    let out = stdout(&o);
    assert_eq!(code(&o), 0, "{out}");
    assert_eq!(out.matches(": held;").count(), 4, "{out}");
    assert!(out.contains("treasury 100"), "{out}");
}

#[test]
fn demo_reads_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/gamefi.json");
    let o = acabe(dir.path(), &["demo", path.to_str().unwrap(), "--as", "player2", "--trace", "t.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let builtin = acabe(dir.path(), &["demo", "gamefi", "--as", "player2", "--trace", "b.jsonl"]);
    assert_eq!(code(&builtin), 0);
    assert_eq!(fs::read(dir.path().join("t.jsonl")).unwrap(), fs::read(dir.path().join("b.jsonl")).unwrap());
}

#[test]
fn bench_sizes_header_is_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = acabe(dir.path(), &["bench", "sizes", "--max-attrs", "1"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "schema_version,metric,attrs,payload_bytes,value,unit");
    assert_eq!(lines[0], CSV_HEADER);
    // One sweep point: a row per size metric.
    assert_eq!(lines.len(), 4, "{out}");
    assert!(lines[1..].iter().all(|l| l.starts_with("1,") && l.contains(",1,0,")), "{out}");
}

#[test]
fn bench_times_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = acabe(dir.path(), &["bench", "times", "--max-attrs", "1", "--payload-mb", "0.01", "--trials", "1"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.starts_with(CSV_HEADER), "{out}");
    for metric in ["keygen_ms_per_attr", "enc_key_ms_per_attr", "gen_proofs_ms_per_attr", "get_key_ms_per_attr", "hybrid_encrypt_ms", "hybrid_decrypt_ms"] {
        assert!(out.contains(metric), "{metric} missing: {out}");
    }
}

#[test]
fn verify_honest_then_tampered() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&acabe(dir.path(), &["issue", "--out", "honest.json", "--seed", "3"])), 0);
    let o = acabe(dir.path(), &["verify", "honest.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "check_key: accept\ncheck_key_pc: accept\n");

    for field in ["ek0", "ek1", "w3"] {
        let out = format!("bad-{field}.json");
        assert_eq!(code(&acabe(dir.path(), &["tamper", "honest.json", "--field", field, "--out", &out])), 0);
        let o = acabe(dir.path(), &["verify", &out]);
        assert_eq!(code(&o), 3, "{field}");
        assert_eq!(stdout(&o), "check_key: reject\ncheck_key_pc: reject\n");
    }
}

#[test]
fn journal_replays_and_detects_edits() {
    let dir = tempfile::tempdir().unwrap();
    let o = acabe(dir.path(), &["demo", "gamefi", "--journal", "j.jsonl"]);
    assert_eq!(code(&o), 4, "player3 fails in the full scenario");
    let o = acabe(dir.path(), &["journal", "replay", "j.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("funds conserved"));

    // Rewrite the recorded outcome of the first deposit.
    let text = fs::read_to_string(dir.path().join("j.jsonl")).unwrap();
    let edited = text.replacen("\"amount\":10", "\"amount\":11", 1);
    assert_ne!(edited, text);
    fs::write(dir.path().join("edited.jsonl"), edited).unwrap();
    let o = acabe(dir.path(), &["journal", "replay", "edited.jsonl"]);
    assert_eq!(code(&o), 4, "{}", stdout(&o));
    assert!(stdout(&o).contains("diverge"), "{}", stdout(&o));
}

#[test]
fn trace_replay_matches_and_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    acabe(dir.path(), &["demo", "gamefi", "--as", "player2", "--trace", "t.jsonl"]);
    let o = acabe(dir.path(), &["replay", "t.jsonl", "gamefi", "--as", "player2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let o = acabe(dir.path(), &["replay", "t.jsonl", "gamefi", "--as", "player2", "--seed", "7"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).starts_with("trace diverges at step "), "{}", stdout(&o));
}
