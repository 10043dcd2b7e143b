//! Subcommand bodies. Each returns the process exit code.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use acabe::cpabe::{global_setup, Gid};
use acabe::ledger::{self, Ledger, LedgerOp, ReplayError};
use acabe::protocol::{self, Adversary, Phase, ProtocolError, ScenarioConfig, Trace, UserStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bench::{self, TimesConfig};
use crate::envelope::{tamper, Field, VerifyEnvelope};

pub const OK: u8 = 0;
pub const INTERNAL: u8 = 1;
pub const USAGE: u8 = 2;
pub const VERDICT: u8 = 3;
pub const PHASE: u8 = 4;

fn usage(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    USAGE
}

fn read(path: &Path) -> Result<String, u8> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), u8> {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// A built-in scenario name or a JSON file.
pub fn load_scenario(target: &str) -> Result<ScenarioConfig, u8> {
    if let Some(cfg) = ScenarioConfig::builtin(target) {
        return Ok(cfg);
    }
    let path = Path::new(target);
    if !path.exists() {
        return Err(usage(format!("`{target}` is neither a built-in scenario nor a file")));
    }
    ScenarioConfig::from_json(&read(path)?).map_err(usage)
}

pub struct DemoArgs {
    pub target: String,
    pub as_user: Option<String>,
    pub adversaries: Vec<String>,
    pub seed: Option<u64>,
    pub trace: Option<PathBuf>,
    pub journal: Option<PathBuf>,
}

/// Load a scenario and apply the command-line overrides.
pub fn prepare(target: &str, seed: Option<u64>, adversaries: &[String], as_user: Option<&str>) -> Result<ScenarioConfig, u8> {
    let mut cfg = load_scenario(target)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    for tag in adversaries {
        match tag.parse::<Adversary>() {
            Ok(a) if !cfg.adversaries.contains(&a) => cfg.adversaries.push(a),
            Ok(_) => {}
            Err(e) => return Err(usage(e)),
        }
    }
    if let Some(u) = as_user {
        cfg = cfg.only_user(u).map_err(usage)?;
    }
    Ok(cfg)
}

pub fn demo(args: &DemoArgs, out: &mut dyn Write) -> io::Result<u8> {
    let cfg = match prepare(&args.target, args.seed, &args.adversaries, args.as_user.as_deref()) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    let report = match protocol::run_instance(&cfg) {
        Ok(r) => r,
        Err(ProtocolError::Config(m)) => return Ok(usage(m)),
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(PHASE);
        }
    };

    writeln!(out, "scenario {} seed {} gid {}", cfg.name, cfg.seed, report.gid)?;
    for phase in [Phase::Setup, Phase::Encrypt, Phase::Request, Phase::Verify, Phase::Access] {
        let n = report.trace.events.iter().filter(|e| e.phase == phase).count();
        writeln!(out, "  {:<8} {n} events", format!("{phase:?}").to_lowercase())?;
    }
    for u in &report.users {
        match (&u.status, &u.plaintext) {
            (UserStatus::Recovered, Some(m)) => {
                let shown = match std::str::from_utf8(m) {
                    Ok(t) => t.to_string(),
                    Err(_) => format!("hex {}", hex::encode(m)),
                };
                writeln!(out, "{}: {} ({} bytes): {shown}", u.user, u.status.reason(), m.len())?
            }
            _ => writeln!(out, "{}: {}", u.user, u.status.reason())?,
        }
    }
    for a in &report.adversaries {
        let verdict = if a.held { "held" } else { "NOT HELD" };
        writeln!(out, "adversary {}: {verdict}; expected {}; observed {}", a.tag, a.expected, a.observed)?;
    }
    let conserved = if report.conserved { "conserved" } else { "NOT CONSERVED" };
    writeln!(out, "ledger: {} txs, funds {conserved}, treasury {}", report.ledger.next_seq(), report.ledger.treasury())?;

    let trace_path = args.trace.clone().unwrap_or_else(|| PathBuf::from(format!("{}.trace.jsonl", cfg.name)));
    if let Err(code) = write_file(&trace_path, &report.trace.to_jsonl()) {
        return Ok(code);
    }
    writeln!(out, "trace: {} sha256 {}", trace_path.display(), report.trace.digest())?;
    if let Some(j) = &args.journal {
        let mut buf = Vec::new();
        report.ledger.write_journal(&mut buf)?;
        if let Err(code) = write_file(j, &String::from_utf8_lossy(&buf)) {
            return Ok(code);
        }
        writeln!(out, "journal: {}", j.display())?;
    }

    let ok = if report.adversaries.is_empty() {
        report.users.iter().all(|u| u.status == UserStatus::Recovered)
    } else {
        report.adversaries_held()
    };
    Ok(if ok && report.conserved { OK } else { PHASE })
}

pub fn bench_sizes(max_attrs: usize, step: usize, seed: u64, out: &mut dyn Write) -> io::Result<u8> {
    match bench::sizes(max_attrs, step, seed).and_then(|r| bench::write_csv(&r, out)) {
        Ok(()) => Ok(OK),
        Err(e) => Ok(usage(e)),
    }
}

pub fn bench_times(cfg: &TimesConfig, out: &mut dyn Write) -> io::Result<u8> {
    match bench::times(cfg).and_then(|r| bench::write_csv(&r, out)) {
        Ok(()) => Ok(OK),
        Err(e) => Ok(usage(e)),
    }
}

fn load_envelope(path: &Path) -> Result<VerifyEnvelope, u8> {
    VerifyEnvelope::from_json(&read(path)?).map_err(|e| usage(format!("malformed envelope: {e}")))
}

pub fn verify(path: &Path, out: &mut dyn Write) -> io::Result<u8> {
    let env = match load_envelope(path) {
        Ok(e) => e,
        Err(code) => return Ok(code),
    };
    let gp = match env.params() {
        Ok(gp) => gp,
        Err(e) => return Ok(usage(e)),
    };
    let v = env.verify(&gp);
    let word = |b: bool| if b { "accept" } else { "reject" };
    writeln!(out, "check_key: {}", word(v.check_key))?;
    writeln!(out, "check_key_pc: {}", word(v.check_key_pc))?;
    if !v.agree() {
        writeln!(out, "internal error: verifiers disagree")?;
        return Ok(INTERNAL);
    }
    Ok(if v.check_key { OK } else { VERDICT })
}

pub fn tamper_file(path: &Path, field: Field, from_bit: usize, dest: &Path, out: &mut dyn Write) -> io::Result<u8> {
    let env = match load_envelope(path) {
        Ok(e) => e,
        Err(code) => return Ok(code),
    };
    let (bad, bit) = tamper(&env, field, from_bit);
    if let Err(code) = write_file(dest, &serde_json::to_string_pretty(&bad)?) {
        return Ok(code);
    }
    if bit == usize::MAX {
        writeln!(out, "{field}: no nearby bit flip decodes; added the generator instead")?;
    } else {
        writeln!(out, "{field}: flipped bit {bit}")?;
    }
    Ok(OK)
}

pub fn issue(dest: &Path, attr: &str, gid: &str, user: &str, seed: u64, out: &mut dyn Write) -> io::Result<u8> {
    let gp = global_setup("bn254").expect("bn254 is supported");
    let gid = match Gid::new(gid) {
        Ok(g) => g,
        Err(e) => return Ok(usage(e)),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let env = match VerifyEnvelope::issue(&gp, &gid, attr, user, &mut rng) {
        Ok(e) => e,
        Err(e) => return Ok(usage(e)),
    };
    if let Err(code) = write_file(dest, &serde_json::to_string_pretty(&env)?) {
        return Ok(code);
    }
    writeln!(out, "wrote {} for {attr} under {gid}", dest.display())?;
    Ok(OK)
}

pub fn journal_replay(path: &Path, out: &mut dyn Write) -> io::Result<u8> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => return Ok(usage(format!("{}: {e}", path.display()))),
    };
    let journal = match ledger::read_journal(BufReader::new(file)) {
        Ok(j) => j,
        Err(e) => return Ok(usage(e)),
    };
    let curve = match journal.first().map(|e| &e.op) {
        Some(LedgerOp::Genesis { curve_id, .. }) => *curve_id,
        _ => return Ok(usage("journal does not start with genesis")),
    };
    let gp = global_setup(curve.as_str()).expect("journal curve parsed");
    match Ledger::replay(gp, &journal) {
        Ok(l) => {
            writeln!(out, "replayed {} txs, {} events", journal.len(), l.events().len())?;
            let conserved = Some(l.total_funds()) == l.genesis_total();
            writeln!(out, "state sha256 {}", hex::encode(l.state_digest()))?;
            writeln!(out, "funds {}", if conserved { "conserved" } else { "NOT CONSERVED" })?;
            Ok(if conserved { OK } else { PHASE })
        }
        Err(e @ ReplayError::Divergence { .. }) => {
            writeln!(out, "{e}")?;
            Ok(PHASE)
        }
        Err(e) => Ok(usage(e)),
    }
}

pub struct ReplayArgs {
    pub trace: PathBuf,
    pub target: String,
    pub as_user: Option<String>,
    pub adversaries: Vec<String>,
    pub seed: Option<u64>,
}

/// The overrides must match the ones the trace was recorded with.
pub fn replay_trace(args: &ReplayArgs, out: &mut dyn Write) -> io::Result<u8> {
    let trace = &args.trace;
    let recorded = match read(trace).and_then(|t| Trace::from_jsonl(&t).map_err(|e| usage(format!("malformed trace: {e}")))) {
        Ok(t) => t,
        Err(code) => return Ok(code),
    };
    let cfg = match prepare(&args.target, args.seed, &args.adversaries, args.as_user.as_deref()) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    let regenerated = match protocol::run_instance(&cfg) {
        Ok(r) => r.trace,
        Err(e) => return Ok(usage(e)),
    };
    match protocol::first_divergence(&recorded, &regenerated) {
        None => {
            writeln!(out, "replay matches: sha256 {}", regenerated.digest())?;
            Ok(OK)
        }
        Some(d) => {
            writeln!(out, "{d}")?;
            Ok(PHASE)
        }
    }
}
