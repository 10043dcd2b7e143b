//! Five-phase sharing flow (setup, encrypt, request, verify, access) run
//! across in-process parties with a round-based scheduler.
//!
//! Every party draws from one seeded RNG and every ledger effect goes
//! through the ledger's single-writer queue, so a config and seed fully
//! determine the trace.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accountability::{abe_enc_key, gen_proofs, get_key_checked, KeySubmission};
use crate::algebra::{self, CurveId, Scalar};
use crate::cpabe::{
    auth_setup, authority_of, global_setup, hybrid_decrypt, hybrid_encrypt, AbeError, AuthorityKeyPair,
    AuthorityPublicKey, DecryptionKey, Gid, GlobalParams, HybridCiphertext, UserKeyPair,
};
use crate::dsp::{self, Dsp, DspError, GrantToken};
use crate::ledger::{Address, Amount, Ledger, LedgerError, LedgerEvent, Tx, Verdict};
use crate::policy::{self, parse_policy, AttributeSet, PolicyAst};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("unknown adversary `{0}`")]
    UnknownAdversary(String),
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("abe: {0}")]
    Abe(#[from] AbeError),
    #[error("storage: {0}")]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Divergence(#[from] Divergence),
}

// ---------------------------------------------------------------------------
// Scenario config

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    DishonestAuthority,
    CrossGidColluders,
    Impersonator,
    KeyDiscloser,
}

impl Adversary {
    pub const ALL: [Adversary; 4] =
        [Adversary::DishonestAuthority, Adversary::CrossGidColluders, Adversary::Impersonator, Adversary::KeyDiscloser];

    pub fn as_str(self) -> &'static str {
        match self {
            Adversary::DishonestAuthority => "dishonest_authority",
            Adversary::CrossGidColluders => "cross_gid_colluders",
            Adversary::Impersonator => "impersonator",
            Adversary::KeyDiscloser => "key_discloser",
        }
    }
}

impl fmt::Display for Adversary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Adversary {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Adversary::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ProtocolError::UnknownAdversary(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorityConfig {
    pub id: String,
    /// Attribute names this authority may issue, without the `@id` suffix.
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stake: Option<Amount>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Text { text: String },
    Hex {
        #[serde(with = "algebra::hex_bytes")]
        hex: Vec<u8>,
    },
}

impl Payload {
    pub fn bytes(&self) -> Vec<u8> {
        match self {
            Payload::Text { text } => text.as_bytes().to_vec(),
            Payload::Hex { hex } => hex.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerConfig {
    pub address: String,
    pub data: Payload,
    pub policy: String,
    pub owner_val: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub address: String,
    /// Full attribute words, e.g. `level25@AUTH1`.
    pub attributes: Vec<String>,
    pub deposit: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_curve")]
    pub curve: String,
    #[serde(default = "default_min_stake")]
    pub min_stake: Amount,
    #[serde(default = "default_balance")]
    pub initial_balance: Amount,
    pub authorities: Vec<AuthorityConfig>,
    pub owner: OwnerConfig,
    pub users: Vec<UserConfig>,
    #[serde(default)]
    pub adversaries: Vec<Adversary>,
}

fn default_curve() -> String {
    "bn254".into()
}

fn default_min_stake() -> Amount {
    100
}

fn default_balance() -> Amount {
    1_000
}

const COLLUDER_A: &str = "colluder-a";
const COLLUDER_B: &str = "colluder-b";
const IMPERSONATOR: &str = "impersonator";
const RECIPIENT: &str = "key-recipient";
const VICTIM: &str = "victim";

impl ScenarioConfig {
    /// The trading scenario: player1 sells a skin under
    /// `( level25@AUTH1 OR cityLA@AUTH2 ) AND female@AUTH3`.
    pub fn gamefi() -> Self {
        let auth = |id: &str, attrs: &[&str]| AuthorityConfig {
            id: id.into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            stake: None,
        };
        let user = |addr: &str, attrs: &[&str]| UserConfig {
            address: addr.into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            deposit: 10,
        };
        ScenarioConfig {
            name: "gamefi".into(),
            seed: 2024,
            curve: default_curve(),
            min_stake: default_min_stake(),
            initial_balance: default_balance(),
            authorities: vec![
                auth("AUTH1", &["level25", "level28"]),
                auth("AUTH2", &["cityLA", "cityPHX"]),
                auth("AUTH3", &["female", "male"]),
            ],
            owner: OwnerConfig {
                address: "player1".into(),
                data: Payload::Text { text: "skin:aurora-blade;nft:0x5f3a9c21e07b44d8".into() },
                policy: "( level25@AUTH1 OR cityLA@AUTH2 ) AND female@AUTH3".into(),
                owner_val: 3,
            },
            users: vec![
                user("player2", &["level25@AUTH1", "cityPHX@AUTH2", "female@AUTH3"]),
                user("player3", &["level28@AUTH1", "cityLA@AUTH2", "male@AUTH3"]),
            ],
            adversaries: Vec::new(),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        (name == "gamefi").then(Self::gamefi)
    }

    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keep only `user` among the configured users.
    pub fn only_user(mut self, user: &str) -> Result<Self, ProtocolError> {
        self.users.retain(|u| u.address == user);
        if self.users.is_empty() {
            return Err(ProtocolError::Config(format!("no user `{user}` in scenario")));
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Config(m));
        CurveId::from_str(&self.curve).map_err(|e| ProtocolError::Config(e.to_string()))?;
        if self.authorities.is_empty() {
            return bad("no authorities".into());
        }
        let mut ns: BTreeMap<&str, &[String]> = BTreeMap::new();
        for a in &self.authorities {
            if a.id.is_empty() || a.id.contains(['@', ' ']) {
                return bad(format!("bad authority id `{}`", a.id));
            }
            if ns.insert(&a.id, &a.attributes).is_some() {
                return bad(format!("duplicate authority `{}`", a.id));
            }
            if a.stake.is_some_and(|s| s < self.min_stake) {
                return bad(format!("authority `{}` stakes below the minimum", a.id));
            }
        }
        if self.owner.data.bytes().is_empty() {
            return bad("owner data is empty".into());
        }
        let ast = parse_policy(&self.owner.policy).map_err(|e| ProtocolError::Config(e.to_string()))?;
        for leaf in ast.leaves() {
            match authority_of(leaf) {
                Ok(a) if ns.contains_key(a) => {}
                _ => return bad(format!("policy attribute `{leaf}` names no configured authority")),
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        let reserved = [self.owner.address.as_str(), COLLUDER_A, COLLUDER_B, IMPERSONATOR, RECIPIENT, VICTIM];
        for u in &self.users {
            if !seen.insert(u.address.as_str()) || reserved.contains(&u.address.as_str()) || ns.contains_key(u.address.as_str()) {
                return bad(format!("user address `{}` is duplicated or reserved", u.address));
            }
            if u.deposit == 0 {
                return bad(format!("user `{}` has a zero deposit", u.address));
            }
            for attr in &u.attributes {
                let ok = attr.rsplit_once('@').is_some_and(|(name, a)| ns.get(a).is_some_and(|names| names.iter().any(|n| n == name)));
                if !ok {
                    return bad(format!("user `{}` attribute `{attr}` is outside every namespace", u.address));
                }
            }
        }
        let adv = |a| self.adversaries.contains(&a);
        if adv(Adversary::KeyDiscloser) && self.users.is_empty() {
            return bad("adversary needs at least one configured user".into());
        }
        if adv(Adversary::CrossGidColluders) && minimal_satisfying_set(&ast).len() < 2 {
            return bad("cross_gid_colluders needs a policy whose minimal satisfying sets have two or more attributes".into());
        }
        Ok(())
    }
}

/// A satisfying set none of whose proper subsets satisfy.
pub fn minimal_satisfying_set(ast: &PolicyAst) -> Vec<String> {
    fn pick(ast: &PolicyAst, out: &mut Vec<String>) {
        match ast {
            PolicyAst::Leaf(w) => {
                if !out.contains(w) {
                    out.push(w.clone());
                }
            }
            PolicyAst::Gate { op: policy::Gate::And, left, right } => {
                pick(left, out);
                pick(right, out);
            }
            PolicyAst::Gate { op: policy::Gate::Or, left, right } => {
                let (mut l, mut r) = (Vec::new(), Vec::new());
                pick(left, &mut l);
                pick(right, &mut r);
                for w in if r.len() < l.len() { r } else { l } {
                    if !out.contains(&w) {
                        out.push(w);
                    }
                }
            }
        }
    }
    let mut set = Vec::new();
    pick(ast, &mut set);
    let mut i = 0;
    while i < set.len() {
        let without: AttributeSet = set.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| w.as_str()).collect();
        if policy::eval_ast_oracle(&without, ast) {
            set.remove(i);
        } else {
            i += 1;
        }
    }
    set
}

// ---------------------------------------------------------------------------
// Trace

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    Encrypt,
    Request,
    Verify,
    Access,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceKind {
    GlobalSetup { curve: CurveId },
    AuthorityRegistered { stake: Amount },
    UserRegistered { pk: String },
    Encrypted { gid: Gid, policy: String, rows: usize, bytes: usize, digest: String },
    Stored { gid: Gid, digest: String },
    Expected { gid: Gid, owner_val: Amount },
    Deposited { gid: Gid, amount: Amount },
    DepositRejected { gid: Gid, reason: String },
    /// The ledger notifies the authorities named in the policy.
    KeyRequested { gid: Gid, user: String, attrs: Vec<String> },
    KeyIssued { gid: Gid, user: String, attr: String, digest: String },
    KeyAccepted { gid: Gid, user: String, attr: String },
    KeySlashed { gid: Gid, user: String, attr: String, forfeited: Amount },
    SubmissionRejected { gid: Gid, user: String, attr: String, reason: String },
    Settled { gid: Gid, owner_amount: Amount, per_authority: Amount, authorities: usize },
    NotSatisfied { gid: Gid, attrs: Vec<String> },
    SettlementFailed { gid: Gid, reason: String },
    Withdrawn { gid: Gid, amount: Amount },
    FetchGranted { gid: Gid, grant_seq: u64, digest: String },
    FetchDenied { gid: Gid, grant_seq: u64, reason: String },
    KeyRecovered { gid: Gid, attr: String, record_seq: u64 },
    Decrypted { gid: Gid, digest: String, matches: bool },
    DecryptFailed { gid: Gid, reason: String },
    AdversaryVerdict { tag: Adversary, expected: String, observed: String, held: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub phase: Phase,
    pub actor: String,
    /// Ledger sequence number of the transaction this event reflects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Trace { events })
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_json<T: Serialize>(x: &T) -> String {
    digest_hex(&serde_json::to_vec(x).expect("serializable"))
}

// ---------------------------------------------------------------------------
// Outcomes

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserStatus {
    Recovered,
    InsufficientDeposit,
    PolicyNotSatisfied,
    AccessDenied,
    DecryptFailed,
}

impl UserStatus {
    pub fn reason(self) -> &'static str {
        match self {
            UserStatus::Recovered => "plaintext recovered",
            UserStatus::InsufficientDeposit => "insufficient deposit",
            UserStatus::PolicyNotSatisfied => "policy not satisfied",
            UserStatus::AccessDenied => "access denied",
            UserStatus::DecryptFailed => "decryption failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub user: Address,
    pub status: UserStatus,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_hex")]
    pub plaintext: Option<Vec<u8>>,
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?.map(|s| hex::decode(s).map_err(serde::de::Error::custom)).transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryOutcome {
    pub tag: Adversary,
    pub expected: String,
    pub observed: String,
    pub held: bool,
}

pub struct RunReport {
    pub gid: Gid,
    pub trace: Trace,
    pub users: Vec<UserOutcome>,
    pub adversaries: Vec<AdversaryOutcome>,
    pub ledger: Ledger,
    /// Total funds matched genesis after every phase.
    pub conserved: bool,
}

impl RunReport {
    pub fn user(&self, address: &str) -> Option<&UserOutcome> {
        self.users.iter().find(|u| u.user.as_str() == address)
    }

    pub fn adversaries_held(&self) -> bool {
        self.adversaries.iter().all(|a| a.held)
    }
}

// ---------------------------------------------------------------------------
// Scheduler

struct World<'c> {
    cfg: &'c ScenarioConfig,
    gp: GlobalParams,
    rng: ChaCha20Rng,
    ledger: Ledger,
    dsp: Dsp,
    auths: BTreeMap<String, AuthorityKeyPair>,
    pks: BTreeMap<String, AuthorityPublicKey>,
    users: BTreeMap<String, UserKeyPair>,
    trace: Trace,
    conserved: bool,
    data: Vec<u8>,
    /// Next issuance is corrupted by its authority.
    tamper_next: bool,
    second: Option<(Gid, HybridCiphertext)>,
}

impl<'c> World<'c> {
    fn push(&mut self, phase: Phase, actor: &str, seq: Option<u64>, kind: TraceKind) {
        let step = self.trace.events.len() as u64;
        self.trace.events.push(TraceEvent { step, phase, actor: actor.to_string(), seq, kind });
    }

    fn last_seq(&self) -> Option<u64> {
        self.ledger.journal().last().map(|j| j.seq)
    }

    fn audit(&mut self) {
        if Some(self.ledger.total_funds()) != self.ledger.genesis_total() {
            self.conserved = false;
        }
    }

    fn setup(cfg: &'c ScenarioConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        let gp = global_setup(&cfg.curve)?;
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

        let mut parties: Vec<String> = vec![cfg.owner.address.clone()];
        parties.extend(cfg.authorities.iter().map(|a| a.id.clone()));
        parties.extend(cfg.users.iter().map(|u| u.address.clone()));
        parties.extend(synthetic_parties(cfg).into_iter().map(String::from));
        let balances = parties.iter().map(|p| (Address::new(p.clone()), cfg.initial_balance)).collect();
        let ledger = Ledger::with_genesis(gp.clone(), cfg.min_stake, balances)?;
        let dsp = Dsp::in_memory(gp.clone());

        let mut w = World {
            cfg,
            gp: gp.clone(),
            rng: ChaCha20Rng::seed_from_u64(0),
            ledger,
            dsp,
            auths: BTreeMap::new(),
            pks: BTreeMap::new(),
            users: BTreeMap::new(),
            trace: Trace::default(),
            conserved: true,
            data: cfg.owner.data.bytes(),
            tamper_next: false,
            second: None,
        };
        w.push(Phase::Setup, "ledger", Some(0), TraceKind::GlobalSetup { curve: gp.curve_id() });

        for a in &cfg.authorities {
            let kp = auth_setup(&gp, &a.id, &mut rng);
            let stake = a.stake.unwrap_or(cfg.min_stake);
            let r = w.ledger.register_authority(Tx::new(a.id.as_str(), stake), kp.public.clone())?;
            w.push(Phase::Setup, &a.id, Some(r.seq), TraceKind::AuthorityRegistered { stake });
            w.pks.insert(a.id.clone(), kp.public.clone());
            w.auths.insert(a.id.clone(), kp);
        }
        let mut users: Vec<String> = cfg.users.iter().map(|u| u.address.clone()).collect();
        users.extend(synthetic_parties(cfg).into_iter().map(String::from));
        for u in users {
            let kp = UserKeyPair::generate(&gp, &mut rng);
            let r = w.ledger.register_user(Tx::call(u.as_str()), kp.pk)?;
            w.push(Phase::Setup, &u, Some(r.seq), TraceKind::UserRegistered { pk: algebra::to_hex(&kp.pk) });
            w.users.insert(u, kp);
        }
        w.rng = rng;
        w.audit();
        Ok(w)
    }

    fn new_gid(&mut self) -> Gid {
        let mut b = [0u8; 8];
        self.rng.fill_bytes(&mut b);
        Gid::new(format!("{}-{}", self.cfg.name, hex::encode(b))).expect("non-empty")
    }

    /// Owner encrypts the data, stores it and posts the expectation.
    fn encrypt(&mut self) -> Result<(Gid, HybridCiphertext), ProtocolError> {
        let owner = self.cfg.owner.address.clone();
        let gid = self.new_gid();
        let hc = hybrid_encrypt(&self.gp, &self.data, &self.cfg.owner.policy, &self.pks, &mut self.rng)?;
        self.push(
            Phase::Encrypt,
            &owner,
            None,
            TraceKind::Encrypted {
                gid: gid.clone(),
                policy: self.cfg.owner.policy.clone(),
                rows: hc.abe.rows.len(),
                bytes: hc.abe.encoded_len() + hc.ct.len(),
                digest: digest_json(&hc),
            },
        );
        let stored = self.dsp.store(&Address::new(owner.clone()), &gid, hc.clone())?;
        self.push(Phase::Encrypt, "dsp", None, TraceKind::Stored { gid: gid.clone(), digest: hex::encode(stored) });
        self.ledger.expect(Tx::call(owner.as_str()), &gid, self.cfg.owner.owner_val, &self.cfg.owner.policy)?;
        let seq = self.last_seq();
        self.push(Phase::Encrypt, &owner, seq, TraceKind::Expected { gid: gid.clone(), owner_val: self.cfg.owner.owner_val });
        self.audit();
        Ok((gid, hc))
    }

    fn second_instance(&mut self) -> Result<(Gid, HybridCiphertext), ProtocolError> {
        if self.second.is_none() {
            self.second = Some(self.encrypt()?);
        }
        Ok(self.second.clone().expect("just set"))
    }

    fn deposit(&mut self, gid: &Gid, user: &str, amount: Amount) -> bool {
        let res = self.ledger.deposit(Tx::new(user, amount), gid);
        let seq = self.last_seq();
        match &res {
            Ok(_) => self.push(Phase::Request, user, seq, TraceKind::Deposited { gid: gid.clone(), amount }),
            Err(e) => self.push(Phase::Request, user, seq, TraceKind::DepositRejected { gid: gid.clone(), reason: e.to_string() }),
        }
        self.audit();
        res.is_ok()
    }

    /// The ledger notifies the authorities named in the policy; each issues
    /// an encrypted key and proof for every requested attribute it owns.
    fn issue(&mut self, gid: &Gid, user: &str, attrs: &[String]) -> Result<(), ProtocolError> {
        let ast = parse_policy(&self.cfg.owner.policy).expect("validated");
        let named: Vec<&str> = ast.leaves().into_iter().filter_map(|l| authority_of(l).ok()).collect();
        let requested: Vec<String> = attrs
            .iter()
            .filter(|a| authority_of(a).is_ok_and(|t| named.contains(&t)))
            .cloned()
            .collect();
        self.push(Phase::Request, "ledger", None, TraceKind::KeyRequested { gid: gid.clone(), user: user.into(), attrs: requested.clone() });
        let pk_u = self.users[user].pk;
        for attr in requested {
            let theta = authority_of(&attr)?.to_string();
            let sk = &self.auths[&theta];
            let (ek, witness) = abe_enc_key(gid, &self.gp, &attr, sk, &pk_u, &mut self.rng)?;
            let mut proof = gen_proofs(&self.gp, &witness, &ek, &mut self.rng);
            if std::mem::take(&mut self.tamper_next) {
                proof.w2 += Scalar::from(1u64);
            }
            let sub = KeySubmission::new(&self.gp, user, ek, proof);
            self.push(Phase::Verify, &theta, None, TraceKind::KeyIssued { gid: gid.clone(), user: user.into(), attr: attr.clone(), digest: digest_json(&sub) });
            let res = self.ledger.submit_key(Tx::call(theta.as_str()), sub);
            let seq = self.last_seq();
            let kind = match res {
                Ok(Verdict::Accepted) => TraceKind::KeyAccepted { gid: gid.clone(), user: user.into(), attr },
                Ok(Verdict::Slashed) => {
                    let forfeited = match self.ledger.events().last().map(|e| &e.event) {
                        Some(LedgerEvent::KeySlashed { forfeited, .. }) => *forfeited,
                        _ => 0,
                    };
                    TraceKind::KeySlashed { gid: gid.clone(), user: user.into(), attr, forfeited }
                }
                Err(e) => TraceKind::SubmissionRejected { gid: gid.clone(), user: user.into(), attr, reason: e.to_string() },
            };
            self.push(Phase::Verify, "ledger", seq, kind);
            self.audit();
        }
        Ok(())
    }

    /// Settle, or withdraw the deposit and report why not.
    fn settle_or_withdraw(&mut self, gid: &Gid, user: &str) -> Result<Result<(), UserStatus>, ProtocolError> {
        let addr = Address::new(user);
        let res = self.ledger.try_settle(gid, &addr);
        let seq = self.last_seq();
        let status = match res {
            Ok(true) => {
                let (owner_amount, per_authority, authorities) = match self.ledger.events().last().map(|e| &e.event) {
                    Some(LedgerEvent::Rewarded { owner_amount, authorities, .. }) => {
                        (*owner_amount, authorities.first().map_or(0, |a| a.1), authorities.len())
                    }
                    _ => (0, 0, 0),
                };
                self.push(Phase::Verify, "ledger", seq, TraceKind::Settled { gid: gid.clone(), owner_amount, per_authority, authorities });
                self.audit();
                return Ok(Ok(()));
            }
            Ok(false) => {
                let attrs = self.ledger.verified_attrs(gid, &addr).iter().map(String::from).collect();
                self.push(Phase::Verify, "ledger", seq, TraceKind::NotSatisfied { gid: gid.clone(), attrs });
                UserStatus::PolicyNotSatisfied
            }
            Err(e) => {
                let status = match e {
                    LedgerError::InsufficientPool { .. } | LedgerError::NoDeposit => UserStatus::InsufficientDeposit,
                    _ => UserStatus::PolicyNotSatisfied,
                };
                self.push(Phase::Verify, "ledger", seq, TraceKind::SettlementFailed { gid: gid.clone(), reason: e.to_string() });
                status
            }
        };
        let amount = self.ledger.pool_of(&addr, gid);
        if amount > 0 && self.ledger.withdraw(Tx::call(user), gid).is_ok() {
            let seq = self.last_seq();
            self.push(Phase::Access, user, seq, TraceKind::Withdrawn { gid: gid.clone(), amount });
        }
        self.audit();
        Ok(Err(status))
    }

    /// Recover usable keys from the accepted ledger records.
    fn recover_keys(&mut self, gid: &Gid, user: &str) -> Vec<DecryptionKey> {
        let y = self.users[user].y;
        let records: Vec<_> = self.ledger.records(gid, &Address::new(user)).to_vec();
        let mut keys = Vec::new();
        for r in records.iter().filter(|r| r.verdict == Verdict::Accepted) {
            if let Ok(k) = get_key_checked(&self.gp, &r.ek, &self.pks[&r.issuer], &y) {
                self.push(Phase::Access, user, None, TraceKind::KeyRecovered { gid: gid.clone(), attr: r.attr.clone(), record_seq: r.seq });
                keys.push(k);
            }
        }
        keys
    }

    /// Sign a fresh DSP challenge and fetch.
    fn fetch_as(&mut self, requester: &str, signer: &str, gid: &Gid, token: &GrantToken) -> Result<HybridCiphertext, DspError> {
        self.dsp.sync_grants(self.ledger.events());
        let who = Address::new(requester);
        let ch = self.dsp.challenge(&who, gid);
        let sig = dsp::sign_request(&self.gp, &self.users[signer].y, token, ch, &mut self.rng);
        let res = self.dsp.fetch(&who, gid, token, ch, &sig);
        let kind = match &res {
            Ok(hc) => TraceKind::FetchGranted { gid: gid.clone(), grant_seq: token.seq, digest: digest_json(hc) },
            Err(e) => TraceKind::FetchDenied { gid: gid.clone(), grant_seq: token.seq, reason: e.to_string() },
        };
        self.push(Phase::Access, "dsp", None, kind);
        res
    }

    fn own_token(&mut self, gid: &Gid, user: &str) -> GrantToken {
        self.dsp.sync_grants(self.ledger.events());
        match self.dsp.grant(gid, &Address::new(user)) {
            Some(g) => g.into(),
            None => GrantToken { gid: gid.clone(), user: Address::new(user), seq: self.ledger.next_seq() },
        }
    }

    fn serve_user(&mut self, gid: &Gid, u: &UserConfig) -> Result<UserOutcome, ProtocolError> {
        let user = u.address.as_str();
        let outcome = |status, plaintext| UserOutcome { user: Address::new(user), status, plaintext };
        if !self.deposit(gid, user, u.deposit) {
            return Ok(outcome(UserStatus::InsufficientDeposit, None));
        }
        self.issue(gid, user, &u.attributes)?;
        if let Err(status) = self.settle_or_withdraw(gid, user)? {
            return Ok(outcome(status, None));
        }
        let token = self.own_token(gid, user);
        let Ok(hc) = self.fetch_as(user, user, gid, &token) else {
            return Ok(outcome(UserStatus::AccessDenied, None));
        };
        let keys = self.recover_keys(gid, user);
        match hybrid_decrypt(&self.gp, &hc, &keys) {
            Ok(m) => {
                let matches = m == self.data;
                self.push(Phase::Access, user, None, TraceKind::Decrypted { gid: gid.clone(), digest: digest_hex(&m), matches });
                let status = if matches { UserStatus::Recovered } else { UserStatus::DecryptFailed };
                Ok(outcome(status, Some(m)))
            }
            Err(e) => {
                self.push(Phase::Access, user, None, TraceKind::DecryptFailed { gid: gid.clone(), reason: e.to_string() });
                Ok(outcome(UserStatus::DecryptFailed, None))
            }
        }
    }

    fn verdict(&mut self, tag: Adversary, expected: &str, observed: String, held: bool) -> AdversaryOutcome {
        let seq = self.last_seq();
        self.push(
            Phase::Access,
            tag.as_str(),
            seq,
            TraceKind::AdversaryVerdict { tag, expected: expected.into(), observed: observed.clone(), held },
        );
        AdversaryOutcome { tag, expected: expected.into(), observed, held }
    }

    fn adversary_deposit(&self) -> Amount {
        self.cfg.owner.owner_val + 10
    }

    /// A fresh user requests a minimal satisfying set; the first authority
    /// to answer corrupts its proof.
    fn run_dishonest_authority(&mut self, gid: &Gid) -> Result<AdversaryOutcome, ProtocolError> {
        let pre_treasury = self.ledger.treasury();
        let ast = parse_policy(&self.cfg.owner.policy).expect("validated");
        self.tamper_next = true;
        self.obtain_keys(gid, VICTIM, &minimal_satisfying_set(&ast))?;
        self.tamper_next = false;
        let slash = self.ledger.events().iter().rev().find_map(|e| match &e.event {
            LedgerEvent::KeySlashed { gid: g, user, attr, issuer, forfeited } if g == gid => {
                Some((user.clone(), attr.clone(), issuer.clone(), *forfeited))
            }
            _ => None,
        });
        let expected = "slashed; treasury grows by one stake; attribute not recorded";
        let Some((user, attr, issuer, forfeited)) = slash else {
            return Ok(self.verdict(Adversary::DishonestAuthority, expected, "no slash recorded".into(), false));
        };
        let stake = self.cfg.authorities.iter().find(|a| a.id == issuer).and_then(|a| a.stake).unwrap_or(self.cfg.min_stake);
        let recorded = self.ledger.verified_attrs(gid, &user).contains(&attr);
        let delta = self.ledger.treasury() - pre_treasury;
        let held = forfeited == stake && delta == stake && !recorded && self.ledger.stake_of(&issuer) == 0;
        let observed = format!("{issuer} slashed on {attr} for {user}; treasury +{delta}; attribute recorded: {recorded}");
        Ok(self.verdict(Adversary::DishonestAuthority, expected, observed, held))
    }

    fn run_impersonator(&mut self, gid: &Gid) -> AdversaryOutcome {
        let mut denials = Vec::new();
        let mut granted = Vec::new();
        // In its own name: there is no settled event behind any token.
        let own = self.own_token(gid, IMPERSONATOR);
        match self.fetch_as(IMPERSONATOR, IMPERSONATOR, gid, &own) {
            Err(e) => denials.push(e.to_string()),
            Ok(_) => granted.push("own name"),
        }
        // Replaying a real grant under its own key.
        let victim = self.dsp.grants().find(|g| &g.gid == gid).cloned();
        if let Some(g) = victim {
            let token = GrantToken::from(&g);
            match self.fetch_as(g.user.as_str(), IMPERSONATOR, gid, &token) {
                Err(e) => denials.push(e.to_string()),
                Ok(_) => granted.push("replayed grant"),
            }
        }
        let held = granted.is_empty() && !denials.is_empty();
        let observed = if held { format!("denied {} attempt(s): {}", denials.len(), denials.join("; ")) } else { format!("granted: {}", granted.join(", ")) };
        self.verdict(Adversary::Impersonator, "storage denies every fetch", observed, held)
    }

    fn obtain_keys(&mut self, gid: &Gid, user: &str, attrs: &[String]) -> Result<Vec<DecryptionKey>, ProtocolError> {
        let amount = self.adversary_deposit();
        if !self.deposit(gid, user, amount) {
            return Ok(Vec::new());
        }
        self.issue(gid, user, attrs)?;
        let settled = self.settle_or_withdraw(gid, user)?;
        debug_assert!(settled.is_err(), "partial attribute sets never settle");
        Ok(self.recover_keys(gid, user))
    }

    fn run_colluders(&mut self, gid1: &Gid, hc1: &HybridCiphertext) -> Result<AdversaryOutcome, ProtocolError> {
        let (gid2, _) = self.second_instance()?;
        let ast = parse_policy(&self.cfg.owner.policy).expect("validated");
        let mut set = minimal_satisfying_set(&ast);
        let part_b = set.split_off(set.len() / 2);
        let keys_a = self.obtain_keys(gid1, COLLUDER_A, &set)?;
        let keys_b = self.obtain_keys(&gid2, COLLUDER_B, &part_b)?;

        // The storage is curious: assume the colluders hold C anyway.
        let pooled: Vec<DecryptionKey> = keys_a.iter().chain(&keys_b).cloned().collect();
        let pooled_res = hybrid_decrypt(&self.gp, hc1, &pooled);
        let relabelled: Vec<DecryptionKey> = keys_a
            .iter()
            .cloned()
            .chain(keys_b.iter().cloned().map(|mut k| {
                k.gid = gid1.clone();
                k
            }))
            .collect();
        let relabel_res = hybrid_decrypt(&self.gp, hc1, &relabelled);
        let describe = |r: &Result<Vec<u8>, AbeError>, data: &[u8]| match r {
            Err(e) => format!("error ({e})"),
            Ok(m) if m == data => "plaintext".to_string(),
            Ok(_) => "garbage".to_string(),
        };
        let held = pooled_res.is_err() && !matches!(&relabel_res, Ok(m) if m == &self.data) && keys_a.len() + keys_b.len() == pooled.len();
        for (r, who) in [(&pooled_res, COLLUDER_A), (&relabel_res, COLLUDER_B)] {
            let kind = match r {
                Ok(m) => TraceKind::Decrypted { gid: gid1.clone(), digest: digest_hex(m), matches: m == &self.data },
                Err(e) => TraceKind::DecryptFailed { gid: gid1.clone(), reason: e.to_string() },
            };
            self.push(Phase::Access, who, None, kind);
        }
        let observed = format!(
            "{} + {} keys across two GIDs; pooled: {}; relabelled: {}",
            keys_a.len(),
            keys_b.len(),
            describe(&pooled_res, &self.data),
            describe(&relabel_res, &self.data)
        );
        Ok(self.verdict(Adversary::CrossGidColluders, "decryption fails", observed, held))
    }

    fn run_discloser(&mut self, gid1: &Gid, discloser: &str) -> Result<AdversaryOutcome, ProtocolError> {
        let (gid2, hc2) = self.second_instance()?;
        let disclosed = self.recover_keys(gid1, discloser);
        let ast = parse_policy(&self.cfg.owner.policy).expect("validated");
        let mut partial = minimal_satisfying_set(&ast);
        partial.pop();
        let own = self.obtain_keys(&gid2, RECIPIENT, &partial)?;

        let mut notes = Vec::new();
        let mut held = true;
        if !own.is_empty() {
            let mixed: Vec<DecryptionKey> = disclosed.iter().chain(&own).cloned().collect();
            let r = hybrid_decrypt(&self.gp, &hc2, &mixed);
            let kind = match &r {
                Ok(m) => TraceKind::Decrypted { gid: gid2.clone(), digest: digest_hex(m), matches: m == &self.data },
                Err(e) => TraceKind::DecryptFailed { gid: gid2.clone(), reason: e.to_string() },
            };
            self.push(Phase::Access, RECIPIENT, None, kind);
            held &= matches!(r, Err(AbeError::MixedGid));
            notes.push(format!("mixed with own {} key(s): {}", own.len(), r.err().map_or("decrypted".into(), |e| e.to_string())));
        }
        let own_token = self.own_token(&gid2, RECIPIENT);
        let r = self.fetch_as(RECIPIENT, RECIPIENT, &gid2, &own_token);
        held &= r.is_err();
        notes.push(format!("fetch of second instance: {}", r.err().map_or("granted".into(), |e| e.to_string())));
        let stolen = self.own_token(gid1, discloser);
        let r = self.fetch_as(discloser, RECIPIENT, gid1, &stolen);
        held &= r.is_err();
        notes.push(format!("fetch with discloser's grant: {}", r.err().map_or("granted".into(), |e| e.to_string())));
        Ok(self.verdict(
            Adversary::KeyDiscloser,
            "disclosed keys do not combine across GIDs and do not unlock storage",
            notes.join("; "),
            held,
        ))
    }
}

fn synthetic_parties(cfg: &ScenarioConfig) -> Vec<&'static str> {
    let mut v = Vec::new();
    if cfg.adversaries.contains(&Adversary::CrossGidColluders) {
        v.extend([COLLUDER_A, COLLUDER_B]);
    }
    if cfg.adversaries.contains(&Adversary::Impersonator) {
        v.push(IMPERSONATOR);
    }
    if cfg.adversaries.contains(&Adversary::KeyDiscloser) {
        v.push(RECIPIENT);
    }
    if cfg.adversaries.contains(&Adversary::DishonestAuthority) {
        v.push(VICTIM);
    }
    v
}

/// Run one sharing instance: one GID, every configured user in order, then
/// the configured adversaries.
pub fn run_instance(cfg: &ScenarioConfig) -> Result<RunReport, ProtocolError> {
    let mut w = World::setup(cfg)?;
    let (gid, hc) = w.encrypt()?;

    let mut users = Vec::new();
    for u in &cfg.users {
        users.push(w.serve_user(&gid, u)?);
    }

    let mut adversaries = Vec::new();
    let mut tags = cfg.adversaries.clone();
    tags.sort();
    tags.dedup();
    // Slashing removes an authority from service, so it goes last.
    tags.sort_by_key(|t| *t == Adversary::DishonestAuthority);
    for tag in tags {
        let outcome = match tag {
            Adversary::DishonestAuthority => w.run_dishonest_authority(&gid)?,
            Adversary::Impersonator => w.run_impersonator(&gid),
            Adversary::CrossGidColluders => w.run_colluders(&gid, &hc)?,
            Adversary::KeyDiscloser => match users.iter().find(|u| u.status == UserStatus::Recovered) {
                Some(u) => w.run_discloser(&gid, &u.user.to_string())?,
                None => w.verdict(tag, "a recovering user discloses", "no user recovered keys to disclose".into(), false),
            },
        };
        adversaries.push(outcome);
    }
    w.audit();
    Ok(RunReport { gid, trace: w.trace, users, adversaries, ledger: w.ledger, conserved: w.conserved })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Divergence {
    /// `seq` is the latest ledger seq at or before `step`.
    #[error("trace diverges at step {step}{}", match seq { Some(s) => format!(" (ledger seq {s})"), None => String::new() })]
    At { step: u64, seq: Option<u64> },
}

/// Regenerate the trace from `cfg` and compare it with `trace`.
pub fn replay(trace: &Trace, cfg: &ScenarioConfig) -> Result<(), ProtocolError> {
    match first_divergence(trace, &run_instance(cfg)?.trace) {
        None => Ok(()),
        Some(d) => Err(d.into()),
    }
}

/// First step at which two traces differ, including one ending early.
pub fn first_divergence(recorded: &Trace, regenerated: &Trace) -> Option<Divergence> {
    let (a, b) = (&recorded.events, &regenerated.events);
    for i in 0..a.len().max(b.len()) {
        match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) if x == y => continue,
            (x, _) => {
                let src = if x.is_some() { a } else { b };
                let seq = src[..=i].iter().rev().find_map(|e| e.seq);
                return Some(Divergence::At { step: i as u64, seq });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamefi_player2_recovers_player3_does_not() {
        let cfg = ScenarioConfig::gamefi();
        let r = run_instance(&cfg).unwrap();
        let p2 = r.user("player2").unwrap();
        assert_eq!(p2.status, UserStatus::Recovered);
        assert_eq!(p2.plaintext.as_deref(), Some(cfg.owner.data.bytes().as_slice()));
        assert_eq!(r.user("player3").unwrap().status, UserStatus::PolicyNotSatisfied);
        assert!(r.conserved);
        // Pool 10, owner value 3, three authorities issued to player2.
        let owner = r.ledger.balance(&Address::new("player1"));
        assert_eq!(owner, 1_000 + 3 + 1);
        for a in ["AUTH1", "AUTH2", "AUTH3"] {
            assert_eq!(r.ledger.balance(&Address::new(a)), 1_000 - 100 + 2);
        }
        assert_eq!(r.ledger.balance(&Address::new("player3")), 1_000);
    }

    #[test]
    fn phases_are_ordered_per_party() {
        let r = run_instance(&ScenarioConfig::gamefi()).unwrap();
        let phases: Vec<Phase> = r.trace.events.iter().map(|e| e.phase).collect();
        let first_request = phases.iter().position(|p| *p == Phase::Request).unwrap();
        assert!(phases[..first_request].iter().all(|p| matches!(p, Phase::Setup | Phase::Encrypt)));
        let seqs: Vec<u64> = r.trace.events.iter().filter_map(|e| e.seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn deterministic_and_replayable() {
        let cfg = ScenarioConfig::gamefi();
        let a = run_instance(&cfg).unwrap().trace;
        replay(&a, &cfg).unwrap();
        let other = ScenarioConfig { seed: cfg.seed + 1, ..cfg.clone() };
        assert_ne!(run_instance(&other).unwrap().trace.digest(), a.digest());
        let mut cut = a.clone();
        cut.events.truncate(9);
        assert_eq!(first_divergence(&cut, &a), Some(Divergence::At { step: 9, seq: a.events[..=9].iter().rev().find_map(|e| e.seq) }));
        assert_eq!(Trace::from_jsonl(&a.to_jsonl()).unwrap(), a);
    }

    #[test]
    fn every_adversary_meets_its_prediction() {
        let cfg = ScenarioConfig { adversaries: Adversary::ALL.to_vec(), ..ScenarioConfig::gamefi() };
        let r = run_instance(&cfg).unwrap();
        assert_eq!(r.adversaries.len(), 4);
        for a in &r.adversaries {
            assert!(a.held, "{}: {}", a.tag, a.observed);
        }
        assert!(r.conserved);
        assert_eq!(r.ledger.treasury(), 100);
        assert_eq!(r.user("player2").unwrap().status, UserStatus::Recovered);
        assert_eq!(r.ledger.stake_of("AUTH1"), 0);
    }

    #[test]
    fn key_discloser_needs_a_recovering_user() {
        let cfg = ScenarioConfig { adversaries: vec![Adversary::KeyDiscloser], ..ScenarioConfig::gamefi() };
        let r = run_instance(&cfg).unwrap();
        assert!(r.adversaries_held(), "{:?}", r.adversaries);
        let cfg = cfg.only_user("player3").unwrap();
        assert!(!run_instance(&cfg).unwrap().adversaries_held());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::gamefi();
        cfg.owner.policy = "a@NOPE".into();
        assert!(matches!(cfg.validate(), Err(ProtocolError::Config(_))));
        let mut cfg = ScenarioConfig::gamefi();
        cfg.users[0].deposit = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::gamefi();
        cfg.users[0].attributes.push("admin@AUTH1".into());
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::gamefi();
        cfg.owner.policy = "female@AUTH3".into();
        cfg.adversaries = vec![Adversary::CrossGidColluders];
        assert!(cfg.validate().is_err());
        assert!(matches!("sybil".parse::<Adversary>(), Err(ProtocolError::UnknownAdversary(_))));
        let text = serde_json::to_string(&ScenarioConfig::gamefi()).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), ScenarioConfig::gamefi());
    }

    #[test]
    fn low_deposit_is_refunded() {
        let mut cfg = ScenarioConfig::gamefi().only_user("player2").unwrap();
        cfg.users[0].deposit = 3;
        let r = run_instance(&cfg).unwrap();
        assert_eq!(r.user("player2").unwrap().status, UserStatus::InsufficientDeposit);
        assert_eq!(r.ledger.balance(&Address::new("player2")), 1_000);
    }

    #[test]
    fn minimal_sets() {
        let ast = parse_policy("( a@X OR b@X ) AND c@X").unwrap();
        assert_eq!(minimal_satisfying_set(&ast), vec!["a@X", "c@X"]);
        let ast = parse_policy("a@X OR ( a@X AND b@X )").unwrap();
        assert_eq!(minimal_satisfying_set(&ast), vec!["a@X"]);
        let ast = parse_policy("a@X OR a@X AND b@X").unwrap();
        assert_eq!(minimal_satisfying_set(&ast), vec!["a@X", "b@X"]);
    }
}
