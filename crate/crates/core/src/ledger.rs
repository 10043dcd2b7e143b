//! In-process emulation of the contract layer.
//!
//! The ledger is a single-writer state machine. Every transaction gets the
//! next sequence number whether it commits or reverts, and is appended to a
//! journal together with its outcome. Replaying a journal against a fresh
//! ledger reproduces the final state and event log byte for byte.
//!
//! Funds are integer base units. Outside of genesis, no transaction creates
//! or destroys value: `Σ balances + Σ pool + Σ stakes + treasury` is fixed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use ark_ec::AffineRepr;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accountability::{self, KeyProof, KeyStatement, KeySubmission};
use crate::algebra::{hex_point, CurveId, G1};
use crate::cpabe::{AuthorityPublicKey, Gid, GlobalParams};
use crate::policy::{self, AttributeSet, PolicyError};

pub type Amount = u64;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    pub fn new(s: impl Into<String>) -> Self {
        Address(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address(s.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerError {
    #[error("genesis must be the first transaction")]
    GenesisOrder,
    #[error("ledger has no genesis")]
    NoGenesis,
    #[error("insufficient balance: has {has}, needs {needs}")]
    InsufficientBalance { has: Amount, needs: Amount },
    #[error("operation does not accept value")]
    UnexpectedValue,
    #[error("stake {stake} below minimum {min}")]
    StakeTooLow { stake: Amount, min: Amount },
    #[error("authority public key is inconsistent")]
    InconsistentAuthorityKey,
    #[error("authority `{0}` is registered under a different account or key")]
    AuthorityConflict(String),
    #[error("sender is not a registered authority")]
    UnregisteredAuthority,
    #[error("authority has no stake")]
    NoStake,
    #[error("user public key is invalid or conflicts with a previous registration")]
    UserConflict,
    #[error("unknown user `{0}`")]
    UnknownUser(Address),
    #[error("GID `{0}` already has an expectation")]
    DuplicateGid(Gid),
    #[error("GID `{0}` has no expectation")]
    UnknownGid(Gid),
    #[error("policy: {0}")]
    Policy(String),
    #[error("deposit must be positive")]
    ZeroDeposit,
    #[error("no live deposit")]
    NoDeposit,
    #[error("already settled")]
    AlreadySettled,
    #[error("settlement conditions hold; withdrawal blocked")]
    SettlementPending,
    #[error("pool {pool} does not exceed owner value {owner_val}")]
    InsufficientPool { pool: Amount, owner_val: Amount },
    #[error("no authorities to reward")]
    NoAuthorities,
    #[error("submission issuer does not match sender")]
    IssuerMismatch,
    #[error("submission built for curve `{0}`")]
    CurveMismatch(CurveId),
    #[error("arithmetic overflow")]
    Overflow,
}

impl From<PolicyError> for LedgerError {
    fn from(e: PolicyError) -> Self {
        LedgerError::Policy(e.to_string())
    }
}

/// Who sends a transaction and how much value it carries (`msg.sender`,
/// `msg.value`). The ledger assigns the sequence number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tx {
    pub sender: Address,
    pub value: Amount,
}

impl Tx {
    pub fn new(sender: impl Into<Address>, value: Amount) -> Self {
        Tx { sender: sender.into(), value }
    }

    pub fn call(sender: impl Into<Address>) -> Self {
        Tx::new(sender, 0)
    }
}

impl From<String> for Address {
    fn from(s: String) -> Self {
        Address(s)
    }
}

impl From<&Address> for Address {
    fn from(a: &Address) -> Self {
        a.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LedgerOp {
    Genesis {
        curve_id: CurveId,
        min_stake: Amount,
        balances: BTreeMap<Address, Amount>,
    },
    RegisterAuthority {
        public: AuthorityPublicKey,
    },
    RegisterUser {
        #[serde(with = "hex_point")]
        pk: G1,
    },
    Expect {
        gid: Gid,
        owner_val: Amount,
        policy: String,
    },
    Deposit {
        gid: Gid,
    },
    Withdraw {
        gid: Gid,
    },
    SubmitKey {
        submission: KeySubmission,
    },
    TrySettle {
        gid: Gid,
        user: Address,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Slashed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LedgerEvent {
    Genesis { total: Amount },
    AuthorityRegistered { theta: String, address: Address, stake: Amount },
    UserRegistered {
        user: Address,
        #[serde(with = "hex_point")]
        pk: G1,
    },
    Expected { gid: Gid, owner: Address, owner_val: Amount },
    Deposited { gid: Gid, user: Address, amount: Amount, refunded: Amount },
    Withdrawn { gid: Gid, user: Address, amount: Amount },
    /// The encrypted key verified and is available to the user.
    KeyAccepted { gid: Gid, user: Address, attr: String, issuer: String, duplicate: bool },
    KeySlashed { gid: Gid, user: Address, attr: String, issuer: String, forfeited: Amount },
    /// Access grant toward storage: `attrs` satisfied `policy` at this seq.
    Settled { gid: Gid, user: Address, attrs: AttributeSet, policy: String },
    Rewarded { gid: Gid, owner: Address, owner_amount: Amount, authorities: Vec<(Address, Amount)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: LedgerEvent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Committed { events: Vec<LedgerEvent> },
    Reverted { error: LedgerError },
}

/// One journal line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub tx: Tx,
    #[serde(flatten)]
    pub op: LedgerOp,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedKeyRecord {
    pub seq: u64,
    pub issuer: String,
    pub attr: String,
    pub ek: accountability::EncryptedKey,
    pub proof: KeyProof,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityRecord {
    pub address: Address,
    pub public: AuthorityPublicKey,
    pub stake: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub owner: Address,
    pub owner_val: Amount,
    pub policy: String,
}

/// Owner share and per-authority share of a settled pool: floor division,
/// with the remainder going to the owner.
pub fn split_reward(pool: Amount, owner_val: Amount, authorities: usize) -> Result<(Amount, Amount), LedgerError> {
    if pool <= owner_val {
        return Err(LedgerError::InsufficientPool { pool, owner_val });
    }
    if authorities == 0 {
        return Err(LedgerError::NoAuthorities);
    }
    let rest = pool - owner_val;
    let n = authorities as Amount;
    let avg = rest / n;
    Ok((owner_val + rest % n, avg))
}

#[derive(Clone, Debug)]
pub struct Ledger {
    gp: GlobalParams,
    genesis: Option<(Amount, Amount)>,
    seq: u64,
    balances: BTreeMap<Address, Amount>,
    pool: BTreeMap<(Address, Gid), Amount>,
    expects: BTreeMap<Gid, Expectation>,
    authorities: BTreeMap<String, AuthorityRecord>,
    users: BTreeMap<Address, G1>,
    registry: BTreeMap<(Gid, Address), Vec<VerifiedKeyRecord>>,
    verified_attrs: BTreeMap<(Gid, Address), AttributeSet>,
    settled: BTreeSet<(Gid, Address)>,
    treasury: Amount,
    events: Vec<EventRecord>,
    journal: Vec<JournalEntry>,
}

/// Result of a committed transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub seq: u64,
    pub events: Vec<LedgerEvent>,
}

impl Ledger {
    pub fn new(gp: GlobalParams) -> Self {
        Ledger {
            gp,
            genesis: None,
            seq: 0,
            balances: BTreeMap::new(),
            pool: BTreeMap::new(),
            expects: BTreeMap::new(),
            authorities: BTreeMap::new(),
            users: BTreeMap::new(),
            registry: BTreeMap::new(),
            verified_attrs: BTreeMap::new(),
            settled: BTreeSet::new(),
            treasury: 0,
            events: Vec::new(),
            journal: Vec::new(),
        }
    }

    /// A ledger with genesis already applied.
    pub fn with_genesis(gp: GlobalParams, min_stake: Amount, balances: BTreeMap<Address, Amount>) -> Result<Self, LedgerError> {
        let mut l = Ledger::new(gp);
        let curve_id = l.gp.curve_id();
        l.apply(Tx::call("genesis"), LedgerOp::Genesis { curve_id, min_stake, balances })?;
        Ok(l)
    }

    pub fn gp(&self) -> &GlobalParams {
        &self.gp
    }

    /// Apply one transaction. Reverted transactions consume a sequence
    /// number, are journaled, and leave state untouched.
    pub fn apply(&mut self, tx: Tx, op: LedgerOp) -> Result<Receipt, LedgerError> {
        let seq = self.seq;
        self.seq += 1;
        let mut events = Vec::new();
        let result = self.execute(&tx, &op, &mut events);
        let outcome = match &result {
            Ok(()) => Outcome::Committed { events: events.clone() },
            Err(e) => Outcome::Reverted { error: e.clone() },
        };
        self.journal.push(JournalEntry { seq, tx, op, outcome });
        result?;
        self.events.extend(events.iter().cloned().map(|event| EventRecord { seq, event }));
        Ok(Receipt { seq, events })
    }

    fn execute(&mut self, tx: &Tx, op: &LedgerOp, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        if let LedgerOp::Genesis { curve_id, min_stake, balances } = op {
            if self.genesis.is_some() || self.seq != 1 {
                return Err(LedgerError::GenesisOrder);
            }
            if *curve_id != self.gp.curve_id() {
                return Err(LedgerError::CurveMismatch(*curve_id));
            }
            let total = balances.values().try_fold(0u64, |a, &b| a.checked_add(b)).ok_or(LedgerError::Overflow)?;
            self.balances = balances.clone();
            self.genesis = Some((*min_stake, total));
            ev.push(LedgerEvent::Genesis { total });
            return Ok(());
        }
        if self.genesis.is_none() {
            return Err(LedgerError::NoGenesis);
        }
        let takes_value = matches!(op, LedgerOp::RegisterAuthority { .. } | LedgerOp::Deposit { .. });
        if !takes_value && tx.value != 0 {
            return Err(LedgerError::UnexpectedValue);
        }
        match op {
            LedgerOp::Genesis { .. } => unreachable!(),
            LedgerOp::RegisterAuthority { public } => self.op_register_authority(tx, public, ev),
            LedgerOp::RegisterUser { pk } => self.op_register_user(tx, pk, ev),
            LedgerOp::Expect { gid, owner_val, policy } => self.op_expect(tx, gid, *owner_val, policy, ev),
            LedgerOp::Deposit { gid } => self.op_deposit(tx, gid, ev),
            LedgerOp::Withdraw { gid } => self.op_withdraw(tx, gid, ev),
            LedgerOp::SubmitKey { submission } => self.op_submit_key(tx, submission, ev),
            LedgerOp::TrySettle { gid, user } => self.op_try_settle(gid, user, ev),
        }
    }

    fn debit(&mut self, who: &Address, amount: Amount) -> Result<(), LedgerError> {
        let has = self.balance(who);
        if has < amount {
            return Err(LedgerError::InsufficientBalance { has, needs: amount });
        }
        self.balances.insert(who.clone(), has - amount);
        Ok(())
    }

    fn credit(&mut self, who: &Address, amount: Amount) {
        *self.balances.entry(who.clone()).or_insert(0) += amount;
    }

    fn op_register_authority(&mut self, tx: &Tx, public: &AuthorityPublicKey, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        let min = self.min_stake();
        match self.authorities.get(&public.theta) {
            Some(rec) if rec.address != tx.sender || &rec.public != public => {
                return Err(LedgerError::AuthorityConflict(public.theta.clone()));
            }
            Some(rec) if rec.stake + tx.value < min => {
                return Err(LedgerError::StakeTooLow { stake: rec.stake + tx.value, min });
            }
            Some(_) => {}
            None => {
                if tx.value < min {
                    return Err(LedgerError::StakeTooLow { stake: tx.value, min });
                }
                if self.authorities.values().any(|r| r.address == tx.sender) {
                    return Err(LedgerError::AuthorityConflict(public.theta.clone()));
                }
                if !public.is_consistent(&self.gp) {
                    return Err(LedgerError::InconsistentAuthorityKey);
                }
            }
        }
        self.debit(&tx.sender, tx.value)?;
        let rec = self.authorities.entry(public.theta.clone()).or_insert_with(|| AuthorityRecord {
            address: tx.sender.clone(),
            public: public.clone(),
            stake: 0,
        });
        rec.stake += tx.value;
        ev.push(LedgerEvent::AuthorityRegistered { theta: public.theta.clone(), address: tx.sender.clone(), stake: rec.stake });
        Ok(())
    }

    fn op_register_user(&mut self, tx: &Tx, pk: &G1, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        if pk.is_zero() {
            return Err(LedgerError::UserConflict);
        }
        match self.users.get(&tx.sender) {
            Some(old) if old != pk => return Err(LedgerError::UserConflict),
            Some(_) => {}
            None => {
                self.users.insert(tx.sender.clone(), *pk);
            }
        }
        ev.push(LedgerEvent::UserRegistered { user: tx.sender.clone(), pk: *pk });
        Ok(())
    }

    fn op_expect(&mut self, tx: &Tx, gid: &Gid, owner_val: Amount, policy_text: &str, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        if self.expects.contains_key(gid) {
            return Err(LedgerError::DuplicateGid(gid.clone()));
        }
        policy::parse_policy(policy_text)?;
        self.expects.insert(
            gid.clone(),
            Expectation { owner: tx.sender.clone(), owner_val, policy: policy_text.to_string() },
        );
        ev.push(LedgerEvent::Expected { gid: gid.clone(), owner: tx.sender.clone(), owner_val });
        Ok(())
    }

    fn op_deposit(&mut self, tx: &Tx, gid: &Gid, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        if tx.value == 0 {
            return Err(LedgerError::ZeroDeposit);
        }
        if !self.expects.contains_key(gid) {
            return Err(LedgerError::UnknownGid(gid.clone()));
        }
        let key = (tx.sender.clone(), gid.clone());
        if self.settled.contains(&(gid.clone(), tx.sender.clone())) {
            return Err(LedgerError::AlreadySettled);
        }
        // A repeated deposit replaces the previous one, which is refunded.
        let refunded = self.pool.get(&key).copied().unwrap_or(0);
        let has = self.balance(&tx.sender) + refunded;
        if has < tx.value {
            return Err(LedgerError::InsufficientBalance { has, needs: tx.value });
        }
        self.balances.insert(tx.sender.clone(), has - tx.value);
        self.pool.insert(key, tx.value);
        ev.push(LedgerEvent::Deposited { gid: gid.clone(), user: tx.sender.clone(), amount: tx.value, refunded });
        Ok(())
    }

    fn op_withdraw(&mut self, tx: &Tx, gid: &Gid, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        let key = (tx.sender.clone(), gid.clone());
        let amount = self.pool.get(&key).copied().unwrap_or(0);
        if amount == 0 {
            return Err(LedgerError::NoDeposit);
        }
        if self.is_settled(gid, &tx.sender) {
            return Err(LedgerError::AlreadySettled);
        }
        if self.settlement_ready(gid, &tx.sender)? {
            return Err(LedgerError::SettlementPending);
        }
        self.pool.remove(&key);
        self.credit(&tx.sender, amount);
        ev.push(LedgerEvent::Withdrawn { gid: gid.clone(), user: tx.sender.clone(), amount });
        Ok(())
    }

    /// Verified attributes satisfy the policy and the pool can pay out.
    fn settlement_ready(&self, gid: &Gid, user: &Address) -> Result<bool, LedgerError> {
        let Some(exp) = self.expects.get(gid) else {
            return Ok(false);
        };
        let pool = self.pool_of(user, gid);
        if pool <= exp.owner_val {
            return Ok(false);
        }
        Ok(policy::judge_attrs(&self.verified_attrs(gid, user), &exp.policy)?)
    }

    fn op_submit_key(&mut self, tx: &Tx, sub: &KeySubmission, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        let theta = self
            .authorities
            .iter()
            .find(|(_, r)| r.address == tx.sender)
            .map(|(t, _)| t.clone())
            .ok_or(LedgerError::UnregisteredAuthority)?;
        if sub.ek.issuer != theta {
            return Err(LedgerError::IssuerMismatch);
        }
        if sub.curve_id != self.gp.curve_id() {
            return Err(LedgerError::CurveMismatch(sub.curve_id));
        }
        let rec = &self.authorities[&theta];
        if rec.stake == 0 {
            return Err(LedgerError::NoStake);
        }
        let user = Address::new(sub.user.clone());
        let pk_u = *self.users.get(&user).ok_or_else(|| LedgerError::UnknownUser(user.clone()))?;
        let gid = sub.ek.gid.clone();
        if self.pool_of(&user, &gid) == 0 {
            return Err(LedgerError::NoDeposit);
        }
        if self.is_settled(&gid, &user) {
            return Err(LedgerError::AlreadySettled);
        }

        let attr = sub.ek.attr.clone();
        let stmt = KeyStatement::new(&gid, &attr, &pk_u, &rec.public);
        let ok = accountability::check_key_pc(&self.gp, &stmt, &sub.ek, &sub.proof);
        let verdict = if ok { Verdict::Accepted } else { Verdict::Slashed };
        let record = VerifiedKeyRecord {
            seq: self.seq - 1,
            issuer: theta.clone(),
            attr: attr.clone(),
            ek: sub.ek.clone(),
            proof: sub.proof.clone(),
            verdict,
        };
        let slot = (gid.clone(), user.clone());
        if ok {
            let duplicate = !self.verified_attrs.entry(slot.clone()).or_default().insert(attr.clone());
            if !duplicate {
                self.registry.entry(slot).or_default().push(record);
            }
            ev.push(LedgerEvent::KeyAccepted { gid, user, attr, issuer: theta, duplicate });
        } else {
            let rec = self.authorities.get_mut(&theta).expect("looked up above");
            let forfeited = rec.stake;
            rec.stake = 0;
            self.treasury += forfeited;
            self.registry.entry(slot).or_default().push(record);
            ev.push(LedgerEvent::KeySlashed { gid, user, attr, issuer: theta, forfeited });
        }
        Ok(())
    }

    fn op_try_settle(&mut self, gid: &Gid, user: &Address, ev: &mut Vec<LedgerEvent>) -> Result<(), LedgerError> {
        let exp = self.expects.get(gid).ok_or_else(|| LedgerError::UnknownGid(gid.clone()))?.clone();
        if self.is_settled(gid, user) {
            return Ok(());
        }
        let pool = self.pool_of(user, gid);
        if pool == 0 {
            return Err(LedgerError::NoDeposit);
        }
        let attrs = self.verified_attrs(gid, user);
        if !policy::judge_attrs(&attrs, &exp.policy)? {
            return Ok(());
        }
        // Reward every distinct authority with an accepted key for this slot.
        let addrs: Vec<Address> = self
            .registry
            .get(&(gid.clone(), user.clone()))
            .into_iter()
            .flatten()
            .filter(|r| r.verdict == Verdict::Accepted)
            .map(|r| r.issuer.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|theta| self.authorities[&theta].address.clone())
            .collect();
        let (owner_amount, avg) = split_reward(pool, exp.owner_val, addrs.len())?;
        self.pool.remove(&(user.clone(), gid.clone()));
        self.credit(&exp.owner, owner_amount);
        for a in &addrs {
            self.credit(a, avg);
        }
        self.settled.insert((gid.clone(), user.clone()));
        ev.push(LedgerEvent::Settled { gid: gid.clone(), user: user.clone(), attrs, policy: exp.policy.clone() });
        ev.push(LedgerEvent::Rewarded {
            gid: gid.clone(),
            owner: exp.owner.clone(),
            owner_amount,
            authorities: addrs.into_iter().map(|a| (a, avg)).collect(),
        });
        Ok(())
    }

    // -- typed entry points -------------------------------------------------

    pub fn register_authority(&mut self, tx: Tx, public: AuthorityPublicKey) -> Result<Receipt, LedgerError> {
        self.apply(tx, LedgerOp::RegisterAuthority { public })
    }

    pub fn register_user(&mut self, tx: Tx, pk: G1) -> Result<Receipt, LedgerError> {
        self.apply(tx, LedgerOp::RegisterUser { pk })
    }

    pub fn expect(&mut self, tx: Tx, gid: &Gid, owner_val: Amount, policy: &str) -> Result<bool, LedgerError> {
        self.apply(tx, LedgerOp::Expect { gid: gid.clone(), owner_val, policy: policy.to_string() })?;
        Ok(true)
    }

    pub fn deposit(&mut self, tx: Tx, gid: &Gid) -> Result<bool, LedgerError> {
        self.apply(tx, LedgerOp::Deposit { gid: gid.clone() })?;
        Ok(true)
    }

    pub fn withdraw(&mut self, tx: Tx, gid: &Gid) -> Result<bool, LedgerError> {
        self.apply(tx, LedgerOp::Withdraw { gid: gid.clone() })?;
        Ok(true)
    }

    pub fn submit_key(&mut self, tx: Tx, submission: KeySubmission) -> Result<Verdict, LedgerError> {
        let r = self.apply(tx, LedgerOp::SubmitKey { submission })?;
        Ok(match r.events.first() {
            Some(LedgerEvent::KeySlashed { .. }) => Verdict::Slashed,
            _ => Verdict::Accepted,
        })
    }

    /// Settle `(gid, user)` if its verified attributes satisfy the recorded
    /// policy. `Ok(false)` when unsatisfied or already settled.
    pub fn try_settle(&mut self, gid: &Gid, user: &Address) -> Result<bool, LedgerError> {
        let r = self.apply(Tx::call("contract"), LedgerOp::TrySettle { gid: gid.clone(), user: user.clone() })?;
        Ok(r.events.iter().any(|e| matches!(e, LedgerEvent::Settled { .. })))
    }

    // -- reads --------------------------------------------------------------

    pub fn min_stake(&self) -> Amount {
        self.genesis.map_or(0, |(m, _)| m)
    }

    pub fn balance(&self, who: &Address) -> Amount {
        self.balances.get(who).copied().unwrap_or(0)
    }

    pub fn pool_of(&self, user: &Address, gid: &Gid) -> Amount {
        self.pool.get(&(user.clone(), gid.clone())).copied().unwrap_or(0)
    }

    pub fn expectation(&self, gid: &Gid) -> Option<&Expectation> {
        self.expects.get(gid)
    }

    pub fn authority(&self, theta: &str) -> Option<&AuthorityRecord> {
        self.authorities.get(theta)
    }

    pub fn authorities(&self) -> impl Iterator<Item = &AuthorityRecord> {
        self.authorities.values()
    }

    pub fn user_pk(&self, user: &Address) -> Option<&G1> {
        self.users.get(user)
    }

    pub fn stake_of(&self, theta: &str) -> Amount {
        self.authorities.get(theta).map_or(0, |r| r.stake)
    }

    pub fn treasury(&self) -> Amount {
        self.treasury
    }

    pub fn verified_attrs(&self, gid: &Gid, user: &Address) -> AttributeSet {
        self.verified_attrs.get(&(gid.clone(), user.clone())).cloned().unwrap_or_default()
    }

    pub fn records(&self, gid: &Gid, user: &Address) -> &[VerifiedKeyRecord] {
        self.registry.get(&(gid.clone(), user.clone())).map_or(&[], Vec::as_slice)
    }

    pub fn is_settled(&self, gid: &Gid, user: &Address) -> bool {
        self.settled.contains(&(gid.clone(), user.clone()))
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn next_seq(&self) -> u64 {
        self.seq
    }

    /// Total funds; constant after genesis.
    pub fn total_funds(&self) -> Amount {
        self.balances.values().sum::<Amount>()
            + self.pool.values().sum::<Amount>()
            + self.authorities.values().map(|r| r.stake).sum::<Amount>()
            + self.treasury
    }

    pub fn genesis_total(&self) -> Option<Amount> {
        self.genesis.map(|(_, t)| t)
    }

    /// SHA-256 over a canonical dump of state and event log.
    pub fn state_digest(&self) -> [u8; 32] {
        #[derive(Serialize)]
        struct Dump<'a> {
            seq: u64,
            balances: &'a BTreeMap<Address, Amount>,
            pool: Vec<(&'a (Address, Gid), &'a Amount)>,
            expects: &'a BTreeMap<Gid, Expectation>,
            authorities: &'a BTreeMap<String, AuthorityRecord>,
            users: Vec<(&'a Address, String)>,
            registry: Vec<(&'a (Gid, Address), &'a Vec<VerifiedKeyRecord>)>,
            verified: Vec<(&'a (Gid, Address), &'a AttributeSet)>,
            settled: &'a BTreeSet<(Gid, Address)>,
            treasury: Amount,
            events: &'a [EventRecord],
        }
        let dump = Dump {
            seq: self.seq,
            balances: &self.balances,
            pool: self.pool.iter().collect(),
            expects: &self.expects,
            authorities: &self.authorities,
            users: self.users.iter().map(|(a, p)| (a, crate::algebra::to_hex(p))).collect(),
            registry: self.registry.iter().collect(),
            verified: self.verified_attrs.iter().collect(),
            settled: &self.settled,
            treasury: self.treasury,
            events: &self.events,
        };
        Sha256::digest(serde_json::to_vec(&dump).expect("state is serializable")).into()
    }

    // -- journal ------------------------------------------------------------

    pub fn write_journal<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.journal {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Re-apply a journal to a fresh ledger, checking each recorded outcome.
    pub fn replay(gp: GlobalParams, journal: &[JournalEntry]) -> Result<Ledger, ReplayError> {
        let mut l = Ledger::new(gp);
        for entry in journal {
            if entry.seq != l.next_seq() {
                return Err(ReplayError::Divergence { seq: entry.seq, reason: "sequence gap".into() });
            }
            let _ = l.apply(entry.tx.clone(), entry.op.clone());
            let got = &l.journal.last().expect("just applied").outcome;
            if got != &entry.outcome {
                return Err(ReplayError::Divergence { seq: entry.seq, reason: format!("recorded {:?}, replayed {:?}", entry.outcome, got) });
            }
        }
        Ok(l)
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("journal line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("replay diverged at seq {seq}: {reason}")]
    Divergence { seq: u64, reason: String },
}

pub fn read_journal<R: BufRead>(r: R) -> Result<Vec<JournalEntry>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ReplayError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}
