//! Data storage provider.
//!
//! Holds one hybrid ciphertext per GID and releases it only to users with a
//! settled ledger event for that GID. Users authenticate with a grant token
//! naming the settling event plus a Schnorr signature in G1 over a fresh
//! DSP challenge, under the public key they registered on the ledger.
//!
//! The DSP only ever handles ciphertext bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ark_ec::{AffineRepr, CurveGroup};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algebra::{self, fiat_shamir, g1_mul, hex_point, hex_scalar, random_nonzero_scalar, Scalar, G1};
use crate::cpabe::{Gid, GlobalParams, HybridCiphertext};
use crate::ledger::{Address, EventRecord, LedgerEvent};

const AUTH_TAG: &[u8] = b"ACABE-V01-DSP-AUTH";

#[derive(Debug, Error)]
pub enum DspError {
    #[error("GID `{0}` already stored")]
    DuplicateGid(Gid),
    #[error("no object stored for GID `{0}`")]
    UnknownGid(Gid),
    #[error("access denied: {0}")]
    AccessDenied(&'static str),
    #[error("stored object for `{0}` failed its integrity check")]
    Integrity(Gid),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredObject {
    pub gid: Gid,
    pub owner: Address,
    pub hc: HybridCiphertext,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AccessGrant {
    pub gid: Gid,
    pub user: Address,
    pub granted_at: u64,
}

/// What a user presents to the DSP: a reference to the settling event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantToken {
    pub gid: Gid,
    pub user: Address,
    pub seq: u64,
}

impl From<&AccessGrant> for GrantToken {
    fn from(g: &AccessGrant) -> Self {
        GrantToken { gid: g.gid.clone(), user: g.user.clone(), seq: g.granted_at }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge(pub u64);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthSignature {
    #[serde(with = "hex_point")]
    pub r: G1,
    #[serde(with = "hex_scalar")]
    pub z: Scalar,
}

fn auth_challenge(gp: &GlobalParams, pk: &G1, r: &G1, token: &GrantToken, ch: Challenge) -> Scalar {
    fiat_shamir([
            AUTH_TAG.to_vec(),
            algebra::encode(&gp.g1()),
            algebra::encode(pk),
            algebra::encode(r),
            token.gid.as_bytes().to_vec(),
            token.user.as_str().as_bytes().to_vec(),
            token.seq.to_be_bytes().to_vec(),
            ch.0.to_be_bytes().to_vec(),
    ])
}

/// Sign a fetch request with the user's secret `y`.
pub fn sign_request<R: RngCore + CryptoRng>(gp: &GlobalParams, y: &Scalar, token: &GrantToken, ch: Challenge, rng: &mut R) -> AuthSignature {
    let k = random_nonzero_scalar(rng);
    let r = g1_mul(&gp.g1(), &k);
    let pk = g1_mul(&gp.g1(), y);
    let e = auth_challenge(gp, &pk, &r, token, ch);
    AuthSignature { r, z: k + e * y }
}

pub fn verify_request(gp: &GlobalParams, pk: &G1, token: &GrantToken, ch: Challenge, sig: &AuthSignature) -> bool {
    let e = auth_challenge(gp, pk, &sig.r, token, ch);
    g1_mul(&gp.g1(), &sig.z) == (sig.r.into_group() + *pk * e).into_affine()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IndexEntry {
    owner: Address,
    sha256: String,
}

pub struct Dsp {
    gp: GlobalParams,
    dir: Option<PathBuf>,
    objects: BTreeMap<Gid, (StoredObject, [u8; 32])>,
    grants: BTreeMap<(Gid, Address), AccessGrant>,
    user_keys: BTreeMap<Address, G1>,
    pending: BTreeSet<(Address, Gid, u64)>,
    next_challenge: u64,
}

impl Dsp {
    pub fn in_memory(gp: GlobalParams) -> Self {
        Dsp {
            gp,
            dir: None,
            objects: BTreeMap::new(),
            grants: BTreeMap::new(),
            user_keys: BTreeMap::new(),
            pending: BTreeSet::new(),
            next_challenge: 0,
        }
    }

    /// Blob store in `dir`: `<sha256>.json` per object plus `index.json`
    /// mapping GID to owner and blob hash. Existing contents are loaded and
    /// checked against their hashes.
    pub fn open_dir(gp: GlobalParams, dir: impl AsRef<Path>) -> Result<Self, DspError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut dsp = Dsp::in_memory(gp);
        let index_path = dir.join("index.json");
        if index_path.exists() {
            let index: BTreeMap<Gid, IndexEntry> = serde_json::from_slice(&fs::read(&index_path)?)?;
            for (gid, entry) in index {
                let bytes = fs::read(dir.join(format!("{}.json", entry.sha256)))?;
                let digest: [u8; 32] = Sha256::digest(&bytes).into();
                if hex::encode(digest) != entry.sha256 {
                    return Err(DspError::Integrity(gid));
                }
                let obj: StoredObject = serde_json::from_slice(&bytes)?;
                if obj.gid != gid || obj.owner != entry.owner {
                    return Err(DspError::Integrity(gid));
                }
                dsp.objects.insert(gid, (obj, digest));
            }
        }
        dsp.dir = Some(dir);
        Ok(dsp)
    }

    pub fn store(&mut self, owner: &Address, gid: &Gid, hc: HybridCiphertext) -> Result<[u8; 32], DspError> {
        if self.objects.contains_key(gid) {
            return Err(DspError::DuplicateGid(gid.clone()));
        }
        let obj = StoredObject { gid: gid.clone(), owner: owner.clone(), hc };
        let bytes = serde_json::to_vec(&obj)?;
        let digest: [u8; 32] = Sha256::digest(&bytes).into();
        if let Some(dir) = &self.dir {
            fs::write(dir.join(format!("{}.json", hex::encode(digest))), &bytes)?;
        }
        self.objects.insert(gid.clone(), (obj, digest));
        self.write_index()?;
        Ok(digest)
    }

    fn write_index(&self) -> Result<(), DspError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let index: BTreeMap<&Gid, IndexEntry> = self
            .objects
            .iter()
            .map(|(g, (o, d))| (g, IndexEntry { owner: o.owner.clone(), sha256: hex::encode(d) }))
            .collect();
        let tmp = dir.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&index)?)?;
        fs::rename(tmp, dir.join("index.json"))?;
        Ok(())
    }

    /// Owner and content hash of a stored object.
    pub fn metadata(&self, gid: &Gid) -> Option<(&Address, [u8; 32])> {
        self.objects.get(gid).map(|(o, d)| (&o.owner, *d))
    }

    /// Rebuild grants and user keys from the ledger event log. Idempotent.
    pub fn sync_grants(&mut self, events: &[EventRecord]) {
        for rec in events {
            match &rec.event {
                LedgerEvent::Settled { gid, user, .. } => {
                    self.grants
                        .entry((gid.clone(), user.clone()))
                        .or_insert_with(|| AccessGrant { gid: gid.clone(), user: user.clone(), granted_at: rec.seq });
                }
                LedgerEvent::UserRegistered { user, pk } => {
                    self.user_keys.insert(user.clone(), *pk);
                }
                _ => {}
            }
        }
    }

    pub fn grants(&self) -> impl Iterator<Item = &AccessGrant> {
        self.grants.values()
    }

    pub fn grant(&self, gid: &Gid, user: &Address) -> Option<&AccessGrant> {
        self.grants.get(&(gid.clone(), user.clone()))
    }

    /// A single-use challenge for `user` to sign before fetching `gid`.
    pub fn challenge(&mut self, user: &Address, gid: &Gid) -> Challenge {
        let c = self.next_challenge;
        self.next_challenge += 1;
        self.pending.insert((user.clone(), gid.clone(), c));
        Challenge(c)
    }

    pub fn fetch(&mut self, user: &Address, gid: &Gid, token: &GrantToken, ch: Challenge, sig: &AuthSignature) -> Result<HybridCiphertext, DspError> {
        if !self.pending.remove(&(user.clone(), gid.clone(), ch.0)) {
            return Err(DspError::AccessDenied("unknown or spent challenge"));
        }
        if &token.user != user || &token.gid != gid {
            return Err(DspError::AccessDenied("token does not name the requester"));
        }
        match self.grants.get(&(gid.clone(), user.clone())) {
            Some(g) if g.granted_at == token.seq => {}
            Some(_) => return Err(DspError::AccessDenied("token references the wrong ledger event")),
            None => return Err(DspError::AccessDenied("no settled grant")),
        }
        let pk = self.user_keys.get(user).ok_or(DspError::AccessDenied("no registered key"))?;
        if !verify_request(&self.gp, pk, token, ch, sig) {
            return Err(DspError::AccessDenied("bad signature"));
        }
        let (obj, _) = self.objects.get(gid).ok_or_else(|| DspError::UnknownGid(gid.clone()))?;
        Ok(obj.hc.clone())
    }
}
