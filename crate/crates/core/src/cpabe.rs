//! Decentralized ciphertext-policy ABE over an asymmetric pairing, with the
//! `m ⊕ kdf(M)` hybrid wrapper.
//!
//! Every attribute word carries its issuing authority as an `@<authority>`
//! suffix (`female@AUTH3` is issued by `AUTH3`). Keys bind the holder's GID
//! through `H(GID)`, so key sets from different GIDs never combine.

use std::collections::BTreeMap;
use std::fmt;

use ark_ec::AffineRepr;
use ark_ff::Zero;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    self, g1_msm, g1_mul, g2_mul, hex_point, hex_scalar, pairing_check, pairing_product, random_gt, random_scalar,
    AlgebraError, CurveId, GroupContext, HashToGroupConfig, Scalar, G1, G2, Gt,
};
use crate::policy::{self, AttributeSet, LsssMatrix, PolicyError};

/// Version tag carried by every serialized artifact.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbeError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("attribute `{0}` has no `@<authority>` suffix")]
    MissingAuthority(String),
    #[error("no public key for authority `{0}`")]
    UnknownAuthority(String),
    #[error("attribute `{attr}` is not managed by authority `{authority}`")]
    AttributeNotOwned { attr: String, authority: String },
    #[error("policy not satisfied by the supplied keys")]
    PolicyNotSatisfied,
    #[error("decryption keys carry different GIDs")]
    MixedGid,
    #[error("no decryption keys supplied")]
    EmptyKeySet,
    #[error("empty payload")]
    EmptyPayload,
    #[error("empty GID")]
    EmptyGid,
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(&'static str),
    #[error("artifact built for curve `{0}`")]
    CurveMismatch(CurveId),
}

/// Global identifier of one sharing instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gid(String);

impl Gid {
    pub fn new(value: impl Into<String>) -> Result<Self, AbeError> {
        let value = value.into();
        if value.is_empty() {
            return Err(AbeError::EmptyGid);
        }
        Ok(Gid(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Display for Gid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The authority id encoded in an attribute word's `@` suffix.
pub fn authority_of(attr: &str) -> Result<&str, AbeError> {
    match attr.rsplit_once('@') {
        Some((name, auth)) if !name.is_empty() && !auth.is_empty() => Ok(auth),
        _ => Err(AbeError::MissingAuthority(attr.to_string())),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalParams {
    pub ctx: GroupContext,
    pub hashes: HashToGroupConfig,
    egg: Gt,
}

#[derive(Serialize, Deserialize)]
struct GlobalParamsWire {
    version: u32,
    curve_id: CurveId,
    #[serde(with = "hex_point")]
    g1: G1,
    #[serde(with = "hex_point")]
    g2: G2,
    #[serde(with = "algebra::hex_bytes")]
    tag_h: Vec<u8>,
    #[serde(with = "algebra::hex_bytes")]
    tag_f: Vec<u8>,
}

impl Serialize for GlobalParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GlobalParamsWire {
            version: FORMAT_VERSION,
            curve_id: self.ctx.curve_id,
            g1: self.ctx.g1,
            g2: self.ctx.g2,
            tag_h: self.hashes.domain_tag_h.clone(),
            tag_f: self.hashes.domain_tag_f.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GlobalParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = GlobalParamsWire::deserialize(d)?;
        if w.version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported version {}", w.version)));
        }
        let ctx = GroupContext::with_generators(w.curve_id, w.g1, w.g2).map_err(D::Error::custom)?;
        let hashes = HashToGroupConfig::new(w.tag_h, w.tag_f).map_err(D::Error::custom)?;
        Ok(GlobalParams::from_parts(ctx, hashes))
    }
}

impl GlobalParams {
    pub fn from_parts(ctx: GroupContext, hashes: HashToGroupConfig) -> Self {
        let egg = ctx.gt_generator();
        GlobalParams { ctx, hashes, egg }
    }

    pub fn curve_id(&self) -> CurveId {
        self.ctx.curve_id
    }

    pub fn g1(&self) -> G1 {
        self.ctx.g1
    }

    pub fn g2(&self) -> G2 {
        self.ctx.g2
    }

    /// `e(g1, g2)`.
    pub fn egg(&self) -> Gt {
        self.egg
    }

    /// `H(gid)`.
    pub fn hash_gid(&self, gid: &Gid) -> G1 {
        self.hashes.h(gid.as_bytes())
    }

    /// `F(u)`.
    pub fn hash_attr(&self, attr: &str) -> G1 {
        self.hashes.f(attr.as_bytes())
    }
}

/// Deterministic public parameters for a named curve: the curve's standard
/// generators and the default hash domain tags.
pub fn global_setup(curve_id: &str) -> Result<GlobalParams, AbeError> {
    let id: CurveId = curve_id.parse()?;
    Ok(GlobalParams::from_parts(GroupContext::new(id), HashToGroupConfig::default()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityPublicKey {
    pub theta: String,
    /// `g1^α`
    #[serde(with = "hex_point")]
    pub a1: G1,
    /// `g2^α`
    #[serde(with = "hex_point")]
    pub a2: G2,
    /// `g2^β`
    #[serde(with = "hex_point")]
    pub b2: G2,
    /// `e(g1, g2)^α`
    #[serde(with = "hex_point")]
    pub t: Gt,
}

impl AuthorityPublicKey {
    /// Public consistency of the four components.
    pub fn is_consistent(&self, gp: &GlobalParams) -> bool {
        !self.a1.is_zero()
            && !self.b2.is_zero()
            && pairing_check(&[(self.a1, gp.g2()), (-gp.g1(), self.a2)])
            && algebra::pairing(&self.a1, &gp.g2()) == self.t
    }
}

#[derive(Clone, Debug)]
pub struct AuthorityKeyPair {
    pub alpha: Scalar,
    pub beta: Scalar,
    pub public: AuthorityPublicKey,
}

impl AuthorityKeyPair {
    pub fn theta(&self) -> &str {
        &self.public.theta
    }
}

pub fn auth_setup<R: RngCore + CryptoRng>(gp: &GlobalParams, theta: &str, rng: &mut R) -> AuthorityKeyPair {
    let alpha = algebra::random_nonzero_scalar(rng);
    let beta = algebra::random_nonzero_scalar(rng);
    let public = AuthorityPublicKey {
        theta: theta.to_string(),
        a1: g1_mul(&gp.g1(), &alpha),
        a2: g2_mul(&gp.g2(), &alpha),
        b2: g2_mul(&gp.g2(), &beta),
        t: gp.egg() * alpha,
    };
    AuthorityKeyPair { alpha, beta, public }
}

/// A data user's key pair `(y, g1^y)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UserKeyPair {
    #[serde(with = "hex_scalar")]
    pub y: Scalar,
    #[serde(with = "hex_point")]
    pub pk: G1,
}

impl UserKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(gp: &GlobalParams, rng: &mut R) -> Self {
        Self::from_secret(gp, algebra::random_nonzero_scalar(rng))
    }

    pub fn from_secret(gp: &GlobalParams, y: Scalar) -> Self {
        UserKeyPair { y, pk: g1_mul(&gp.g1(), &y) }
    }
}

/// Per-attribute CP-ABE key `(K0, K1) = (g1^α H(GID)^β F(u)^d, g2^d)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecryptionKey {
    pub gid: Gid,
    pub attr: String,
    #[serde(with = "hex_point")]
    pub k0: G1,
    #[serde(with = "hex_point")]
    pub k1: G2,
}

impl DecryptionKey {
    /// `e(K0, g2) = e(g1^α, g2) · e(H(gid), g2^β) · e(F(u), K1)`.
    pub fn verify(&self, gp: &GlobalParams, issuer: &AuthorityPublicKey) -> bool {
        check_key_shape(gp, issuer, &self.gid, &self.attr, &self.k0, &self.k1)
    }
}

pub(crate) fn check_key_shape(gp: &GlobalParams, issuer: &AuthorityPublicKey, gid: &Gid, attr: &str, k0: &G1, k1: &G2) -> bool {
    pairing_check(&[
        (issuer.a1, gp.g2()),
        (gp.hash_gid(gid), issuer.b2),
        (gp.hash_attr(attr), *k1),
        (-*k0, gp.g2()),
    ])
}

pub fn abe_keygen<R: RngCore + CryptoRng>(
    gid: &Gid,
    gp: &GlobalParams,
    attr: &str,
    sk: &AuthorityKeyPair,
    rng: &mut R,
) -> Result<DecryptionKey, AbeError> {
    ensure_owned(attr, sk.theta())?;
    let d = random_scalar(rng);
    let k0 = g1_msm(&[(gp.g1(), sk.alpha), (gp.hash_gid(gid), sk.beta), (gp.hash_attr(attr), d)]);
    Ok(DecryptionKey { gid: gid.clone(), attr: attr.to_string(), k0, k1: g2_mul(&gp.g2(), &d) })
}

pub(crate) fn ensure_owned(attr: &str, theta: &str) -> Result<(), AbeError> {
    if authority_of(attr)? != theta {
        return Err(AbeError::AttributeNotOwned { attr: attr.to_string(), authority: theta.to_string() });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiphertextRow {
    /// `e(g1,g2)^{λ_x} · T^{t_x}`
    #[serde(with = "hex_point")]
    pub c1: Gt,
    /// `g2^{-t_x}`
    #[serde(with = "hex_point")]
    pub c2: G2,
    /// `(g2^β)^{t_x} · g2^{ω_x}`
    #[serde(with = "hex_point")]
    pub c3: G2,
    /// `F(δ(x))^{t_x}`
    #[serde(with = "hex_point")]
    pub c4: G1,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    pub version: u32,
    pub curve_id: CurveId,
    pub policy: String,
    pub lsss: LsssMatrix,
    /// `M · e(g1,g2)^s`
    #[serde(with = "hex_point")]
    pub c0: Gt,
    pub rows: Vec<CiphertextRow>,
}

impl Ciphertext {
    /// Structural consistency: the matrix is the policy's matrix and there is
    /// one row tuple per matrix row.
    pub fn validate(&self, gp: &GlobalParams) -> Result<(), AbeError> {
        if self.version != FORMAT_VERSION {
            return Err(AbeError::MalformedCiphertext("version"));
        }
        if self.curve_id != gp.curve_id() {
            return Err(AbeError::CurveMismatch(self.curve_id));
        }
        let expected = policy::policy_to_lsss(&policy::parse_policy(&self.policy)?);
        if expected != self.lsss {
            return Err(AbeError::MalformedCiphertext("matrix does not match policy"));
        }
        if self.rows.len() != self.lsss.num_rows() {
            return Err(AbeError::MalformedCiphertext("row count"));
        }
        Ok(())
    }

    /// Bytes of the canonical binary encoding of all group elements plus the
    /// policy text.
    pub fn encoded_len(&self) -> usize {
        let row = algebra::encode(&self.rows.first().map_or(Gt::zero(), |r| r.c1)).len()
            + 2 * algebra::encode(&G2::zero()).len()
            + algebra::encode(&G1::zero()).len();
        self.policy.len() + algebra::encode(&self.c0).len() + row * self.rows.len()
    }
}

/// Encryption randomness, kept for white-box checks of the row identity.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct EncryptionSecrets {
    pub s: Scalar,
    pub lambdas: Vec<Scalar>,
    pub omegas: Vec<Scalar>,
    pub ts: Vec<Scalar>,
}

pub fn abe_encrypt<R: RngCore + CryptoRng>(
    gp: &GlobalParams,
    m: &Gt,
    policy_text: &str,
    pks: &BTreeMap<String, AuthorityPublicKey>,
    rng: &mut R,
) -> Result<Ciphertext, AbeError> {
    encrypt_with_secrets(gp, m, policy_text, pks, rng).map(|(c, _)| c)
}

pub(crate) fn encrypt_with_secrets<R: RngCore + CryptoRng>(
    gp: &GlobalParams,
    m: &Gt,
    policy_text: &str,
    pks: &BTreeMap<String, AuthorityPublicKey>,
    rng: &mut R,
) -> Result<(Ciphertext, EncryptionSecrets), AbeError> {
    let ast = policy::parse_policy(policy_text)?;
    let lsss = policy::policy_to_lsss(&ast);
    let row_keys = lsss
        .row_attr
        .iter()
        .map(|attr| {
            let auth = authority_of(attr)?;
            pks.get(auth).ok_or_else(|| AbeError::UnknownAuthority(auth.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = lsss.num_cols();
    let s = random_scalar(rng);
    let mut z = vec![s];
    let mut w = vec![Scalar::zero()];
    for _ in 1..n {
        z.push(random_scalar(rng));
        w.push(random_scalar(rng));
    }

    let egg = gp.egg();
    let mut secrets = EncryptionSecrets { s, lambdas: Vec::new(), omegas: Vec::new(), ts: Vec::new() };
    let mut rows = Vec::with_capacity(lsss.num_rows());
    for (x, pk) in row_keys.into_iter().enumerate() {
        let lambda = lsss.row_dot(x, &z);
        let omega = lsss.row_dot(x, &w);
        let t = random_scalar(rng);
        rows.push(CiphertextRow {
            c1: egg * lambda + pk.t * t,
            c2: g2_mul(&gp.g2(), &-t),
            c3: (pk.b2 * t + gp.g2() * omega).into(),
            c4: g1_mul(&gp.hash_attr(&lsss.row_attr[x]), &t),
        });
        secrets.lambdas.push(lambda);
        secrets.omegas.push(omega);
        secrets.ts.push(t);
    }
    let ct = Ciphertext {
        version: FORMAT_VERSION,
        curve_id: gp.curve_id(),
        policy: policy_text.to_string(),
        lsss,
        c0: *m + egg * s,
        rows,
    };
    Ok((ct, secrets))
}

/// `D_x = C1x · e(H(gid), C3x) · e(K0, C2x) · e(C4x, K1)`.
pub(crate) fn row_factor(row: &CiphertextRow, h_gid: &G1, key: &DecryptionKey) -> Gt {
    row.c1 + pairing_product(&[(*h_gid, row.c3), (key.k0, row.c2), (row.c4, key.k1)])
}

pub fn abe_decrypt(gp: &GlobalParams, c: &Ciphertext, keys: &[DecryptionKey]) -> Result<Gt, AbeError> {
    let gid = common_gid(keys)?;
    c.validate(gp)?;
    let by_attr: BTreeMap<&str, &DecryptionKey> = keys.iter().map(|k| (k.attr.as_str(), k)).collect();
    let attrs: AttributeSet = by_attr.keys().copied().collect();
    let coeffs = policy::reconstruction_coeffs(&c.lsss, &attrs).ok_or(AbeError::PolicyNotSatisfied)?;

    let h_gid = gp.hash_gid(gid);
    let mut blind = Gt::zero();
    for (x, cx) in coeffs.iter().enumerate() {
        if cx.is_zero() {
            continue;
        }
        let key = by_attr[c.lsss.row_attr[x].as_str()];
        blind += row_factor(&c.rows[x], &h_gid, key) * cx;
    }
    Ok(c.c0 - blind)
}

fn common_gid(keys: &[DecryptionKey]) -> Result<&Gid, AbeError> {
    let first = &keys.first().ok_or(AbeError::EmptyKeySet)?.gid;
    if keys.iter().any(|k| &k.gid != first) {
        return Err(AbeError::MixedGid);
    }
    Ok(first)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridCiphertext {
    pub abe: Ciphertext,
    #[serde(with = "algebra::hex_bytes")]
    pub ct: Vec<u8>,
}

pub fn hybrid_encrypt<R: RngCore + CryptoRng>(
    gp: &GlobalParams,
    m: &[u8],
    policy_text: &str,
    pks: &BTreeMap<String, AuthorityPublicKey>,
    rng: &mut R,
) -> Result<HybridCiphertext, AbeError> {
    if m.is_empty() {
        return Err(AbeError::EmptyPayload);
    }
    let seed = random_gt(&gp.ctx, rng);
    let abe = abe_encrypt(gp, &seed, policy_text, pks, rng)?;
    let mut ct = m.to_vec();
    algebra::kdf_xor_in_place(&seed, &mut ct);
    Ok(HybridCiphertext { abe, ct })
}

pub fn hybrid_decrypt(gp: &GlobalParams, hc: &HybridCiphertext, keys: &[DecryptionKey]) -> Result<Vec<u8>, AbeError> {
    let seed = abe_decrypt(gp, &hc.abe, keys)?;
    let mut m = hc.ct.clone();
    algebra::kdf_xor_in_place(&seed, &mut m);
    Ok(m)
}
