//! Publicly deliverable CP-ABE keys and the NIZK that makes their issuance
//! accountable.
//!
//! An authority blinds `K0` under the target user's public key
//! (`EK0 = pk_u^α · H(GID)^β · F(u)^d`) so the key can travel over the
//! ledger, and proves knowledge of `(α, β, d)` with a linear Sigma protocol
//! made non-interactive by Fiat–Shamir. Two verifiers are provided:
//! [`check_key`] uses a G2 exponentiation for the `d` relation, while
//! [`check_key_pc`] moves it to G1 and pins `EK1` to `EK2` with a pairing
//! check, which is the shape a pairing-precompile contract can afford.

use ark_ec::{AffineRepr, CurveGroup};
use ark_ff::Field;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{self, g1_msm, g1_mul, g2_mul, hex_point, hex_scalar, pairing_check, random_scalar, Scalar, G1, G2};
use crate::cpabe::{self, AbeError, AuthorityKeyPair, AuthorityPublicKey, DecryptionKey, Gid, GlobalParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccountabilityError {
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error("recovered key does not verify against the issuer")]
    InvalidRecovery,
    #[error("transcripts share a challenge; extraction impossible")]
    ExtractionImpossible,
    #[error("transcripts do not share commitments")]
    CommitmentMismatch,
}

/// `(EK0, EK1, EK2)` with the context it was issued for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedKey {
    pub gid: Gid,
    pub attr: String,
    pub issuer: String,
    /// The target user's `pk_u = g1^y`.
    #[serde(with = "hex_point")]
    pub target: G1,
    #[serde(with = "hex_point")]
    pub ek0: G1,
    #[serde(with = "hex_point")]
    pub ek1: G2,
    #[serde(with = "hex_point")]
    pub ek2: G1,
}

impl EncryptedKey {
    /// Deterministic issuance for given exponents.
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        gp: &GlobalParams,
        gid: &Gid,
        attr: &str,
        issuer: &str,
        pk_u: &G1,
        alpha: &Scalar,
        beta: &Scalar,
        d: &Scalar,
    ) -> Self {
        EncryptedKey {
            gid: gid.clone(),
            attr: attr.to_string(),
            issuer: issuer.to_string(),
            target: *pk_u,
            ek0: g1_msm(&[(*pk_u, *alpha), (gp.hash_gid(gid), *beta), (gp.hash_attr(attr), *d)]),
            ek1: g2_mul(&gp.g2(), d),
            ek2: g1_mul(&gp.g1(), d),
        }
    }

    /// Bytes of the canonical group-element encoding.
    pub fn encoded_len(&self) -> usize {
        algebra::encode(&self.ek0).len() + algebra::encode(&self.ek1).len() + algebra::encode(&self.ek2).len()
    }
}

/// Issuer-side secrets behind one encrypted key. Never serialized.
#[derive(Clone)]
pub struct IssuanceWitness {
    pub alpha: Scalar,
    pub beta: Scalar,
    pub d: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyProof {
    #[serde(with = "hex_point")]
    pub ek0p: G1,
    #[serde(with = "hex_point")]
    pub ek1p: G2,
    #[serde(with = "hex_point")]
    pub ek2p: G1,
    #[serde(with = "hex_scalar")]
    pub c: Scalar,
    #[serde(with = "hex_scalar")]
    pub w1: Scalar,
    #[serde(with = "hex_scalar")]
    pub w2: Scalar,
    #[serde(with = "hex_scalar")]
    pub w3: Scalar,
}

/// What the Fiat–Shamir challenge hashes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    /// Curve, GID, attribute, target key, issuer and all six group elements.
    #[default]
    Bound,
    /// `Hash(EK0, EK0')` only; reproduces the narrow two-element transcript.
    Narrow,
}

/// The public statement an encrypted key is checked against. Verifiers take
/// these values from their own records, not from the submitted key.
#[derive(Clone, Copy, Debug)]
pub struct KeyStatement<'a> {
    pub gid: &'a Gid,
    pub attr: &'a str,
    pub pk_u: &'a G1,
    pub issuer: &'a AuthorityPublicKey,
}

impl<'a> KeyStatement<'a> {
    pub fn new(gid: &'a Gid, attr: &'a str, pk_u: &'a G1, issuer: &'a AuthorityPublicKey) -> Self {
        KeyStatement { gid, attr, pk_u, issuer }
    }

    fn matches(&self, ek: &EncryptedKey) -> bool {
        &ek.gid == self.gid
            && ek.attr == self.attr
            && &ek.target == self.pk_u
            && ek.issuer == self.issuer.theta
            && cpabe::authority_of(self.attr).is_ok_and(|a| a == self.issuer.theta)
    }
}

pub fn abe_enc_key<R: RngCore + CryptoRng>(
    gid: &Gid,
    gp: &GlobalParams,
    attr: &str,
    sk: &AuthorityKeyPair,
    pk_u: &G1,
    rng: &mut R,
) -> Result<(EncryptedKey, IssuanceWitness), AbeError> {
    cpabe::ensure_owned(attr, sk.theta())?;
    let d = random_scalar(rng);
    let ek = EncryptedKey::derive(gp, gid, attr, sk.theta(), pk_u, &sk.alpha, &sk.beta, &d);
    Ok((ek, IssuanceWitness { alpha: sk.alpha, beta: sk.beta, d }))
}

/// Unblind an encrypted key: `K0 = EK0 / (g1^α)^{y-1}`, `K1 = EK1`.
pub fn get_key(ek: &EncryptedKey, a1: &G1, y: &Scalar) -> DecryptionKey {
    let y_minus_one = *y - Scalar::from(1u64);
    let k0 = (ek.ek0.into_group() - *a1 * y_minus_one).into_affine();
    DecryptionKey { gid: ek.gid.clone(), attr: ek.attr.clone(), k0, k1: ek.ek1 }
}

/// [`get_key`] followed by the public key-shape check against the issuer.
pub fn get_key_checked(
    gp: &GlobalParams,
    ek: &EncryptedKey,
    issuer: &AuthorityPublicKey,
    y: &Scalar,
) -> Result<DecryptionKey, AccountabilityError> {
    let key = get_key(ek, &issuer.a1, y);
    if !key.verify(gp, issuer) {
        return Err(AccountabilityError::InvalidRecovery);
    }
    Ok(key)
}

fn challenge(gp: &GlobalParams, mode: TranscriptMode, ek: &EncryptedKey, ek0p: &G1, ek1p: &G2, ek2p: &G1) -> Scalar {
    use algebra::encode;
    match mode {
        TranscriptMode::Narrow => algebra::fiat_shamir([encode(&ek.ek0), encode(ek0p)]),
        TranscriptMode::Bound => algebra::fiat_shamir([
            b"acabe/key-proof/v1".to_vec(),
            gp.curve_id().as_str().as_bytes().to_vec(),
            ek.gid.as_bytes().to_vec(),
            ek.attr.as_bytes().to_vec(),
            encode(&ek.target),
            ek.issuer.as_bytes().to_vec(),
            encode(&ek.ek0),
            encode(&ek.ek1),
            encode(&ek.ek2),
            encode(ek0p),
            encode(ek1p),
            encode(ek2p),
        ]),
    }
}

/// The prover between commitment and response, for running the Sigma
/// protocol interactively or forking it at the challenge.
pub struct KeyProver<'w> {
    witness: &'w IssuanceWitness,
    nonces: [Scalar; 3],
    ek0p: G1,
    ek1p: G2,
    ek2p: G1,
}

impl<'w> KeyProver<'w> {
    pub fn commit<R: RngCore + CryptoRng>(gp: &GlobalParams, witness: &'w IssuanceWitness, ek: &EncryptedKey, rng: &mut R) -> Self {
        let nonces = [random_scalar(rng), random_scalar(rng), random_scalar(rng)];
        let ek0p = g1_msm(&[(ek.target, nonces[0]), (gp.hash_gid(&ek.gid), nonces[1]), (gp.hash_attr(&ek.attr), nonces[2])]);
        KeyProver {
            witness,
            nonces,
            ek0p,
            ek1p: g2_mul(&gp.g2(), &nonces[2]),
            ek2p: g1_mul(&gp.g1(), &nonces[2]),
        }
    }

    pub fn fiat_shamir_challenge(&self, gp: &GlobalParams, ek: &EncryptedKey, mode: TranscriptMode) -> Scalar {
        challenge(gp, mode, ek, &self.ek0p, &self.ek1p, &self.ek2p)
    }

    pub fn respond(&self, c: Scalar) -> KeyProof {
        let [a, b, d] = self.nonces;
        KeyProof {
            ek0p: self.ek0p,
            ek1p: self.ek1p,
            ek2p: self.ek2p,
            c,
            w1: a + c * self.witness.alpha,
            w2: b + c * self.witness.beta,
            w3: d + c * self.witness.d,
        }
    }
}

pub fn gen_proofs<R: RngCore + CryptoRng>(gp: &GlobalParams, witness: &IssuanceWitness, ek: &EncryptedKey, rng: &mut R) -> KeyProof {
    gen_proofs_with_mode(gp, witness, ek, TranscriptMode::Bound, rng)
}

pub fn gen_proofs_with_mode<R: RngCore + CryptoRng>(
    gp: &GlobalParams,
    witness: &IssuanceWitness,
    ek: &EncryptedKey,
    mode: TranscriptMode,
    rng: &mut R,
) -> KeyProof {
    let prover = KeyProver::commit(gp, witness, ek, rng);
    let c = prover.fiat_shamir_challenge(gp, ek, mode);
    prover.respond(c)
}

/// Outcome of each verification equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckReport {
    /// Statement matches the key and `c` equals the recomputed challenge.
    pub challenge: bool,
    /// `pk_u^{w1} H(gid)^{w2} F(u)^{w3} = EK0' · EK0^c`
    pub eq1: bool,
    /// `g2^{w3} = EK1' · EK1^c` (G2 verifier) or `g1^{w3} = EK2' · EK2^c`
    pub eq2: bool,
    /// `e(EK2, g2) = e(g1, EK1)`; always true for the G2 verifier.
    pub eq3_link: bool,
    /// `e(pk_u, g2^α) e(H(gid), g2^β) e(F(u), EK1) = e(EK0, g2)`
    pub eq3: bool,
}

impl CheckReport {
    pub fn accepted(&self) -> bool {
        self.challenge && self.eq1 && self.eq2 && self.eq3_link && self.eq3
    }
}

fn eq1(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey, p: &KeyProof) -> bool {
    let lhs = g1_msm(&[(*stmt.pk_u, p.w1), (gp.hash_gid(stmt.gid), p.w2), (gp.hash_attr(stmt.attr), p.w3)]);
    lhs == (p.ek0p.into_group() + ek.ek0 * p.c).into_affine()
}

fn eq2_g2(gp: &GlobalParams, ek: &EncryptedKey, p: &KeyProof) -> bool {
    g2_mul(&gp.g2(), &p.w3) == (p.ek1p.into_group() + ek.ek1 * p.c).into_affine()
}

fn eq2_g1(gp: &GlobalParams, ek: &EncryptedKey, p: &KeyProof) -> bool {
    g1_mul(&gp.g1(), &p.w3) == (p.ek2p.into_group() + ek.ek2 * p.c).into_affine()
}

fn eq3(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey) -> bool {
    pairing_check(&[
        (*stmt.pk_u, stmt.issuer.a2),
        (gp.hash_gid(stmt.gid), stmt.issuer.b2),
        (gp.hash_attr(stmt.attr), ek.ek1),
        (-ek.ek0, gp.g2()),
    ])
}

fn eq3_link(gp: &GlobalParams, ek: &EncryptedKey) -> bool {
    pairing_check(&[(ek.ek2, gp.g2()), (-gp.g1(), ek.ek1)])
}

fn challenge_ok(gp: &GlobalParams, mode: TranscriptMode, stmt: &KeyStatement<'_>, ek: &EncryptedKey, p: &KeyProof) -> bool {
    stmt.matches(ek) && challenge(gp, mode, ek, &p.ek0p, &p.ek1p, &p.ek2p) == p.c
}

pub fn check_key_report(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey, proof: &KeyProof, mode: TranscriptMode) -> CheckReport {
    CheckReport {
        challenge: challenge_ok(gp, mode, stmt, ek, proof),
        eq1: eq1(gp, stmt, ek, proof),
        eq2: eq2_g2(gp, ek, proof),
        eq3_link: true,
        eq3: eq3(gp, stmt, ek),
    }
}

pub fn check_key_pc_report(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey, proof: &KeyProof, mode: TranscriptMode) -> CheckReport {
    CheckReport {
        challenge: challenge_ok(gp, mode, stmt, ek, proof),
        eq1: eq1(gp, stmt, ek, proof),
        eq2: eq2_g1(gp, ek, proof),
        eq3_link: eq3_link(gp, ek),
        eq3: eq3(gp, stmt, ek),
    }
}

/// Verifier with the `d` relation checked in G2.
pub fn check_key(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey, proof: &KeyProof) -> bool {
    // Short-circuit in cost order; the report variants evaluate everything.
    challenge_ok(gp, TranscriptMode::Bound, stmt, ek, proof)
        && eq1(gp, stmt, ek, proof)
        && eq2_g2(gp, ek, proof)
        && eq3(gp, stmt, ek)
}

/// Verifier with the `d` relation checked in G1 and tied to `EK1` by a
/// pairing check; every pairing equation is a boolean product check.
pub fn check_key_pc(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey, proof: &KeyProof) -> bool {
    challenge_ok(gp, TranscriptMode::Bound, stmt, ek, proof)
        && eq1(gp, stmt, ek, proof)
        && eq2_g1(gp, ek, proof)
        && eq3_link(gp, ek)
        && eq3(gp, stmt, ek)
}

/// Accepts iff every equation of both verifiers holds for the challenge
/// carried in the proof, which is taken as given instead of recomputed.
/// This models a programmed random oracle and is only meaningful for
/// analysing simulated transcripts.
pub fn verify_with_challenge(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey, proof: &KeyProof) -> bool {
    stmt.matches(ek)
        && eq1(gp, stmt, ek, proof)
        && eq2_g2(gp, ek, proof)
        && eq2_g1(gp, ek, proof)
        && eq3_link(gp, ek)
        && eq3(gp, stmt, ek)
}

/// Honest-verifier simulator: picks responses and challenge first and solves
/// for the commitments. Needs no witness.
pub fn simulate_proof<R: RngCore + CryptoRng>(gp: &GlobalParams, stmt: &KeyStatement<'_>, ek: &EncryptedKey, rng: &mut R) -> KeyProof {
    let (w1, w2, w3, c) = (random_scalar(rng), random_scalar(rng), random_scalar(rng), random_scalar(rng));
    let ek0p = g1_msm(&[(*stmt.pk_u, w1), (gp.hash_gid(stmt.gid), w2), (gp.hash_attr(stmt.attr), w3), (ek.ek0, -c)]);
    let ek1p = (gp.g2() * w3 - ek.ek1 * c).into_affine();
    let ek2p = (gp.g1() * w3 - ek.ek2 * c).into_affine();
    KeyProof { ek0p, ek1p, ek2p, c, w1, w2, w3 }
}

/// Special-soundness extractor: two accepting transcripts on one commitment
/// with distinct challenges yield `(α, β, d)`.
pub fn extract_witness(t1: &KeyProof, t2: &KeyProof) -> Result<(Scalar, Scalar, Scalar), AccountabilityError> {
    if (t1.ek0p, t1.ek1p, t1.ek2p) != (t2.ek0p, t2.ek1p, t2.ek2p) {
        return Err(AccountabilityError::CommitmentMismatch);
    }
    let inv = (t2.c - t1.c).inverse().ok_or(AccountabilityError::ExtractionImpossible)?;
    Ok(((t2.w1 - t1.w1) * inv, (t2.w2 - t1.w2) * inv, (t2.w3 - t1.w3) * inv))
}

/// The payload an authority posts to the ledger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySubmission {
    pub version: u32,
    pub curve_id: algebra::CurveId,
    /// Ledger address of the requesting user.
    pub user: String,
    pub ek: EncryptedKey,
    pub proof: KeyProof,
}

impl KeySubmission {
    pub fn new(gp: &GlobalParams, user: impl Into<String>, ek: EncryptedKey, proof: KeyProof) -> Self {
        KeySubmission { version: cpabe::FORMAT_VERSION, curve_id: gp.curve_id(), user: user.into(), ek, proof }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpabe::{auth_setup, global_setup, UserKeyPair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        gp: GlobalParams,
        auth: AuthorityKeyPair,
        user: UserKeyPair,
        gid: Gid,
        attr: String,
        ek: EncryptedKey,
        witness: IssuanceWitness,
        rng: ChaCha20Rng,
    }

    fn fixture(seed: u64) -> Fixture {
        let gp = global_setup("bn254").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let auth = auth_setup(&gp, "AUTH3", &mut rng);
        let user = UserKeyPair::generate(&gp, &mut rng);
        let gid = Gid::new(format!("GID-{seed}")).unwrap();
        let attr = "female@AUTH3".to_string();
        let (ek, witness) = abe_enc_key(&gid, &gp, &attr, &auth, &user.pk, &mut rng).unwrap();
        Fixture { gp, auth, user, gid, attr, ek, witness, rng }
    }

    impl Fixture {
        fn stmt(&self) -> KeyStatement<'_> {
            KeyStatement::new(&self.gid, &self.attr, &self.user.pk, &self.auth.public)
        }
    }

    #[test]
    fn ek_links_g1_and_g2_exponents() {
        let f = fixture(1);
        assert!(pairing_check(&[(f.ek.ek2, f.gp.g2()), (-f.gp.g1(), f.ek.ek1)]));
        assert_eq!(f.ek.encoded_len(), 128);
    }

    #[test]
    fn ek0_differs_from_k0_unless_y_is_one() {
        let f = fixture(2);
        let k = EncryptedKey::derive(&f.gp, &f.gid, &f.attr, "AUTH3", &f.gp.g1(), &f.auth.alpha, &f.auth.beta, &f.witness.d);
        assert_ne!(k.ek0, f.ek.ek0);
        // Divide out (g1^α)^{y-1} by hand, using knowledge of y.
        let ym1 = f.user.y - Scalar::from(1u64);
        let k0 = (f.ek.ek0.into_group() - f.gp.g1() * (f.auth.alpha * ym1)).into_affine();
        assert_eq!(k0, k.ek0);
        let key = DecryptionKey { gid: f.gid.clone(), attr: f.attr.clone(), k0, k1: f.ek.ek1 };
        assert!(key.verify(&f.gp, &f.auth.public));
    }

    #[test]
    fn get_key_recovers_only_with_right_secret() {
        let f = fixture(3);
        let key = get_key_checked(&f.gp, &f.ek, &f.auth.public, &f.user.y).unwrap();
        assert!(key.verify(&f.gp, &f.auth.public));
        let wrong = f.user.y + Scalar::from(1u64);
        assert_eq!(get_key_checked(&f.gp, &f.ek, &f.auth.public, &wrong), Err(AccountabilityError::InvalidRecovery));
    }

    #[test]
    fn get_key_with_unit_secret_is_identity_unblinding() {
        let mut f = fixture(4);
        let one = UserKeyPair::from_secret(&f.gp, Scalar::from(1u64));
        assert_eq!(one.pk, f.gp.g1());
        let (ek, _) = abe_enc_key(&f.gid, &f.gp, &f.attr, &f.auth, &one.pk, &mut f.rng).unwrap();
        let key = get_key(&ek, &f.auth.public.a1, &one.y);
        assert_eq!(key.k0, ek.ek0);
        assert!(key.verify(&f.gp, &f.auth.public));
    }

    #[test]
    fn honest_proofs_pass_both_verifiers() {
        let mut f = fixture(5);
        let p1 = gen_proofs(&f.gp, &f.witness, &f.ek, &mut f.rng);
        let p2 = gen_proofs(&f.gp, &f.witness, &f.ek, &mut f.rng);
        assert_ne!(p1.ek0p, p2.ek0p);
        assert_ne!(p1.c, p2.c);
        for p in [&p1, &p2] {
            assert!(check_key(&f.gp, &f.stmt(), &f.ek, p));
            assert!(check_key_pc(&f.gp, &f.stmt(), &f.ek, p));
        }
    }

    #[test]
    fn narrow_transcript_mode_verifies_under_its_own_mode() {
        let mut f = fixture(6);
        let p = gen_proofs_with_mode(&f.gp, &f.witness, &f.ek, TranscriptMode::Narrow, &mut f.rng);
        assert!(check_key_report(&f.gp, &f.stmt(), &f.ek, &p, TranscriptMode::Narrow).accepted());
        assert!(check_key_pc_report(&f.gp, &f.stmt(), &f.ek, &p, TranscriptMode::Narrow).accepted());
        assert!(!check_key(&f.gp, &f.stmt(), &f.ek, &p));
    }

    #[test]
    fn wrong_target_key_is_rejected() {
        let mut f = fixture(7);
        let p = gen_proofs(&f.gp, &f.witness, &f.ek, &mut f.rng);
        let other = UserKeyPair::generate(&f.gp, &mut f.rng);
        let stmt = KeyStatement::new(&f.gid, &f.attr, &other.pk, &f.auth.public);
        assert!(!check_key(&f.gp, &stmt, &f.ek, &p));
        assert!(!check_key_pc(&f.gp, &stmt, &f.ek, &p));
        // Even a key re-labelled with the other target fails the equations.
        let mut relabelled = f.ek.clone();
        relabelled.target = other.pk;
        let r = check_key_pc_report(&f.gp, &stmt, &relabelled, &p, TranscriptMode::Bound);
        assert!(!r.accepted() && !r.eq3);
    }

    #[test]
    fn ek2_shifted_in_exponent_fails_pairing_link() {
        let mut f = fixture(8);
        let p = gen_proofs(&f.gp, &f.witness, &f.ek, &mut f.rng);
        let mut ek = f.ek.clone();
        ek.ek2 = g1_mul(&f.gp.g1(), &(f.witness.d + Scalar::from(1u64)));
        let r = check_key_pc_report(&f.gp, &f.stmt(), &ek, &p, TranscriptMode::Bound);
        assert!(!r.eq3_link);
        assert!(!check_key_pc(&f.gp, &f.stmt(), &ek, &p));
    }

    #[test]
    fn simulator_fools_only_the_programmed_oracle() {
        let f = fixture(9);
        let mut rng = f.rng.clone();
        let stmt = f.stmt();
        let sim = simulate_proof(&f.gp, &stmt, &f.ek, &mut rng);
        assert!(verify_with_challenge(&f.gp, &stmt, &f.ek, &sim));
        assert!(!check_key(&f.gp, &stmt, &f.ek, &sim));
        assert!(!check_key_pc(&f.gp, &stmt, &f.ek, &sim));
    }

    #[test]
    fn fork_and_extract_recovers_secrets() {
        let mut f = fixture(10);
        let prover = KeyProver::commit(&f.gp, &f.witness, &f.ek, &mut f.rng);
        let c1 = prover.fiat_shamir_challenge(&f.gp, &f.ek, TranscriptMode::Bound);
        let c2 = random_scalar(&mut f.rng);
        let t1 = prover.respond(c1);
        let t2 = prover.respond(c2);
        assert!(check_key(&f.gp, &f.stmt(), &f.ek, &t1));
        assert!(verify_with_challenge(&f.gp, &f.stmt(), &f.ek, &t2));
        let (a, b, d) = extract_witness(&t1, &t2).unwrap();
        assert_eq!((a, b, d), (f.auth.alpha, f.auth.beta, f.witness.d));
        assert_eq!(g2_mul(&f.gp.g2(), &d), f.ek.ek1);
        assert_eq!(extract_witness(&t1, &t1), Err(AccountabilityError::ExtractionImpossible));
        let other = gen_proofs(&f.gp, &f.witness, &f.ek, &mut f.rng);
        assert_eq!(extract_witness(&t1, &other), Err(AccountabilityError::CommitmentMismatch));
    }

    #[test]
    fn malleated_key_stays_bound_to_its_attribute() {
        let mut f = fixture(11);
        let key = get_key(&f.ek, &f.auth.public.a1, &f.user.y);
        let r = random_scalar(&mut f.rng);
        let mut forged = key.clone();
        forged.k0 = (key.k0.into_group() + f.gp.hash_attr(&f.attr) * r).into_affine();
        forged.k1 = (key.k1.into_group() + f.gp.g2() * r).into_affine();
        assert!(forged.verify(&f.gp, &f.auth.public));
        forged.attr = "male@AUTH3".into();
        assert!(!forged.verify(&f.gp, &f.auth.public));
    }

    #[test]
    fn submission_json_round_trip() {
        let mut f = fixture(12);
        let p = gen_proofs(&f.gp, &f.witness, &f.ek, &mut f.rng);
        let sub = KeySubmission::new(&f.gp, "player2", f.ek.clone(), p);
        let js = serde_json::to_string(&sub).unwrap();
        let back: KeySubmission = serde_json::from_str(&js).unwrap();
        assert_eq!(back, sub);
        assert!(check_key_pc(&f.gp, &f.stmt(), &back.ek, &back.proof));
    }

    #[test]
    fn issuance_rejects_foreign_attribute() {
        let mut f = fixture(13);
        assert!(matches!(
            abe_enc_key(&f.gid, &f.gp, "level25@AUTH1", &f.auth, &f.user.pk, &mut f.rng),
            Err(AbeError::AttributeNotOwned { .. })
        ));
    }
}
