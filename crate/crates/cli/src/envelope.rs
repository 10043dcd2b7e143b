//! Self-contained key-submission envelopes: everything a third party needs
//! to re-run both verifiers, plus a bit-flip tamper tool.

use std::fmt;
use std::str::FromStr;

use acabe::accountability::{abe_enc_key, check_key, check_key_pc, gen_proofs, KeyStatement, KeySubmission};
use acabe::algebra::{self, hex_point, Scalar, G1};
use acabe::cpabe::{auth_setup, global_setup, AbeError, AuthorityPublicKey, Gid, GlobalParams, UserKeyPair};
use ark_ec::AffineRepr;
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyEnvelope {
    pub version: u32,
    pub issuer: AuthorityPublicKey,
    #[serde(with = "hex_point")]
    pub user_pk: G1,
    pub submission: KeySubmission,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdicts {
    pub check_key: bool,
    pub check_key_pc: bool,
}

impl Verdicts {
    pub fn agree(&self) -> bool {
        self.check_key == self.check_key_pc
    }
}

impl VerifyEnvelope {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn params(&self) -> Result<GlobalParams, AbeError> {
        global_setup(self.submission.curve_id.as_str())
    }

    pub fn verify(&self, gp: &GlobalParams) -> Verdicts {
        let ek = &self.submission.ek;
        let stmt = KeyStatement::new(&ek.gid, &ek.attr, &self.user_pk, &self.issuer);
        Verdicts {
            check_key: check_key(gp, &stmt, ek, &self.submission.proof),
            check_key_pc: check_key_pc(gp, &stmt, ek, &self.submission.proof),
        }
    }

    /// A fresh honest issuance of `attr` under `gid`.
    pub fn issue<R: RngCore + CryptoRng>(gp: &GlobalParams, gid: &Gid, attr: &str, user: &str, rng: &mut R) -> Result<Self, AbeError> {
        let theta = acabe::cpabe::authority_of(attr)?;
        let auth = auth_setup(gp, theta, rng);
        let u = UserKeyPair::generate(gp, rng);
        let (ek, w) = abe_enc_key(gid, gp, attr, &auth, &u.pk, rng)?;
        let proof = gen_proofs(gp, &w, &ek, rng);
        Ok(VerifyEnvelope {
            version: acabe::cpabe::FORMAT_VERSION,
            issuer: auth.public,
            user_pk: u.pk,
            submission: KeySubmission::new(gp, user, ek, proof),
        })
    }
}

/// The mutable group elements and scalars of an encrypted key and its proof.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Ek0,
    Ek1,
    Ek2,
    Ek0p,
    Ek1p,
    Ek2p,
    C,
    W1,
    W2,
    W3,
}

impl Field {
    pub const ALL: [Field; 10] =
        [Field::Ek0, Field::Ek1, Field::Ek2, Field::Ek0p, Field::Ek1p, Field::Ek2p, Field::C, Field::W1, Field::W2, Field::W3];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Ek0 => "ek0",
            Field::Ek1 => "ek1",
            Field::Ek2 => "ek2",
            Field::Ek0p => "ek0p",
            Field::Ek1p => "ek1p",
            Field::Ek2p => "ek2p",
            Field::C => "c",
            Field::W1 => "w1",
            Field::W2 => "w2",
            Field::W3 => "w3",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown field `{s}`; expected one of ek0 ek1 ek2 ek0p ek1p ek2p c w1 w2 w3"))
    }
}

/// Flip the lowest bit at or above `from` whose flip still decodes to a
/// valid element. Gives up after 64 candidates: almost no G2 flip lands in
/// the prime-order subgroup.
fn flip_point<T: CanonicalSerialize + CanonicalDeserialize>(x: &T, from: usize) -> Option<(T, usize)> {
    let bytes = algebra::encode(x);
    (from..(from + 64).min(bytes.len() * 8)).find_map(|bit| {
        let mut b = bytes.clone();
        b[bit / 8] ^= 1 << (bit % 8);
        algebra::decode::<T>(&b, "flipped").ok().map(|y| (y, bit))
    })
}

fn flip_scalar(s: &Scalar, from: usize) -> (Scalar, usize) {
    let bytes = algebra::encode_scalar(s);
    for bit in from..bytes.len() * 8 {
        let mut b = bytes;
        let i = bytes.len() - 1 - bit / 8;
        b[i] ^= 1 << (bit % 8);
        if let Ok(t) = algebra::decode_scalar(&b) {
            return (t, bit);
        }
    }
    unreachable!("bit 1 or 0 of a scalar always flips to a canonical value")
}

/// Single-bit corruption of one field. The result is still a well-formed
/// envelope, so only the verifiers can catch it.
pub fn tamper(env: &VerifyEnvelope, field: Field, from_bit: usize) -> (VerifyEnvelope, usize) {
    let mut out = env.clone();
    let ek = &mut out.submission.ek;
    let p = &mut out.submission.proof;
    let bit = match field {
        Field::Ek0 => flip_into(&mut ek.ek0, from_bit),
        Field::Ek1 => flip_into(&mut ek.ek1, from_bit),
        Field::Ek2 => flip_into(&mut ek.ek2, from_bit),
        Field::Ek0p => flip_into(&mut p.ek0p, from_bit),
        Field::Ek1p => flip_into(&mut p.ek1p, from_bit),
        Field::Ek2p => flip_into(&mut p.ek2p, from_bit),
        Field::C => flip_scalar_into(&mut p.c, from_bit),
        Field::W1 => flip_scalar_into(&mut p.w1, from_bit),
        Field::W2 => flip_scalar_into(&mut p.w2, from_bit),
        Field::W3 => flip_scalar_into(&mut p.w3, from_bit),
    };
    (out, bit)
}

/// Bit flip, or `x + generator` when no nearby flip decodes. The second
/// case reports bit index `usize::MAX`.
fn flip_into<A: AffineRepr + CanonicalSerialize + CanonicalDeserialize>(x: &mut A, from: usize) -> usize {
    match flip_point(x, from) {
        Some((y, bit)) => {
            *x = y;
            bit
        }
        None => {
            *x = (*x + A::generator()).into();
            usize::MAX
        }
    }
}

fn flip_scalar_into(x: &mut Scalar, from: usize) -> usize {
    let (y, bit) = flip_scalar(x, from);
    *x = y;
    bit
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn honest_accepts_every_flip_rejects() {
        let gp = global_setup("bn254").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let env = VerifyEnvelope::issue(&gp, &Gid::new("g").unwrap(), "female@AUTH3", "player2", &mut rng).unwrap();
        assert_eq!(env.verify(&gp), Verdicts { check_key: true, check_key_pc: true });
        for f in Field::ALL {
            let (bad, _) = tamper(&env, f, 0);
            assert_ne!(bad, env, "{f}");
            assert_eq!(bad.verify(&gp), Verdicts { check_key: false, check_key_pc: false }, "{f}");
            let text = serde_json::to_string(&bad).unwrap();
            assert_eq!(VerifyEnvelope::from_json(&text).unwrap(), bad);
        }
    }
}
