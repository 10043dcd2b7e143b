//! Size and timing sweeps over attribute count and payload size.
//!
//! Absolute timings depend on the host; only trend shapes mean anything.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use acabe::accountability::{abe_enc_key, check_key_pc, gen_proofs, get_key, KeyStatement};
use acabe::algebra;
use acabe::cpabe::{
    abe_encrypt, abe_keygen, auth_setup, global_setup, hybrid_decrypt, hybrid_encrypt, AuthorityKeyPair,
    AuthorityPublicKey, DecryptionKey, Gid, GlobalParams, UserKeyPair,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "schema_version,metric,attrs,payload_bytes,value,unit";

const AUTHORITIES: usize = 4;
const MIB: f64 = 1_048_576.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("max attrs must be at least 1")]
    NoAttributes,
    #[error("payload must be positive")]
    EmptyPayload,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Abe(#[from] acabe::cpabe::AbeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub schema_version: u32,
    pub metric: &'static str,
    pub attrs: usize,
    pub payload_bytes: u64,
    pub value: f64,
    pub unit: &'static str,
}

impl BenchRecord {
    fn new(metric: &'static str, attrs: usize, payload_bytes: u64, value: f64, unit: &'static str) -> Self {
        BenchRecord { schema_version: SCHEMA_VERSION, metric, attrs, payload_bytes, value, unit }
    }
}

pub fn write_csv<W: Write>(records: &[BenchRecord], w: W) -> Result<(), BenchError> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(CSV_HEADER.split(','))?;
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `1, step, 2·step, …` up to and including `max`.
pub fn sweep(max: usize, step: usize) -> Vec<usize> {
    let step = step.max(1);
    let mut v = vec![1];
    v.extend((1..).map(|k| k * step).take_while(|&n| n <= max).filter(|&n| n > 1));
    if *v.last().unwrap() != max && max > 1 {
        v.push(max);
    }
    v
}

/// Authorities, a user and a GID, reused across sweep points.
pub struct Fixture {
    pub gp: GlobalParams,
    pub auths: Vec<AuthorityKeyPair>,
    pub pks: BTreeMap<String, AuthorityPublicKey>,
    pub user: UserKeyPair,
    pub gid: Gid,
    pub rng: ChaCha20Rng,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let gp = global_setup("bn254").expect("bn254 is supported");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let auths: Vec<_> = (0..AUTHORITIES).map(|i| auth_setup(&gp, &format!("AUTH{i}"), &mut rng)).collect();
        let pks = auths.iter().map(|a| (a.theta().to_string(), a.public.clone())).collect();
        let user = UserKeyPair::generate(&gp, &mut rng);
        Fixture { gp, auths, pks, user, gid: Gid::new("bench").unwrap(), rng }
    }

    pub fn attr(i: usize) -> String {
        format!("a{i}@AUTH{}", i % AUTHORITIES)
    }

    /// Conjunction of `n` distinct leaves, so decryption uses every row.
    pub fn policy(n: usize) -> String {
        (0..n).map(Self::attr).collect::<Vec<_>>().join(" AND ")
    }

    fn authority(&self, i: usize) -> &AuthorityKeyPair {
        &self.auths[i % AUTHORITIES]
    }

    pub fn keys(&mut self, n: usize) -> Vec<DecryptionKey> {
        (0..n)
            .map(|i| abe_keygen(&self.gid, &self.gp, &Self::attr(i), &self.auths[i % AUTHORITIES], &mut self.rng).unwrap())
            .collect()
    }

    /// Canonical byte size of an `n`-leaf ciphertext.
    pub fn ciphertext_bytes(&mut self, n: usize) -> Result<usize, BenchError> {
        let seed = algebra::random_gt(&self.gp.ctx, &mut self.rng);
        Ok(abe_encrypt(&self.gp, &seed, &Self::policy(n), &self.pks, &mut self.rng)?.encoded_len())
    }

    /// Encrypted-key and proof sizes for each of `n` attributes.
    pub fn key_sizes(&mut self, n: usize) -> Result<Vec<(usize, usize)>, BenchError> {
        (0..n)
            .map(|i| {
                let auth = self.auths[i % AUTHORITIES].clone();
                let (ek, w) = abe_enc_key(&self.gid, &self.gp, &Self::attr(i), &auth, &self.user.pk, &mut self.rng)?;
                let proof = gen_proofs(&self.gp, &w, &ek, &mut self.rng);
                let proof_len = [algebra::encode(&proof.ek0p), algebra::encode(&proof.ek1p), algebra::encode(&proof.ek2p)]
                    .iter()
                    .map(Vec::len)
                    .sum::<usize>()
                    + 4 * algebra::SCALAR_BYTES;
                Ok((ek.encoded_len(), proof_len))
            })
            .collect()
    }

    /// Mean per-attribute milliseconds of each off-chain issuance step
    /// over `n` attributes.
    pub fn issuance_times(&mut self, n: usize) -> Result<IssuanceTimes, BenchError> {
        let mut t = IssuanceTimes::default();
        for i in 0..n {
            let attr = Self::attr(i);
            let auth = self.authority(i).clone();

            let s = Instant::now();
            abe_keygen(&self.gid, &self.gp, &attr, &auth, &mut self.rng)?;
            t.keygen += ms(s);

            let s = Instant::now();
            let (ek, w) = abe_enc_key(&self.gid, &self.gp, &attr, &auth, &self.user.pk, &mut self.rng)?;
            t.enc_key += ms(s);

            let s = Instant::now();
            let proof = gen_proofs(&self.gp, &w, &ek, &mut self.rng);
            t.gen_proofs += ms(s);

            let s = Instant::now();
            let stmt = KeyStatement::new(&self.gid, &attr, &self.user.pk, &auth.public);
            let ok = check_key_pc(&self.gp, &stmt, &ek, &proof);
            t.check_key_pc += ms(s);
            assert!(ok, "honest issuance must verify");

            let s = Instant::now();
            get_key(&ek, &auth.public.a1, &self.user.y);
            t.get_key += ms(s);
        }
        let n = n as f64;
        for v in [&mut t.keygen, &mut t.enc_key, &mut t.gen_proofs, &mut t.check_key_pc, &mut t.get_key] {
            *v /= n;
        }
        Ok(t)
    }

    /// Minimum over `trials` of hybrid encryption and decryption time, in
    /// milliseconds, for an `n`-leaf conjunction and `bytes` of payload.
    pub fn hybrid_times(&mut self, n: usize, bytes: usize, trials: usize) -> Result<(f64, f64), BenchError> {
        if bytes == 0 {
            return Err(BenchError::EmptyPayload);
        }
        let policy = Self::policy(n);
        let keys = self.keys(n);
        let mut m = vec![0u8; bytes];
        self.rng.fill_bytes(&mut m);
        let (mut enc, mut dec) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..trials.max(1) {
            let s = Instant::now();
            let hc = hybrid_encrypt(&self.gp, &m, &policy, &self.pks, &mut self.rng)?;
            enc = enc.min(ms(s));
            let s = Instant::now();
            let out = hybrid_decrypt(&self.gp, &hc, &keys)?;
            dec = dec.min(ms(s));
            assert!(out == m, "hybrid round trip");
        }
        Ok((enc, dec))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IssuanceTimes {
    pub keygen: f64,
    pub enc_key: f64,
    pub gen_proofs: f64,
    pub check_key_pc: f64,
    pub get_key: f64,
}

impl IssuanceTimes {
    /// Issuance plus proof, the authority's per-attribute cost.
    pub fn issue_and_prove(&self) -> f64 {
        self.enc_key + self.gen_proofs
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn sizes(max_attrs: usize, step: usize, seed: u64) -> Result<Vec<BenchRecord>, BenchError> {
    if max_attrs == 0 {
        return Err(BenchError::NoAttributes);
    }
    let mut fx = Fixture::new(seed);
    let mut out = Vec::new();
    for n in sweep(max_attrs, step) {
        out.push(BenchRecord::new("ciphertext_bytes", n, 0, fx.ciphertext_bytes(n)? as f64, "bytes"));
        let sizes = fx.key_sizes(n)?;
        let ek = sizes.iter().map(|s| s.0).max().unwrap_or(0);
        let proof = sizes.iter().map(|s| s.1).max().unwrap_or(0);
        out.push(BenchRecord::new("encrypted_key_bytes_per_attr", n, 0, ek as f64, "bytes"));
        out.push(BenchRecord::new("proof_bytes_per_attr", n, 0, proof as f64, "bytes"));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TimesConfig {
    pub max_attrs: usize,
    pub payload_mb: f64,
    pub step: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Payload sweep: a quarter, a half and all of `payload_mb`.
pub fn payload_sweep(payload_mb: f64) -> Vec<usize> {
    let mut v: Vec<usize> = [0.25, 0.5, 1.0].iter().map(|f| ((payload_mb * f * MIB) as usize).max(1)).collect();
    v.dedup();
    v
}

pub fn times(cfg: &TimesConfig) -> Result<Vec<BenchRecord>, BenchError> {
    if cfg.max_attrs == 0 {
        return Err(BenchError::NoAttributes);
    }
    if cfg.payload_mb.is_nan() || cfg.payload_mb <= 0.0 {
        return Err(BenchError::EmptyPayload);
    }
    if cfg.trials == 0 {
        return Err(BenchError::NoTrials);
    }
    let mut fx = Fixture::new(cfg.seed);
    let mut out = Vec::new();
    let attrs = sweep(cfg.max_attrs, cfg.step);
    for &n in &attrs {
        let t = fx.issuance_times(n)?;
        for (metric, v) in [
            ("keygen_ms_per_attr", t.keygen),
            ("enc_key_ms_per_attr", t.enc_key),
            ("gen_proofs_ms_per_attr", t.gen_proofs),
            ("check_key_pc_ms_per_attr", t.check_key_pc),
            ("get_key_ms_per_attr", t.get_key),
        ] {
            out.push(BenchRecord::new(metric, n, 0, v, "ms"));
        }
    }
    for &n in &attrs {
        for bytes in payload_sweep(cfg.payload_mb) {
            let (enc, dec) = fx.hybrid_times(n, bytes, cfg.trials)?;
            out.push(BenchRecord::new("hybrid_encrypt_ms", n, bytes as u64, enc, "ms"));
            out.push(BenchRecord::new("hybrid_decrypt_ms", n, bytes as u64, dec, "ms"));
        }
    }
    Ok(out)
}
