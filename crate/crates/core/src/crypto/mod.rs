//! Additively homomorphic encryption over integer rings.
//!
//! Two backends share one interface: Paillier (the reference) and an
//! identity mock over `Z_M`. Fresh encryption is randomized; every
//! homomorphic operation is a deterministic function of its inputs, so equal
//! inputs give bit-identical ciphertexts.

mod codec;
mod mock;
mod monty;
mod paillier;
pub mod prime;

use std::cell::Cell;
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use codec::{FixedPointCodec, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
pub use mock::MockKey;
pub use paillier::{PaillierPublicKey, PaillierSecretKey};

use crate::error::{Error, Result};
use paillier::FactoredOrPlain;
use prime::FactoredPrime;

/// Serde adapter: big integers as decimal strings.
pub(crate) mod decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 10).ok_or_else(|| D::Error::custom(format!("not a decimal integer: {s}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendId {
    Mock,
    Paillier,
}

impl BackendId {
    pub fn tag(self) -> u8 {
        match self {
            BackendId::Mock => 0,
            BackendId::Paillier => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(BackendId::Mock),
            1 => Ok(BackendId::Paillier),
            t => Err(Error::Malformed(format!("unknown backend tag {t}"))),
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendId::Mock => write!(f, "mock"),
            BackendId::Paillier => write!(f, "paillier"),
        }
    }
}

impl std::str::FromStr for BackendId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendId::Mock),
            "paillier" => Ok(BackendId::Paillier),
            other => Err(Error::Config(format!("unknown backend {other}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Operation accounting

/// Per-thread tally of backend operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub encrypt: u64,
    pub random: u64,
    pub add: u64,
    pub neg: u64,
    pub scalar_mul: u64,
    pub decrypt: u64,
}

impl OpCounts {
    /// Everything except decryption.
    pub fn homomorphic_total(&self) -> u64 {
        self.encrypt + self.random + self.add + self.neg + self.scalar_mul
    }

    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            encrypt: self.encrypt - earlier.encrypt,
            random: self.random - earlier.random,
            add: self.add - earlier.add,
            neg: self.neg - earlier.neg,
            scalar_mul: self.scalar_mul - earlier.scalar_mul,
            decrypt: self.decrypt - earlier.decrypt,
        }
    }
}

thread_local! {
    static OP_COUNTS: Cell<OpCounts> = const { Cell::new(OpCounts {
        encrypt: 0, random: 0, add: 0, neg: 0, scalar_mul: 0, decrypt: 0,
    }) };
}

pub fn op_counts() -> OpCounts {
    OP_COUNTS.with(|c| c.get())
}

fn tally(f: impl FnOnce(&mut OpCounts)) {
    OP_COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

// ---------------------------------------------------------------------------
// Ciphertexts

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    backend: BackendId,
    value: BigUint,
}

impl Ciphertext {
    pub fn backend(&self) -> BackendId {
        self.backend
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// Wraps a raw value. Range is checked when a key touches it.
    pub fn from_raw(backend: BackendId, value: BigUint) -> Self {
        Self { backend, value }
    }

    /// Backend tag, 4-byte big-endian length, minimal big-endian magnitude
    /// (zero has an empty magnitude).
    pub fn write_to(&self, out: &mut Vec<u8>) {
        let mag = if self.value.is_zero() {
            Vec::new()
        } else {
            self.value.to_bytes_be()
        };
        out.push(self.backend.tag());
        out.extend_from_slice(&(mag.len() as u32).to_be_bytes());
        out.extend_from_slice(&mag);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    /// Parses one ciphertext, returning it and the number of bytes consumed.
    pub fn read_from(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 5 {
            return Err(Error::Malformed("truncated ciphertext header".into()));
        }
        let backend = BackendId::from_tag(bytes[0])?;
        let len = u32::from_be_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]) as usize;
        let mag = bytes
            .get(5..5 + len)
            .ok_or_else(|| Error::Malformed("truncated ciphertext payload".into()))?;
        if mag.first() == Some(&0) {
            return Err(Error::Malformed("non-canonical leading zero".into()));
        }
        Ok((
            Self {
                backend,
                value: BigUint::from_bytes_be(mag),
            },
            5 + len,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (ct, used) = Self::read_from(bytes)?;
        if used != bytes.len() {
            return Err(Error::Malformed("trailing bytes after ciphertext".into()));
        }
        Ok(ct)
    }
}

/// An encrypted model: `m` ciphertexts under one backend.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CiphertextVector {
    backend: BackendId,
    elements: Vec<Ciphertext>,
}

impl CiphertextVector {
    pub fn new(elements: Vec<Ciphertext>) -> Result<Self> {
        let backend = elements
            .first()
            .map(|c| c.backend)
            .ok_or_else(|| Error::Config("empty ciphertext vector".into()))?;
        if let Some(bad) = elements.iter().find(|c| c.backend != backend) {
            return Err(Error::BackendMismatch {
                expected: backend.to_string(),
                actual: bad.backend.to_string(),
            });
        }
        Ok(Self { backend, elements })
    }

    pub fn backend(&self) -> BackendId {
        self.backend
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Ciphertext] {
        &self.elements
    }

    pub fn elements_mut(&mut self) -> &mut [Ciphertext] {
        &mut self.elements
    }

    /// 4-byte big-endian element count followed by each ciphertext.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.elements.len() as u32).to_be_bytes());
        for c in &self.elements {
            c.write_to(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Malformed("truncated vector header".into()));
        }
        let count = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        let mut pos = 4;
        let mut elements = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let (c, used) = Ciphertext::read_from(&bytes[pos..])?;
            pos += used;
            elements.push(c);
        }
        if pos != bytes.len() {
            return Err(Error::Malformed("trailing bytes after vector".into()));
        }
        Self::new(elements)
    }
}

// ---------------------------------------------------------------------------
// Keys

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PublicKey {
    Paillier(PaillierPublicKey),
    Mock(MockKey),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SecretKey {
    Paillier(Box<PaillierSecretKey>),
    Mock,
}

/// The single key pair shared by every client. The server only ever sees
/// `pk`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub pk: PublicKey,
    pub sk: SecretKey,
}

/// Modulus sizes accepted by [`keygen`]; 128 is for tests only.
pub const SUPPORTED_KEY_BITS: [u64; 3] = [128, 1024, 2048];

/// Deterministic Paillier key generation from a seed.
pub fn keygen(security_bits: u64, seed: u64) -> Result<KeyPair> {
    if !SUPPORTED_KEY_BITS.contains(&security_bits) {
        return Err(Error::Config(format!(
            "unsupported key size {security_bits}; expected one of {SUPPORTED_KEY_BITS:?}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = security_bits / 2;
    loop {
        let p = prime::factored_prime(half, &mut rng);
        let q = prime::factored_prime(half, &mut rng);
        if p.p == q.p {
            continue;
        }
        let n = &p.p * &q.p;
        if n.bits() != security_bits {
            continue;
        }
        match KeyPair::from_factored(p, q) {
            Ok(kp) => return Ok(kp),
            Err(Error::Config(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

impl KeyPair {
    /// Paillier from explicit primes. Fast encryption is enabled when `p − 1`
    /// and `q − 1` are small enough to factor.
    pub fn paillier_from_primes(p: &BigUint, q: &BigUint) -> Result<Self> {
        let wrap = |x: &BigUint| match FactoredPrime::from_small(x) {
            Some(f) => FactoredOrPlain::Factored(f),
            None => FactoredOrPlain::Plain(x.clone()),
        };
        Self::from_parts(wrap(p), wrap(q))
    }

    fn from_factored(p: FactoredPrime, q: FactoredPrime) -> Result<Self> {
        Self::from_parts(FactoredOrPlain::Factored(p), FactoredOrPlain::Factored(q))
    }

    fn from_parts(p: FactoredOrPlain, q: FactoredOrPlain) -> Result<Self> {
        let sk = PaillierSecretKey::new(p, q)?;
        let pk = PaillierPublicKey::new(sk.p() * sk.q())?;
        Ok(Self {
            pk: PublicKey::Paillier(pk),
            sk: SecretKey::Paillier(Box::new(sk)),
        })
    }

    pub fn mock(modulus: BigUint) -> Self {
        Self {
            pk: PublicKey::Mock(MockKey::new(modulus)),
            sk: SecretKey::Mock,
        }
    }

    /// Mock ring `Z_{2^64}`.
    pub fn mock_default() -> Self {
        Self::mock(BigUint::from(1u128 << 64))
    }

    pub fn backend(&self) -> BackendId {
        self.pk.backend()
    }

    /// Fresh encryption by a key holder. Same distribution as
    /// [`PublicKey::encrypt`], faster for Paillier.
    pub fn encrypt(&self, pt: &BigUint, rng: &mut dyn RngCore) -> Result<Ciphertext> {
        self.pk.check_plaintext(pt)?;
        let value = match (&self.pk, &self.sk) {
            (PublicKey::Paillier(pk), SecretKey::Paillier(sk)) => sk.encrypt(pt, pk, rng),
            (pk, _) => return pk.encrypt(pt, rng),
        };
        tally(|c| c.encrypt += 1);
        Ok(Ciphertext {
            backend: BackendId::Paillier,
            value,
        })
    }

    pub fn encrypt_vec(&self, pts: &[BigUint], rng: &mut dyn RngCore) -> Result<CiphertextVector> {
        let elements = pts.iter().map(|p| self.encrypt(p, rng)).collect::<Result<Vec<_>>>()?;
        CiphertextVector::new(elements)
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Result<BigUint> {
        self.pk.check(ct)?;
        tally(|c| c.decrypt += 1);
        Ok(match (&self.pk, &self.sk) {
            (PublicKey::Paillier(_), SecretKey::Paillier(sk)) => sk.decrypt(&ct.value),
            (PublicKey::Mock(_), SecretKey::Mock) => ct.value.clone(),
            _ => unreachable!("key pair halves always match"),
        })
    }

    pub fn decrypt_vec(&self, v: &CiphertextVector) -> Result<Vec<BigUint>> {
        v.elements.iter().map(|c| self.decrypt(c)).collect()
    }

    /// Decrypts a plaintext whose centered value is promised to lie in
    /// `[−bound, bound]`. Agrees with [`KeyPair::decrypt`] whenever the promise
    /// holds and is about twice as fast for Paillier.
    pub fn decrypt_small(&self, ct: &Ciphertext, bound: &BigUint) -> Result<BigUint> {
        self.pk.check(ct)?;
        tally(|c| c.decrypt += 1);
        Ok(match (&self.pk, &self.sk) {
            (PublicKey::Paillier(pk), SecretKey::Paillier(sk)) => sk.decrypt_small(&ct.value, bound, pk.n()),
            (PublicKey::Mock(_), SecretKey::Mock) => ct.value.clone(),
            _ => unreachable!("key pair halves always match"),
        })
    }

    pub fn decrypt_small_vec(&self, v: &CiphertextVector, bound: &BigUint) -> Result<Vec<BigUint>> {
        v.elements.iter().map(|c| self.decrypt_small(c, bound)).collect()
    }

    pub fn to_json(&self) -> String {
        let file = match (&self.pk, &self.sk) {
            (PublicKey::Paillier(pk), SecretKey::Paillier(sk)) => KeyFile::Paillier {
                n: pk.n().clone(),
                secret: Some(PaillierSecretFile {
                    p: sk.p().clone(),
                    q: sk.q().clone(),
                    p_minus_1_factors: sk.p_factored().pm1_factors().map(|f| f.iter().map(|x| x.to_str_radix(10)).collect()),
                    q_minus_1_factors: sk.q_factored().pm1_factors().map(|f| f.iter().map(|x| x.to_str_radix(10)).collect()),
                }),
            },
            (PublicKey::Mock(k), _) => KeyFile::Mock {
                modulus: k.modulus().clone(),
            },
            _ => unreachable!("key pair halves always match"),
        };
        serde_json::to_string_pretty(&file).expect("key file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str::<KeyFile>(s)? {
            KeyFile::Mock { modulus } => Ok(Self::mock(modulus)),
            KeyFile::Paillier { secret: None, .. } => Err(Error::Malformed("key file has no secret part".into())),
            KeyFile::Paillier { n, secret: Some(sec) } => {
                let load = |p: BigUint, factors: Option<Vec<String>>| -> Result<FactoredOrPlain> {
                    Ok(match factors {
                        Some(fs) => {
                            let pm1_factors = fs
                                .iter()
                                .map(|f| BigUint::parse_bytes(f.as_bytes(), 10).ok_or_else(|| Error::Malformed(f.clone())))
                                .collect::<Result<Vec<_>>>()?;
                            FactoredOrPlain::Factored(FactoredPrime { p, pm1_factors })
                        }
                        None => FactoredOrPlain::Plain(p),
                    })
                };
                let kp = Self::from_parts(load(sec.p, sec.p_minus_1_factors)?, load(sec.q, sec.q_minus_1_factors)?)?;
                match &kp.pk {
                    PublicKey::Paillier(pk) if *pk.n() == n => Ok(kp),
                    _ => Err(Error::Malformed("n does not equal p·q".into())),
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PaillierSecretFile {
    #[serde(with = "decimal")]
    p: BigUint,
    #[serde(with = "decimal")]
    q: BigUint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_minus_1_factors: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_minus_1_factors: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
enum KeyFile {
    Paillier {
        #[serde(with = "decimal")]
        n: BigUint,
        #[serde(default, skip_serializing_if = "Option::is_none", flatten)]
        secret: Option<PaillierSecretFile>,
    },
    Mock {
        #[serde(with = "decimal")]
        modulus: BigUint,
    },
}

impl PublicKey {
    pub fn backend(&self) -> BackendId {
        match self {
            PublicKey::Paillier(_) => BackendId::Paillier,
            PublicKey::Mock(_) => BackendId::Mock,
        }
    }

    /// Size `M` of the plaintext ring.
    pub fn plaintext_modulus(&self) -> &BigUint {
        match self {
            PublicKey::Paillier(k) => k.n(),
            PublicKey::Mock(k) => k.modulus(),
        }
    }

    pub fn ciphertext_modulus(&self) -> &BigUint {
        match self {
            PublicKey::Paillier(k) => k.n_squared(),
            PublicKey::Mock(k) => k.modulus(),
        }
    }

    fn check_plaintext(&self, pt: &BigUint) -> Result<()> {
        if pt >= self.plaintext_modulus() {
            return Err(Error::Range(format!("plaintext ≥ M ({} bits)", self.plaintext_modulus().bits())));
        }
        Ok(())
    }

    /// Backend tag and range of a ciphertext.
    pub fn check(&self, ct: &Ciphertext) -> Result<()> {
        if ct.backend != self.backend() {
            return Err(Error::BackendMismatch {
                expected: self.backend().to_string(),
                actual: ct.backend.to_string(),
            });
        }
        let ok = match self {
            PublicKey::Paillier(k) => !ct.value.is_zero() && ct.value < *k.n_squared(),
            PublicKey::Mock(k) => ct.value < *k.modulus(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Range("ciphertext outside its group".into()))
        }
    }

    pub fn check_vec(&self, v: &CiphertextVector) -> Result<()> {
        v.elements.iter().try_for_each(|c| self.check(c))
    }

    fn wrap(&self, value: BigUint) -> Ciphertext {
        Ciphertext {
            backend: self.backend(),
            value,
        }
    }

    pub fn encrypt(&self, pt: &BigUint, rng: &mut dyn RngCore) -> Result<Ciphertext> {
        self.check_plaintext(pt)?;
        tally(|c| c.encrypt += 1);
        Ok(self.wrap(match self {
            PublicKey::Paillier(k) => k.encrypt(pt, rng),
            PublicKey::Mock(_) => pt.clone(),
        }))
    }

    pub fn encrypt_vec(&self, pts: &[BigUint], rng: &mut dyn RngCore) -> Result<CiphertextVector> {
        let elements = pts.iter().map(|p| self.encrypt(p, rng)).collect::<Result<Vec<_>>>()?;
        CiphertextVector::new(elements)
    }

    /// A fresh encryption of a uniformly random plaintext.
    pub fn encrypt_random(&self, rng: &mut dyn RngCore) -> Ciphertext {
        tally(|c| c.random += 1);
        self.wrap(match self {
            PublicKey::Paillier(k) => k.random_ciphertext(rng),
            PublicKey::Mock(k) => k.random(rng),
        })
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        tally(|c| c.add += 1);
        Ok(self.wrap(match self {
            PublicKey::Paillier(k) => k.add(&a.value, &b.value),
            PublicKey::Mock(k) => k.add(&a.value, &b.value),
        }))
    }

    pub fn neg(&self, a: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        tally(|c| c.neg += 1);
        Ok(self.wrap(match self {
            PublicKey::Paillier(k) => k.neg(&a.value)?,
            PublicKey::Mock(k) => k.neg(&a.value),
        }))
    }

    pub fn scalar_mul(&self, a: &Ciphertext, k: &BigUint) -> Result<Ciphertext> {
        self.check(a)?;
        self.check_plaintext(k)?;
        tally(|c| c.scalar_mul += 1);
        Ok(self.wrap(match self {
            PublicKey::Paillier(key) => key.scalar_mul(&a.value, k),
            PublicKey::Mock(key) => key.scalar_mul(&a.value, k),
        }))
    }

    fn same_len(a: &CiphertextVector, b: &CiphertextVector) -> Result<()> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                expected: a.len(),
                actual: b.len(),
            });
        }
        Ok(())
    }

    pub fn add_vec(&self, a: &CiphertextVector, b: &CiphertextVector) -> Result<CiphertextVector> {
        Self::same_len(a, b)?;
        let elements = a
            .elements
            .iter()
            .zip(&b.elements)
            .map(|(x, y)| self.add(x, y))
            .collect::<Result<Vec<_>>>()?;
        CiphertextVector::new(elements)
    }

    /// Element-wise negation; Paillier inverts the whole vector at once.
    pub fn neg_vec(&self, a: &CiphertextVector) -> Result<CiphertextVector> {
        self.check_vec(a)?;
        let values = match self {
            PublicKey::Paillier(k) => {
                let raw: Vec<BigUint> = a.elements.iter().map(|c| c.value.clone()).collect();
                k.batch_neg(&raw)?
            }
            PublicKey::Mock(k) => a.elements.iter().map(|c| k.neg(&c.value)).collect(),
        };
        tally(|c| c.neg += values.len() as u64);
        CiphertextVector::new(values.into_iter().map(|v| self.wrap(v)).collect())
    }

    pub fn scalar_mul_vec(&self, a: &CiphertextVector, k: &BigUint) -> Result<CiphertextVector> {
        let elements = a.elements.iter().map(|c| self.scalar_mul(c, k)).collect::<Result<Vec<_>>>()?;
        CiphertextVector::new(elements)
    }

    pub fn random_vec(&self, m: usize, rng: &mut dyn RngCore) -> Result<CiphertextVector> {
        CiphertextVector::new((0..m).map(|_| self.encrypt_random(rng)).collect())
    }

    pub fn to_json(&self) -> String {
        let file = match self {
            PublicKey::Paillier(k) => KeyFile::Paillier {
                n: k.n().clone(),
                secret: None,
            },
            PublicKey::Mock(k) => KeyFile::Mock {
                modulus: k.modulus().clone(),
            },
        };
        serde_json::to_string_pretty(&file).expect("key file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str::<KeyFile>(s)? {
            KeyFile::Paillier { n, .. } => Ok(PublicKey::Paillier(PaillierPublicKey::new(n)?)),
            KeyFile::Mock { modulus } => Ok(PublicKey::Mock(MockKey::new(modulus))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn small_decryption_agrees_inside_the_bound() {
        use num_bigint::RandBigInt;
        let kp = keygen(1024, 2).unwrap();
        let n = kp.pk.plaintext_modulus().clone();
        let bound = BigUint::from(1u64 << 60);
        let mut r = rng(4);
        for k in 0..200 {
            let mag = r.gen_biguint_below(&bound) + 1u32;
            let x = if k % 2 == 0 { mag.clone() } else { &n - &mag };
            let c = kp.encrypt(&x, &mut r).unwrap();
            assert_eq!(kp.decrypt_small(&c, &bound).unwrap(), x);
        }
        // outside the bound it falls back to full decryption
        let big = r.gen_biguint_below(&n);
        let c = kp.encrypt(&big, &mut r).unwrap();
        assert_eq!(kp.decrypt_small(&c, &bound).unwrap(), big);
        assert_eq!(kp.decrypt_small(&c, &n).unwrap(), big);
    }

    #[test]
    fn keygen_rejects_unsupported_sizes() {
        assert!(matches!(keygen(512, 1), Err(Error::Config(_))));
        assert!(matches!(keygen(0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = keygen(128, 1).unwrap();
        let b = keygen(128, 1).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.pk.plaintext_modulus().bits(), 128);
        assert_ne!(a.to_json(), keygen(128, 2).unwrap().to_json());
    }

    #[test]
    fn boundary_plaintexts() {
        let kp = keygen(128, 3).unwrap();
        let mut r = rng(0);
        let m = kp.pk.plaintext_modulus().clone();
        for pt in [BigUint::zero(), &m - 1u32] {
            assert_eq!(kp.decrypt(&kp.encrypt(&pt, &mut r).unwrap()).unwrap(), pt);
            assert_eq!(kp.decrypt(&kp.pk.encrypt(&pt, &mut r).unwrap()).unwrap(), pt);
        }
        assert!(matches!(kp.encrypt(&m, &mut r), Err(Error::Range(_))));
        let one = kp.encrypt(&BigUint::from(1u32), &mut r).unwrap();
        assert!(matches!(kp.pk.scalar_mul(&one, &m), Err(Error::Range(_))));
    }

    #[test]
    fn small_homomorphic_examples() {
        let kp = keygen(128, 4).unwrap();
        let mut r = rng(1);
        let enc = |x: u32, r: &mut ChaCha20Rng| kp.encrypt(&BigUint::from(x), r).unwrap();
        let (a, b) = (enc(3, &mut r), enc(4, &mut r));
        assert_eq!(kp.decrypt(&kp.pk.add(&a, &b).unwrap()).unwrap(), BigUint::from(7u32));
        let z = kp.pk.add(&a, &kp.pk.neg(&a).unwrap()).unwrap();
        assert_eq!(kp.decrypt(&z).unwrap(), BigUint::zero());
        let six = enc(6, &mut r);
        assert_eq!(kp.decrypt(&kp.pk.scalar_mul(&six, &BigUint::from(7u32)).unwrap()).unwrap(), BigUint::from(42u32));
        assert_eq!(kp.decrypt(&kp.pk.scalar_mul(&six, &BigUint::from(1u32)).unwrap()).unwrap(), BigUint::from(6u32));
        assert_eq!(kp.decrypt(&kp.pk.scalar_mul(&six, &BigUint::zero()).unwrap()).unwrap(), BigUint::zero());
    }

    #[test]
    fn add_is_commutative_bitwise() {
        for kp in [keygen(128, 5).unwrap(), KeyPair::mock_default()] {
            let mut r = rng(2);
            for _ in 0..100 {
                let a = kp.pk.encrypt_random(&mut r);
                let b = kp.pk.encrypt_random(&mut r);
                assert_eq!(kp.pk.add(&a, &b).unwrap().to_bytes(), kp.pk.add(&b, &a).unwrap().to_bytes());
            }
        }
    }

    #[test]
    fn mock_encrypts_to_itself() {
        let kp = KeyPair::mock_default();
        let ct = kp.encrypt(&BigUint::from(1234u32), &mut rng(0)).unwrap();
        assert_eq!(ct.value(), &BigUint::from(1234u32));
        assert_eq!(ct.to_bytes(), vec![0, 0, 0, 0, 2, 0x04, 0xd2]);
    }

    #[test]
    fn mixed_backends_rejected() {
        let kp = keygen(128, 6).unwrap();
        let mock = KeyPair::mock_default();
        let mut r = rng(3);
        let a = kp.pk.encrypt_random(&mut r);
        let b = mock.pk.encrypt_random(&mut r);
        assert!(matches!(kp.pk.add(&a, &b), Err(Error::BackendMismatch { .. })));
        assert!(CiphertextVector::new(vec![a, b]).is_err());
    }

    #[test]
    fn canonical_serialization() {
        let kp = keygen(128, 7).unwrap();
        let mut r = rng(4);
        let v = kp.pk.random_vec(5, &mut r).unwrap();
        let bytes = v.to_bytes();
        assert_eq!(CiphertextVector::from_bytes(&bytes).unwrap().to_bytes(), bytes);
        // leading zero in magnitude is rejected
        assert!(Ciphertext::from_bytes(&[1, 0, 0, 0, 2, 0, 5]).is_err());
        assert!(Ciphertext::from_bytes(&[1, 0, 0, 0, 3, 1, 5]).is_err());
        assert!(Ciphertext::from_bytes(&[9, 0, 0, 0, 0]).is_err());
        let zero = Ciphertext::from_raw(BackendId::Mock, BigUint::zero());
        assert_eq!(Ciphertext::from_bytes(&zero.to_bytes()).unwrap(), zero);
    }

    #[test]
    fn key_json_roundtrip() {
        let kp = keygen(128, 8).unwrap();
        let back = KeyPair::from_json(&kp.to_json()).unwrap();
        assert_eq!(back, kp);
        let mut r = rng(5);
        let ct = kp.encrypt(&BigUint::from(99u32), &mut r).unwrap();
        assert_eq!(back.decrypt(&ct).unwrap(), BigUint::from(99u32));
        let pk = PublicKey::from_json(&kp.pk.to_json()).unwrap();
        assert_eq!(pk, kp.pk);
        assert!(kp.pk.to_json().contains(&kp.pk.plaintext_modulus().to_str_radix(10)));
        assert!(KeyPair::from_json(&kp.pk.to_json()).is_err());
        let mock = KeyPair::mock_default();
        assert_eq!(KeyPair::from_json(&mock.to_json()).unwrap(), mock);
    }

    #[test]
    fn op_counters_advance() {
        let kp = KeyPair::mock_default();
        let before = op_counts();
        let mut r = rng(6);
        let a = kp.encrypt(&BigUint::from(1u32), &mut r).unwrap();
        let _ = kp.pk.add(&a, &a).unwrap();
        let _ = kp.pk.neg_vec(&CiphertextVector::new(vec![a.clone(), a]).unwrap()).unwrap();
        let d = op_counts().since(&before);
        assert_eq!((d.encrypt, d.add, d.neg), (1, 1, 2));
        assert_eq!(d.homomorphic_total(), 4);
    }
}
