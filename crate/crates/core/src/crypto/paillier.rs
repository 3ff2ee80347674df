//! Paillier encryption with `g = n + 1`.
//!
//! Public operations work modulo `n²` only. The key holder additionally
//! decrypts through CRT and, when the factorizations of `p − 1` and `q − 1`
//! are known, encrypts through precomputed fixed-base tables: the n-th
//! residue `r^n mod p²` is sampled as `G_p^x` where `G_p` generates the
//! order-`(p − 1)` subgroup, which is exactly the image of `r ↦ r^n`.

use std::sync::Arc;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use super::monty::{Monty, MontyValue};
use super::prime::{mod_inverse, FactoredPrime};
use crate::error::{Error, Result};

/// Windowed fixed-base exponentiation table, entries in Montgomery form.
#[derive(Debug)]
pub(crate) struct FixedBase {
    monty: Monty,
    window: u32,
    // table[i][d] = base^(d · 2^(window·i))
    table: Vec<Vec<MontyValue>>,
}

impl FixedBase {
    pub(crate) fn new(base: &BigUint, modulus: &BigUint, max_exp_bits: u64, window: u32) -> Self {
        let monty = Monty::new(modulus);
        let windows = max_exp_bits.div_ceil(window as u64) as usize;
        let size = 1usize << window;
        let mut table = Vec::with_capacity(windows);
        let mut step = monty.to_monty(base);
        for _ in 0..windows {
            let mut row = Vec::with_capacity(size);
            let mut acc = monty.one();
            for _ in 0..size {
                let next = monty.mul(&acc, &step);
                row.push(acc);
                acc = next;
            }
            // acc = step^(2^window)
            step = acc;
            table.push(row);
        }
        Self { monty, window, table }
    }

    /// `factor · base^exp mod m`.
    pub(crate) fn pow_times(&self, exp: &BigUint, factor: &BigUint) -> BigUint {
        debug_assert!(exp.bits() <= self.table.len() as u64 * self.window as u64);
        let mask = (1u64 << self.window) - 1;
        let digits = exp.to_u64_digits();
        let mut acc = self.monty.to_monty(factor);
        for (i, row) in self.table.iter().enumerate() {
            let bit = i as u64 * self.window as u64;
            let limb = (bit / 64) as usize;
            let off = bit % 64;
            let mut d = digits.get(limb).copied().unwrap_or(0) >> off;
            if off + self.window as u64 > 64 {
                d |= digits.get(limb + 1).copied().unwrap_or(0) << (64 - off);
            }
            let d = (d & mask) as usize;
            if d != 0 {
                acc = self.monty.mul(&acc, &row[d]);
            }
        }
        self.monty.to_plain(&acc)
    }

    #[cfg(test)]
    pub(crate) fn pow(&self, exp: &BigUint) -> BigUint {
        self.pow_times(exp, &BigUint::one())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaillierPublicKey {
    n: BigUint,
    n_squared: BigUint,
    monty: Arc<Monty>,
}

impl PaillierPublicKey {
    pub fn new(n: BigUint) -> Result<Self> {
        if n < BigUint::from(15u32) || n.is_even() {
            return Err(Error::Config(format!("invalid Paillier modulus {n}")));
        }
        let n_squared = &n * &n;
        let monty = Arc::new(Monty::new(&n_squared));
        Ok(Self { n, n_squared, monty })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    /// `(1 + m·n) · r^n mod n²` with `r` uniform in `Z*_n`.
    pub fn encrypt(&self, m: &BigUint, rng: &mut dyn RngCore) -> BigUint {
        let r = loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        (gm * r.modpow(&self.n, &self.n_squared)) % &self.n_squared
    }

    /// Uniform element of `Z*_{n²}`.
    ///
    /// `(m, r) ↦ (1 + m·n)·r^n` is a bijection `Z_n × Z*_n → Z*_{n²}`, so this
    /// is distributed exactly as a fresh encryption of a uniform plaintext.
    /// The coprimality test is skipped for moduli of 256 bits and up, where
    /// hitting a multiple of p or q has probability below 2^-127.
    pub fn random_ciphertext(&self, rng: &mut dyn RngCore) -> BigUint {
        let check = self.n.bits() < 256;
        loop {
            let c = rng.gen_biguint_below(&self.n_squared);
            if !c.is_zero() && (!check || c.gcd(&self.n).is_one()) {
                return c;
            }
        }
    }

    pub fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.n_squared
    }

    pub fn neg(&self, a: &BigUint) -> Result<BigUint> {
        mod_inverse(a, &self.n_squared).ok_or(Error::NotInvertible)
    }

    pub fn scalar_mul(&self, a: &BigUint, k: &BigUint) -> BigUint {
        self.monty.pow(a, k)
    }

    /// Inverts every element with a single modular inversion.
    pub fn batch_neg(&self, values: &[BigUint]) -> Result<Vec<BigUint>> {
        if values.is_empty() {
            return Ok(Vec::new());
        }
        let m = &self.n_squared;
        let mut prefix = Vec::with_capacity(values.len());
        let mut acc = BigUint::one();
        for v in values {
            acc = (acc * v) % m;
            prefix.push(acc.clone());
        }
        let mut inv = mod_inverse(&acc, m).ok_or(Error::NotInvertible)?;
        let mut out = vec![BigUint::zero(); values.len()];
        for i in (0..values.len()).rev() {
            if i == 0 {
                out[0] = inv.clone();
            } else {
                out[i] = (&inv * &prefix[i - 1]) % m;
                inv = (inv * &values[i]) % m;
            }
        }
        Ok(out)
    }
}

#[derive(Debug)]
struct FastEncryptor {
    base_p: FixedBase,
    base_q: FixedBase,
}

#[derive(Clone, Debug)]
pub struct PaillierSecretKey {
    p: FactoredOrPlain,
    q: FactoredOrPlain,
    n: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    q2_inv_p2: BigUint,
    monty_p2: Arc<Monty>,
    monty_q2: Arc<Monty>,
    fast: Option<Arc<FastEncryptor>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum FactoredOrPlain {
    Factored(FactoredPrime),
    Plain(BigUint),
}

impl FactoredOrPlain {
    fn value(&self) -> &BigUint {
        match self {
            Self::Factored(f) => &f.p,
            Self::Plain(p) => p,
        }
    }

    pub(crate) fn pm1_factors(&self) -> Option<&[BigUint]> {
        match self {
            Self::Factored(f) => Some(&f.pm1_factors),
            Self::Plain(_) => None,
        }
    }
}

impl PartialEq for PaillierSecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.q == other.q
    }
}

impl Eq for PaillierSecretKey {}

const FIXED_BASE_WINDOW: u32 = 8;

impl PaillierSecretKey {
    pub(crate) fn new(p: FactoredOrPlain, q: FactoredOrPlain) -> Result<Self> {
        let (pv, qv) = (p.value().clone(), q.value().clone());
        if pv == qv {
            return Err(Error::Config("p and q must differ".into()));
        }
        let n = &pv * &qv;
        let phi = (&pv - 1u32) * (&qv - 1u32);
        if !n.gcd(&phi).is_one() {
            return Err(Error::Config("gcd(n, φ(n)) ≠ 1".into()));
        }
        let p_squared = &pv * &pv;
        let q_squared = &qv * &qv;
        let hp = Self::h(&pv, &p_squared, &n)?;
        let hq = Self::h(&qv, &q_squared, &n)?;
        let q_inv_p = mod_inverse(&qv, &pv).ok_or(Error::NotInvertible)?;
        let q2_inv_p2 = mod_inverse(&q_squared, &p_squared).ok_or(Error::NotInvertible)?;

        let fast = match (&p, &q) {
            (FactoredOrPlain::Factored(fp), FactoredOrPlain::Factored(fq)) => Some(Arc::new(FastEncryptor {
                base_p: FixedBase::new(&Self::residue_generator(fp, &p_squared), &p_squared, pv.bits(), FIXED_BASE_WINDOW),
                base_q: FixedBase::new(&Self::residue_generator(fq, &q_squared), &q_squared, qv.bits(), FIXED_BASE_WINDOW),
            })),
            _ => None,
        };
        let monty_p2 = Arc::new(Monty::new(&p_squared));
        let monty_q2 = Arc::new(Monty::new(&q_squared));
        Ok(Self {
            p,
            q,
            n,
            p_squared,
            q_squared,
            hp,
            hq,
            q_inv_p,
            q2_inv_p2,
            monty_p2,
            monty_q2,
            fast,
        })
    }

    // hp = L_p((1 + n)^(p−1) mod p²)^(-1) mod p
    fn h(p: &BigUint, p_squared: &BigUint, n: &BigUint) -> Result<BigUint> {
        let g = (n + 1u32) % p_squared;
        let x = g.modpow(&(p - 1u32), p_squared);
        let l = (x - 1u32) / p;
        mod_inverse(&l, p).ok_or(Error::NotInvertible)
    }

    // g^p mod p² for a primitive root g mod p has order exactly p − 1.
    fn residue_generator(fp: &FactoredPrime, p_squared: &BigUint) -> BigUint {
        fp.primitive_root().modpow(&fp.p, p_squared)
    }

    pub fn p(&self) -> &BigUint {
        self.p.value()
    }

    pub fn q(&self) -> &BigUint {
        self.q.value()
    }

    pub(crate) fn p_factored(&self) -> &FactoredOrPlain {
        &self.p
    }

    pub(crate) fn q_factored(&self) -> &FactoredOrPlain {
        &self.q
    }

    pub fn has_fast_encryption(&self) -> bool {
        self.fast.is_some()
    }

    /// The plaintext reduced mod `p`, from one half of the CRT.
    fn decrypt_mod_p(&self, c: &BigUint) -> BigUint {
        let p = self.p();
        let x = self.monty_p2.pow(c, &(p - 1u32));
        (((x + &self.p_squared - 1u32) % &self.p_squared) / p * &self.hp) % p
    }

    /// Decryption of a plaintext known to lie within `bound` of zero (upper
    /// half of `Z_n` read as negative). Uses only the `p` half when `2·bound < p`
    /// and the residue is consistent with the bound; otherwise decrypts fully.
    pub fn decrypt_small(&self, c: &BigUint, bound: &BigUint, n: &BigUint) -> BigUint {
        let p = self.p();
        if (bound << 1u32) >= *p {
            return self.decrypt(c);
        }
        let mp = self.decrypt_mod_p(c);
        if &mp <= bound {
            mp
        } else if &(p - &mp) <= bound {
            n - (p - mp)
        } else {
            self.decrypt(c)
        }
    }

    pub fn decrypt(&self, c: &BigUint) -> BigUint {
        let (p, q) = (self.p(), self.q());
        let mp = self.decrypt_mod_p(c);
        let mq = {
            let x = self.monty_q2.pow(c, &(q - 1u32));
            (((x + &self.q_squared - 1u32) % &self.q_squared) / q * &self.hq) % q
        };
        // m = mq + q·((mp − mq)·q^(-1) mod p)
        let diff = (&mp + p - (&mq % p)) % p;
        mq + q * ((diff * &self.q_inv_p) % p)
    }

    /// Encrypts with the same output distribution as
    /// [`PaillierPublicKey::encrypt`], using the factorization when available.
    pub fn encrypt(&self, m: &BigUint, pk: &PaillierPublicKey, rng: &mut dyn RngCore) -> BigUint {
        let Some(fast) = &self.fast else {
            return pk.encrypt(m, rng);
        };
        let (p, q) = (self.p(), self.q());
        let xp = rng.gen_biguint_below(&(p - 1u32));
        let xq = rng.gen_biguint_below(&(q - 1u32));
        let gm = BigUint::one() + m * &self.n;
        let cp = fast.base_p.pow_times(&xp, &gm);
        let cq = fast.base_q.pow_times(&xq, &gm);
        // CRT lift to n²
        let diff = (&cp + &self.p_squared - (&cq % &self.p_squared)) % &self.p_squared;
        cq + &self.q_squared * ((diff * &self.q2_inv_p2) % &self.p_squared)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny() -> (PaillierPublicKey, PaillierSecretKey) {
        let p = FactoredPrime::from_small(&BigUint::from(11u32)).unwrap();
        let q = FactoredPrime::from_small(&BigUint::from(13u32)).unwrap();
        let sk = PaillierSecretKey::new(FactoredOrPlain::Factored(p), FactoredOrPlain::Factored(q)).unwrap();
        (PaillierPublicKey::new(BigUint::from(143u32)).unwrap(), sk)
    }

    #[test]
    fn fixed_base_matches_modpow() {
        let m = BigUint::from(1_000_003u64 * 1_000_003u64);
        let base = BigUint::from(12345u32);
        let fb = FixedBase::new(&base, &m, 40, 4);
        for e in [0u64, 1, 2, 15, 16, 255, 256, 123_456_789, (1 << 40) - 1] {
            let e = BigUint::from(e);
            assert_eq!(fb.pow(&e), base.modpow(&e, &m));
        }
        let fb = FixedBase::new(&base, &m, 200, 7);
        let e = BigUint::parse_bytes(b"1234567890123456789012345678901234567890", 10).unwrap();
        assert_eq!(fb.pow(&e), base.modpow(&e, &m));
    }

    #[test]
    fn tiny_key_roundtrip_all_plaintexts() {
        let (pk, sk) = tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for m in 0u32..143 {
            let m = BigUint::from(m);
            assert_eq!(sk.decrypt(&pk.encrypt(&m, &mut rng)), m);
            assert_eq!(sk.decrypt(&sk.encrypt(&m, &pk, &mut rng)), m);
        }
    }

    #[test]
    fn fast_encryption_hits_every_residue() {
        // The n-th residues mod 143² number φ(143) = 120; the fast path must
        // reach all of them for a fixed plaintext.
        let (pk, sk) = tiny();
        assert!(sk.has_fast_encryption());
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..5000 {
            seen.insert(sk.encrypt(&BigUint::zero(), &pk, &mut rng));
        }
        let mut expected = std::collections::BTreeSet::new();
        for r in 1u32..143 {
            let r = BigUint::from(r);
            if r.gcd(pk.n()).is_one() {
                expected.insert(r.modpow(pk.n(), pk.n_squared()));
            }
        }
        assert_eq!(expected.len(), 120);
        assert_eq!(seen, expected);
    }

    #[test]
    fn batch_neg_matches_single() {
        let (pk, _) = tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let vals: Vec<_> = (0..20).map(|_| pk.random_ciphertext(&mut rng)).collect();
        let batch = pk.batch_neg(&vals).unwrap();
        for (v, b) in vals.iter().zip(&batch) {
            assert_eq!(&pk.neg(v).unwrap(), b);
        }
    }
}
