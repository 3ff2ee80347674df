//! Prime generation for Paillier keys.
//!
//! Primes are generated as `p = 2·k·r + 1` with `r` a large random prime and
//! `k` small, so the factorization of `p − 1` is known. That factorization is
//! what lets the key holder find a generator of the n-th residues modulo `p²`
//! and encrypt through fixed-base tables.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

const SMALL_PRIME_BOUND: u32 = 2000;

fn small_primes() -> &'static [u32] {
    use std::sync::OnceLock;
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let bound = SMALL_PRIME_BOUND as usize;
        let mut sieve = vec![true; bound + 1];
        sieve[0] = false;
        sieve[1] = false;
        let mut i = 2;
        while i * i <= bound {
            if sieve[i] {
                let mut j = i * i;
                while j <= bound {
                    sieve[j] = false;
                    j += i;
                }
            }
            i += 1;
        }
        (2..=bound).filter(|&k| sieve[k]).map(|k| k as u32).collect()
    })
}

/// Miller–Rabin with `rounds` random bases, preceded by trial division.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &sp in small_primes() {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mr_rounds(bits: u64) -> usize {
    match bits {
        0..=128 => 40,
        129..=512 => 24,
        _ => 16,
    }
}

/// Uniform random prime with exactly `bits` bits.
pub fn random_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 3);
    loop {
        let mut c = rng.gen_biguint(bits);
        c.set_bit(bits - 1, true);
        c.set_bit(0, true);
        if is_probable_prime(&c, mr_rounds(bits), rng) {
            return c;
        }
    }
}

/// Distinct prime factors of a small integer, by trial division.
pub fn factor_small(mut k: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= k {
        if k.is_multiple_of(d) {
            out.push(d);
            while k.is_multiple_of(d) {
                k /= d;
            }
        }
        d += 1;
    }
    if k > 1 {
        out.push(k);
    }
    out
}

/// A prime together with the distinct prime factors of `p − 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactoredPrime {
    pub p: BigUint,
    pub pm1_factors: Vec<BigUint>,
}

impl FactoredPrime {
    /// Factors `p − 1` by trial division. Only feasible for `p < 2^62`.
    pub fn from_small(p: &BigUint) -> Option<Self> {
        let v: u64 = u64::try_from(p).ok()?;
        if v >= 1 << 62 {
            return None;
        }
        Some(Self {
            p: p.clone(),
            pm1_factors: factor_small(v - 1).into_iter().map(BigUint::from).collect(),
        })
    }

    /// Smallest primitive root modulo `p`.
    pub fn primitive_root(&self) -> BigUint {
        let pm1 = &self.p - 1u32;
        let mut g = BigUint::from(2u32);
        loop {
            let ok = self
                .pm1_factors
                .iter()
                .all(|l| !g.modpow(&(&pm1 / l), &self.p).is_one());
            if ok {
                return g;
            }
            g += 1u32;
        }
    }
}

/// Generates a prime of exactly `bits` bits of the form `2·k·r + 1`.
pub fn factored_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> FactoredPrime {
    assert!(bits >= 48, "factored primes need at least 48 bits");
    let k_bits = 20u64;
    let r_bits = bits - k_bits - 1;
    let rounds = mr_rounds(bits);
    loop {
        let r = random_prime(r_bits, rng);
        let two_r = &r << 1;
        // p = 2kr + 1 has `bits` bits when k lies in [2^(kb-1), 2^kb) and the
        // product lands in range; check explicitly rather than reason about
        // carries.
        let start: u64 = rng.gen_range(1u64 << (k_bits - 1)..1u64 << k_bits);
        for k in start..start + 4096 {
            let p: BigUint = &two_r * k + 1u32;
            if p.bits() != bits {
                continue;
            }
            if is_probable_prime(&p, rounds, rng) {
                let mut pm1_factors: Vec<BigUint> = factor_small(k).into_iter().map(BigUint::from).collect();
                if !pm1_factors.contains(&BigUint::from(2u32)) {
                    pm1_factors.push(BigUint::from(2u32));
                }
                pm1_factors.push(r.clone());
                pm1_factors.sort();
                pm1_factors.dedup();
                return FactoredPrime { p, pm1_factors };
            }
        }
    }
}

/// `a^{-1} mod m`, if it exists.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let a = BigInt::from(a % m);
    let m_i = BigInt::from(m.clone());
    let e = a.extended_gcd(&m_i);
    if !e.gcd.is_one() {
        return None;
    }
    let x = e.x.mod_floor(&m_i);
    x.to_biguint()
}
