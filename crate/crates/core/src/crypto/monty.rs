//! Montgomery multiplication over an odd modulus, on raw 64-bit limbs.

use num_bigint::BigUint;
use num_traits::{One, Zero};

/// A residue in Montgomery form (`x·R mod N`), little-endian limbs.
pub(crate) type MontyValue = Vec<u64>;

#[derive(Clone, Debug)]
pub(crate) struct Monty {
    modulus: BigUint,
    n: Vec<u64>,
    n0_inv: u64,
    r2: MontyValue,
    one: MontyValue,
}

impl PartialEq for Monty {
    fn eq(&self, other: &Self) -> bool {
        self.modulus == other.modulus
    }
}

impl Eq for Monty {}

fn limbs_of(x: &BigUint, len: usize) -> Vec<u64> {
    let mut v = x.to_u64_digits();
    v.resize(len, 0);
    v
}

impl Monty {
    pub(crate) fn new(modulus: &BigUint) -> Self {
        assert!(modulus.bit(0), "Montgomery form needs an odd modulus");
        let n = modulus.to_u64_digits();
        let len = n.len();
        // Newton iteration for n[0]^(-1) mod 2^64
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(n[0].wrapping_mul(inv)));
        }
        let r = BigUint::one() << (64 * len);
        let r2 = limbs_of(&((&r * &r) % modulus), len);
        let one = limbs_of(&(&r % modulus), len);
        Self {
            modulus: modulus.clone(),
            n,
            n0_inv: inv.wrapping_neg(),
            r2,
            one,
        }
    }

    /// `a·b·R^(-1) mod N` (CIOS, multiplication and reduction interleaved).
    pub(crate) fn mul(&self, a: &[u64], b: &[u64]) -> MontyValue {
        let s = self.n.len();
        let mut t = vec![0u64; s + 1];
        self.mul_into(a, b, &mut t);
        t.truncate(s);
        t
    }

    fn mul_into(&self, a: &[u64], b: &[u64], t: &mut [u64]) {
        match self.n.len() {
            4 => self.mul_fixed::<4>(a, b, t),
            8 => self.mul_fixed::<8>(a, b, t),
            16 => self.mul_fixed::<16>(a, b, t),
            32 => self.mul_fixed::<32>(a, b, t),
            s => cios(&self.n[..s], self.n0_inv, &a[..s], &b[..s], &mut t[..s + 1]),
        }
    }

    #[inline(always)]
    fn mul_fixed<const S: usize>(&self, a: &[u64], b: &[u64], t: &mut [u64]) {
        let n: &[u64; S] = self.n[..S].try_into().expect("limb count");
        let a: &[u64; S] = a[..S].try_into().expect("limb count");
        let b: &[u64; S] = b[..S].try_into().expect("limb count");
        let mut acc = [0u64; S];
        let top = cios_core(n, self.n0_inv, a, b, &mut acc);
        finish(n, &mut acc, top);
        t[..S].copy_from_slice(&acc);
        t[S] = 0;
    }

    pub(crate) fn to_monty(&self, x: &BigUint) -> MontyValue {
        let x = if x < &self.modulus { x.clone() } else { x % &self.modulus };
        self.mul(&limbs_of(&x, self.n.len()), &self.r2)
    }

    pub(crate) fn to_plain(&self, x: &[u64]) -> BigUint {
        let mut one = vec![0u64; self.n.len()];
        one[0] = 1;
        let v = self.mul(x, &one);
        BigUint::from_slice(
            &v.iter()
                .flat_map(|&l| [l as u32, (l >> 32) as u32])
                .collect::<Vec<u32>>(),
        )
    }

    pub(crate) fn one(&self) -> MontyValue {
        self.one.clone()
    }

    /// `base^exp` with both input and output in Montgomery form.
    pub(crate) fn pow_monty(&self, base: &[u64], exp: &BigUint) -> MontyValue {
        const W: u64 = 5;
        let s = self.n.len();
        if exp.is_zero() {
            return self.one();
        }
        let bits = exp.bits();
        // small exponents do not amortize a table
        let w = if bits <= 24 { 1 } else { W };
        let mut table = Vec::with_capacity(1 << w);
        table.push(self.one());
        for i in 1..(1usize << w) {
            let next = self.mul(&table[i - 1], base);
            table.push(next);
        }
        let mut acc = vec![0u64; s + 1];
        let mut tmp = vec![0u64; s + 1];
        let mut started = false;
        for win in (0..bits.div_ceil(w)).rev() {
            if started {
                for _ in 0..w {
                    self.mul_into(&acc, &acc, &mut tmp);
                    std::mem::swap(&mut acc, &mut tmp);
                }
            }
            let mut d = 0usize;
            for b in 0..w {
                if exp.bit(win * w + b) {
                    d |= 1 << b;
                }
            }
            if d != 0 {
                if started {
                    self.mul_into(&acc, &table[d], &mut tmp);
                    std::mem::swap(&mut acc, &mut tmp);
                } else {
                    acc[..s].copy_from_slice(&table[d]);
                    started = true;
                }
            }
        }
        acc.truncate(s);
        acc
    }

    pub(crate) fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        self.to_plain(&self.pow_monty(&self.to_monty(base), exp))
    }
}

/// Interleaved multiply and reduce. Leaves `a·b·R⁻¹ mod N` plus possibly one
/// extra `N` in `t`, returning the carry limb. No sum here can exceed 2¹²⁸,
/// so plain wrapping arithmetic is exact.
#[inline(always)]
fn cios_core(n: &[u64], n0_inv: u64, a: &[u64], b: &[u64], t: &mut [u64]) -> u64 {
    let s = n.len();
    let mut top = 0u64;
    for &bi in b {
        let bi = bi as u128;
        let v = (t[0] as u128).wrapping_add((a[0] as u128).wrapping_mul(bi));
        let m = (v as u64).wrapping_mul(n0_inv) as u128;
        let w = ((v as u64) as u128).wrapping_add(m.wrapping_mul(n[0] as u128));
        let mut c1 = v >> 64;
        let mut c2 = w >> 64;
        for j in 1..s {
            let v = (t[j] as u128).wrapping_add((a[j] as u128).wrapping_mul(bi)).wrapping_add(c1);
            c1 = v >> 64;
            let w = ((v as u64) as u128).wrapping_add(m.wrapping_mul(n[j] as u128)).wrapping_add(c2);
            c2 = w >> 64;
            t[j - 1] = w as u64;
        }
        let v = (top as u128).wrapping_add(c1).wrapping_add(c2);
        t[s - 1] = v as u64;
        top = (v >> 64) as u64;
    }
    top
}

/// `t < 2N` on entry; one conditional subtraction brings it below `N`.
#[inline(always)]
fn finish(n: &[u64], t: &mut [u64], top: u64) {
    let ge = top != 0 || {
        let mut ge = true;
        for j in (0..n.len()).rev() {
            if t[j] != n[j] {
                ge = t[j] > n[j];
                break;
            }
        }
        ge
    };
    if ge {
        let mut borrow = false;
        for j in 0..n.len() {
            let (d1, b1) = t[j].overflowing_sub(n[j]);
            let (d2, b2) = d1.overflowing_sub(borrow as u64);
            t[j] = d2;
            borrow = b1 || b2;
        }
    }
}

fn cios(n: &[u64], n0_inv: u64, a: &[u64], b: &[u64], t: &mut [u64]) {
    let s = n.len();
    t.fill(0);
    let top = cios_core(n, n0_inv, a, b, &mut t[..s]);
    finish(n, &mut t[..s], top);
    t[s] = 0;
}
