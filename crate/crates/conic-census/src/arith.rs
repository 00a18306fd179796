//! Integer-arithmetic kernel: Jacobi symbols, desk-scale factorisation,
//! valuations, and Hensel lifting of polynomial roots modulo prime powers.
//!
//! All functions are pure; the smallest-prime-factor table lives in
//! [`ArithContext`], built once and shared read-only.

use crate::poly::IntPoly;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArithError {
    #[error("jacobi symbol requires odd positive modulus, got {0}")]
    BadJacobiModulus(i128),
    #[error("cannot factor zero")]
    FactorZero,
    #[error("factor {0} resisted the Pollard-rho budget")]
    RhoBudgetExhausted(u128),
    #[error("value {0} outside the desk-scale bound")]
    OutOfRange(i128),
    #[error("polynomial vanishes identically mod {0}")]
    PolyZeroModP(u64),
}

pub fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn gcd_i64(a: i64, b: i64) -> u64 {
    gcd_u64(a.unsigned_abs(), b.unsigned_abs())
}

/// p-adic valuation of a nonzero integer.
pub fn valuation(mut n: u128, p: u64) -> u32 {
    debug_assert!(n != 0);
    let mut v = 0;
    let p = p as u128;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

pub fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn powmod(mut b: u64, mut e: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, b, m);
        }
        b = mulmod(b, b, m);
        e >>= 1;
    }
    acc
}

/// Modular inverse mod m for gcd(a, m) = 1.
pub fn invmod(a: u64, m: u64) -> u64 {
    let (mut t, mut new_t) = (0i128, 1i128);
    let (mut r, mut new_r) = (m as i128, (a % m) as i128);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    debug_assert!(r == 1, "invmod of non-unit");
    t.rem_euclid(m as i128) as u64
}

/// Jacobi symbol (a/n) for odd n >= 1; the fast unchecked core.
pub fn jacobi64(a: i128, n: u64) -> i32 {
    debug_assert!(n % 2 == 1);
    if n == 1 {
        return 1;
    }
    let mut a = a.rem_euclid(n as i128) as u64;
    let mut n = n;
    let mut t = 1i32;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if n % 8 == 3 || n % 8 == 5 {
                t = -t;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            t = -t;
        }
        a %= n;
    }
    if n == 1 {
        t
    } else {
        0
    }
}

/// Jacobi symbol with the spec contract: rejects even or non-positive n.
/// Returns 0 when gcd(a, n) > 1.
pub fn jacobi(a: i128, n: i128) -> Result<i32, ArithError> {
    if n <= 0 || n % 2 == 0 {
        return Err(ArithError::BadJacobiModulus(n));
    }
    if n > u64::MAX as i128 {
        return Err(ArithError::OutOfRange(n));
    }
    Ok(jacobi64(a, n as u64))
}

/// Deterministic Miller-Rabin for u64.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'outer: for a in [2u64, 325, 9375, 28178, 450775, 9780504, 1795265022] {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// A prime-exponent factorisation with its invariants enforced at build time:
/// primes strictly increasing, exponents >= 1, product of powers = |value|.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factorization {
    pub value: i128,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn new(value: i128, mut factors: Vec<(u64, u32)>) -> Self {
        factors.sort_unstable();
        let mut prod = 1u128;
        for w in factors.windows(2) {
            assert!(w[0].0 < w[1].0, "repeated prime in factorisation");
        }
        for &(p, e) in &factors {
            assert!(e >= 1);
            for _ in 0..e {
                prod = prod.checked_mul(p as u128).expect("factorisation overflow");
            }
        }
        assert_eq!(prod, value.unsigned_abs(), "factor product mismatch");
        Factorization { value, factors }
    }

    pub fn one() -> Self {
        Factorization { value: 1, factors: vec![] }
    }

    pub fn omega(&self) -> usize {
        self.factors.len()
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }

    pub fn moebius(&self) -> i32 {
        if !self.is_squarefree() {
            0
        } else if self.factors.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn tau(&self) -> u64 {
        self.factors.iter().map(|&(_, e)| (e + 1) as u64).product()
    }

    pub fn valuation(&self, p: u64) -> u32 {
        self.factors
            .iter()
            .find(|&&(q, _)| q == p)
            .map_or(0, |&(_, e)| e)
    }

    /// Positive divisors, unordered.
    pub fn divisors(&self) -> Vec<u64> {
        let mut out = vec![1u64];
        for &(p, e) in &self.factors {
            let prev = out.clone();
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                out.extend(prev.iter().map(|&d| d * pk));
            }
        }
        out
    }
}

/// Shared arithmetic tables: smallest-prime-factor sieve plus the prime list.
pub struct ArithContext {
    pub spf: Vec<u32>,
    pub primes: Vec<u32>,
    pub rho_budget: u32,
}

pub const DEFAULT_SPF_SIZE: usize = 2_000_000;
pub const DEFAULT_RHO_BUDGET: u32 = 1_000_000;

impl ArithContext {
    pub fn new(spf_size: usize, rho_budget: u32) -> Self {
        let n = spf_size.max(4);
        let mut spf = vec![0u32; n];
        let mut primes = vec![];
        for i in 2..n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u32);
            }
            for &p in &primes {
                let ip = i * p as usize;
                if p > spf[i] || ip >= n {
                    break;
                }
                spf[ip] = p;
            }
        }
        ArithContext { spf, primes, rho_budget }
    }

    pub fn with_defaults() -> Self {
        Self::new(DEFAULT_SPF_SIZE, DEFAULT_RHO_BUDGET)
    }

    pub fn primes_up_to(&self, z: u64) -> impl Iterator<Item = u64> + '_ {
        self.primes
            .iter()
            .map(|&p| p as u64)
            .take_while(move |&p| p <= z)
    }

    /// Factor a u64 completely; SPF lookup below the table, trial division by
    /// table primes, then Pollard rho within budget.
    fn factor_u64(&self, mut n: u64, out: &mut Vec<(u64, u32)>) -> Result<(), ArithError> {
        while n > 1 {
            if (n as usize) < self.spf.len() {
                let p = self.spf[n as usize] as u64;
                let mut e = 0;
                while n % p == 0 {
                    n /= p;
                    e += 1;
                }
                out.push((p, e));
                continue;
            }
            if is_prime_u64(n) {
                out.push((n, 1));
                return Ok(());
            }
            // Remove factors found by table primes up to sqrt.
            let mut reduced = false;
            let r = n.isqrt();
            for &p in &self.primes {
                let p = p as u64;
                if p > r {
                    break;
                }
                if n % p == 0 {
                    let mut e = 0;
                    while n % p == 0 {
                        n /= p;
                        e += 1;
                    }
                    out.push((p, e));
                    reduced = true;
                    break;
                }
            }
            if reduced {
                continue;
            }
            // Composite with both factors beyond the table: rho.
            let d = pollard_rho(n, self.rho_budget)
                .ok_or(ArithError::RhoBudgetExhausted(n as u128))?;
            let (a, b) = (d, n / d);
            self.factor_u64(a, out)?;
            self.factor_u64(b, out)?;
            return Ok(());
        }
        Ok(())
    }
}

/// Brent-cycle Pollard rho; returns a nontrivial factor of composite n.
fn pollard_rho(n: u64, budget: u32) -> Option<u64> {
    if n % 2 == 0 {
        return Some(2);
    }
    let mut c = 1u64;
    let mut spent = 0u32;
    while spent < budget {
        let f = |x: u64| (mulmod(x, x, n) + c) % n;
        let mut x = 2u64;
        let mut y = 2u64;
        let mut d = 1u64;
        while d == 1 && spent < budget {
            x = f(x);
            y = f(f(y));
            d = gcd_u64(x.abs_diff(y), n);
            spent += 1;
        }
        if d != n && d != 1 {
            return Some(d);
        }
        c += 1;
    }
    None
}

/// Full factorisation of a nonzero integer within the 64-bit desk bound.
pub fn factorize(k: i128, ctx: &ArithContext) -> Result<Factorization, ArithError> {
    if k == 0 {
        return Err(ArithError::FactorZero);
    }
    let mag = k.unsigned_abs();
    if mag > u64::MAX as u128 {
        return Err(ArithError::OutOfRange(k));
    }
    let mut factors = vec![];
    ctx.factor_u64(mag as u64, &mut factors)?;
    factors.sort_unstable();
    // Merge duplicates produced by the recursive rho splits.
    let mut merged: Vec<(u64, u32)> = vec![];
    for (p, e) in factors {
        match merged.last_mut() {
            Some((q, f)) if *q == p => *f += e,
            _ => merged.push((p, e)),
        }
    }
    Ok(Factorization::new(k, merged))
}

/// n-dagger: the part of |k| built from primes exceeding `d0`.
pub fn dagger(k: i128, d0: u64, ctx: &ArithContext) -> Result<u64, ArithError> {
    let f = factorize(k, ctx)?;
    Ok(dagger_of(&f, d0))
}

pub fn dagger_of(f: &Factorization, d0: u64) -> u64 {
    let mut out = 1u64;
    for &(p, e) in &f.factors {
        if p > d0 {
            for _ in 0..e {
                out *= p;
            }
        }
    }
    out
}

/// Count of distinct primes p | k with d0 < p <= z.
pub fn omega_z(k: i128, d0: u64, z: f64, ctx: &ArithContext) -> Result<u32, ArithError> {
    let f = factorize(k, ctx)?;
    Ok(omega_z_of(&f, d0, z))
}

pub fn omega_z_of(f: &Factorization, d0: u64, z: f64) -> u32 {
    f.factors
        .iter()
        .filter(|&&(p, _)| p > d0 && (p as f64) <= z)
        .count() as u32
}

/// Square root mod an odd prime via Tonelli-Shanks; `None` for non-residues.
pub fn sqrt_mod_p(a: u64, p: u64) -> Option<u64> {
    let a = a % p;
    if p == 2 {
        return Some(a);
    }
    if a == 0 {
        return Some(0);
    }
    if powmod(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    if p % 4 == 3 {
        return Some(powmod(a, (p + 1) / 4, p));
    }
    let mut q = p - 1;
    let mut s = 0;
    while q % 2 == 0 {
        q /= 2;
        s += 1;
    }
    let mut z = 2;
    while powmod(z, (p - 1) / 2, p) != p - 1 {
        z += 1;
    }
    let mut m = s;
    let mut c = powmod(z, q, p);
    let mut t = powmod(a, q, p);
    let mut r = powmod(a, (q + 1) / 2, p);
    while t != 1 {
        let mut i = 0;
        let mut tt = t;
        while tt != 1 {
            tt = mulmod(tt, tt, p);
            i += 1;
        }
        let b = powmod(c, 1 << (m - i - 1), p);
        m = i;
        c = mulmod(b, b, p);
        t = mulmod(t, c, p);
        r = mulmod(r, b, p);
    }
    Some(r)
}

/// Roots mod p of the reduced coefficient vector (ascending, possibly empty).
/// Degree after reduction is at most 3 on the fast paths; higher degrees fall
/// back to scanning (only reachable for small p in tests).
pub fn roots_mod_p(coeffs: &[u64], p: u64) -> Vec<u64> {
    let mut c: Vec<u64> = coeffs.iter().map(|&x| x % p).collect();
    while c.last() == Some(&0) {
        c.pop();
    }
    if c.is_empty() {
        // Identically zero: every residue is a root.
        return (0..p).collect();
    }
    match c.len() - 1 {
        0 => vec![],
        1 => {
            // c0 + c1 x = 0
            vec![mulmod(p - c[0] % p, invmod(c[1], p), p) % p]
        }
        2 => {
            if p == 2 {
                return (0..2).filter(|&x| poly_eval_mod(&c, x, 2) == 0).collect();
            }
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = (mulmod(b, b, p) + p - mulmod(4 % p, mulmod(a, cc, p), p) % p) % p;
            match sqrt_mod_p(disc, p) {
                None => vec![],
                Some(r) => {
                    let inv2a = invmod(mulmod(2, a, p), p);
                    let x1 = mulmod((p - b + r) % p, inv2a, p);
                    let x2 = mulmod((2 * p - b - r) % p, inv2a, p);
                    let mut v = vec![x1, x2];
                    v.sort_unstable();
                    v.dedup();
                    v
                }
            }
        }
        3 => roots_cubic_mod_p(&c, p),
        _ => {
            if p <= 1_000_000 {
                (0..p).filter(|&x| poly_eval_mod(&c, x, p) == 0).collect()
            } else {
                panic!("degree > 3 root finding mod large p is out of scope");
            }
        }
    }
}

fn poly_eval_mod(c: &[u64], x: u64, p: u64) -> u64 {
    let mut acc = 0u64;
    for &ci in c.iter().rev() {
        acc = (mulmod(acc, x, p) + ci) % p;
    }
    acc
}

/// Polynomial arithmetic mod (f, p) for the x^p - x gcd trick.
fn polymul_mod(a: &[u64], b: &[u64], f: &[u64], p: u64) -> Vec<u64> {
    let n = f.len() - 1; // deg f
    let mut out = vec![0u64; a.len() + b.len()];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + mulmod(ai, bj, p)) % p;
        }
    }
    // Reduce mod f (monic after normalisation by caller).
    for i in (n..out.len()).rev() {
        let coef = out[i];
        if coef == 0 {
            continue;
        }
        out[i] = 0;
        for j in 0..n {
            let t = mulmod(coef, f[j], p);
            out[i - n + j] = (out[i - n + j] + p - t) % p;
        }
    }
    out.truncate(n);
    while out.last() == Some(&0) {
        out.pop();
    }
    out
}

fn poly_gcd_mod(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    while !b.is_empty() {
        // a mod b
        let db = b.len() - 1;
        let inv = invmod(b[db], p);
        while a.len() > db {
            let da = a.len() - 1;
            let coef = mulmod(a[da], inv, p);
            if coef != 0 {
                for j in 0..=db {
                    let t = mulmod(coef, b[j], p);
                    a[da - db + j] = (a[da - db + j] + p - t) % p;
                }
            }
            while a.last() == Some(&0) {
                a.pop();
            }
            if a.len() <= db {
                break;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    if let Some(&l) = a.last() {
        let inv = invmod(l, p);
        for c in a.iter_mut() {
            *c = mulmod(*c, inv, p);
        }
    }
    a
}

/// Cubic root finding mod p: split off the product of linear factors with
/// gcd(x^p - x, f) and extract roots by Cantor-Zassenhaus.
fn roots_cubic_mod_p(c: &[u64], p: u64) -> Vec<u64> {
    if p < 50 {
        return (0..p).filter(|&x| poly_eval_mod(c, x, p) == 0).collect();
    }
    // Normalise monic.
    let inv = invmod(c[3], p);
    let f: Vec<u64> = c.iter().map(|&x| mulmod(x, inv, p)).collect();
    // x^p mod f by square-and-multiply.
    let mut acc = vec![1u64];
    let mut base = vec![0u64, 1];
    let mut e = p;
    while e > 0 {
        if e & 1 == 1 {
            acc = polymul_mod(&acc, &base, &f, p);
        }
        base = polymul_mod(&base, &base, &f, p);
        e >>= 1;
    }
    // x^p - x
    let mut xp_minus_x = acc;
    if xp_minus_x.len() < 2 {
        xp_minus_x.resize(2, 0);
    }
    xp_minus_x[1] = (xp_minus_x[1] + p - 1) % p;
    while xp_minus_x.last() == Some(&0) {
        xp_minus_x.pop();
    }
    let g = poly_gcd_mod(&f, &xp_minus_x, p);
    extract_roots(&g, p)
}

/// Roots of a monic split polynomial (all roots in F_p), degree <= 3.
fn extract_roots(g: &[u64], p: u64) -> Vec<u64> {
    match g.len().saturating_sub(1) {
        0 => vec![],
        1 => vec![(p - g[0] % p) % p],
        2 => {
            let disc = (mulmod(g[1], g[1], p) + p - mulmod(4 % p, g[0], p) % p) % p;
            let r = sqrt_mod_p(disc, p).expect("split quadratic must have square disc");
            let inv2 = invmod(2, p);
            let mut v = vec![
                mulmod((p - g[1] + r) % p, inv2, p),
                mulmod((2 * p - g[1] - r) % p, inv2, p),
            ];
            v.sort_unstable();
            v.dedup();
            v
        }
        _ => {
            // Split cubic: find one root by random splitting, deflate.
            let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ p;
            loop {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = state % p;
                // gcd((x+a)^((p-1)/2) - 1, g)
                let mut acc = vec![1u64];
                let mut base = vec![a, 1];
                let mut e = (p - 1) / 2;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = polymul_mod(&acc, &base, g, p);
                    }
                    base = polymul_mod(&base, &base, g, p);
                    e >>= 1;
                }
                if acc.is_empty() {
                    acc = vec![0];
                }
                acc[0] = (acc[0] + p - 1) % p;
                while acc.last() == Some(&0) {
                    acc.pop();
                }
                let h = poly_gcd_mod(g, &acc, p);
                if !h.is_empty() && h.len() - 1 >= 1 && h.len() - 1 < g.len() - 1 {
                    let mut roots = extract_roots(&h, p);
                    // Deflate g by h.
                    let mut rest = g.to_vec();
                    for r in &roots {
                        rest = deflate(&rest, *r, p);
                    }
                    roots.extend(extract_roots(&rest, p));
                    roots.sort_unstable();
                    roots.dedup();
                    return roots;
                }
            }
        }
    }
}

fn deflate(g: &[u64], root: u64, p: u64) -> Vec<u64> {
    // Synthetic division by (x - root).
    let mut out = vec![0u64; g.len() - 1];
    let mut carry = 0u64;
    for i in (0..g.len()).rev() {
        let v = (g[i] + mulmod(carry, root, p)) % p;
        if i == 0 {
            debug_assert_eq!(v, 0, "deflate by a non-root");
        } else {
            out[i - 1] = v;
            carry = v;
        }
    }
    out
}

/// Residue class: an integer in [0, modulus).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ResidueClass {
    pub modulus: u64,
    pub residue: u64,
}

impl ResidueClass {
    pub fn new(modulus: u64, residue: i128) -> Self {
        assert!(modulus > 0);
        ResidueClass { modulus, residue: residue.rem_euclid(modulus as i128) as u64 }
    }
}

/// All roots of f mod p^k, exactly; simple roots mod p lift uniquely, others
/// are followed through the full Hensel tree.
pub fn hensel_roots(f: &IntPoly, p: u64, k: u32) -> Result<Vec<ResidueClass>, ArithError> {
    let red = f.reduce_mod(p);
    if red.is_empty() {
        return Err(ArithError::PolyZeroModP(p));
    }
    let mut roots: Vec<u64> = roots_mod_p(&red, p);
    let mut modulus = p;
    let fprime = f.derivative();
    for _ in 1..k {
        let next = modulus.checked_mul(p).expect("p^k overflow");
        let mut lifted = vec![];
        for &r in &roots {
            let fr = f.eval_mod(r, next);
            let dr = fprime.eval_mod(r, p);
            if dr != 0 {
                // Simple root: unique Newton lift.
                let t = mulmod(fr / modulus % p, invmod(p - dr, p), p);
                lifted.push(r + t * modulus);
            } else if fr == 0 {
                // Degenerate: every lift of r is a root mod next.
                for c in 0..p {
                    lifted.push(r + c * modulus);
                }
            }
        }
        roots = lifted;
        modulus = next;
    }
    roots.sort_unstable();
    Ok(roots
        .into_iter()
        .map(|r| ResidueClass { modulus, residue: r })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> ArithContext {
        ArithContext::new(100_000, 100_000)
    }

    #[test]
    fn jacobi_spec_examples() {
        assert_eq!(jacobi(5, 1).unwrap(), 1);
        assert_eq!(jacobi(2, 15).unwrap(), 1);
        for p in [3u64, 7, 11, 19, 23, 31, 43] {
            assert_eq!(p % 4, 3);
            assert_eq!(jacobi(-4, p as i128).unwrap(), -1);
        }
        assert!(jacobi(3, 4).is_err());
        assert!(jacobi(3, -5).is_err());
        assert_eq!(jacobi(10, 5).unwrap(), 0);
    }

    #[test]
    fn jacobi_matches_quadratic_residues_small_primes() {
        let c = ctx();
        for p in c.primes_up_to(500).skip(1) {
            let residues: std::collections::HashSet<u64> =
                (1..p).map(|x| mulmod(x, x, p)).collect();
            for a in 0..p {
                let expect = if a == 0 {
                    0
                } else if residues.contains(&a) {
                    1
                } else {
                    -1
                };
                assert_eq!(jacobi64(a as i128, p), expect, "a={a} p={p}");
            }
        }
    }

    #[test]
    fn jacobi_multiplicative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let a = rng.gen_range(-1000i128..1000);
            let b = rng.gen_range(-1000i128..1000);
            let m = rng.gen_range(0u64..500) * 2 + 1;
            let n = rng.gen_range(0u64..500) * 2 + 1;
            assert_eq!(
                jacobi64(a, n) * jacobi64(b, n),
                jacobi64(a * b, n),
                "top multiplicativity"
            );
            assert_eq!(
                jacobi64(a, m) * jacobi64(a, n),
                jacobi64(a, m * n),
                "bottom multiplicativity"
            );
        }
    }

    #[test]
    fn miller_rabin_agrees_with_sieve() {
        let c = ctx();
        for n in 2..50_000u64 {
            let sieve_prime = c.spf[n as usize] as u64 == n;
            assert_eq!(is_prime_u64(n), sieve_prime, "n={n}");
        }
    }

    #[test]
    fn factorize_spec_examples() {
        let c = ctx();
        assert_eq!(factorize(1, &c).unwrap().factors, vec![]);
        assert_eq!(factorize(-12, &c).unwrap().factors, vec![(2, 2), (3, 1)]);
        assert_eq!(
            factorize(616, &c).unwrap().factors,
            vec![(2, 3), (7, 1), (11, 1)]
        );
        assert!(factorize(0, &c).is_err());
    }

    #[test]
    fn factorize_roundtrip_random() {
        use rand::{Rng, SeedableRng};
        let c = ctx();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(1i128..10_000_000_000);
            let f = factorize(n, &c).unwrap();
            let prod: u128 = f
                .factors
                .iter()
                .map(|&(p, e)| (p as u128).pow(e))
                .product();
            assert_eq!(prod, n as u128);
            assert!(f.factors.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn factorize_beyond_table_uses_rho() {
        let c = ctx();
        // Two primes beyond the 1e5 table.
        let p = 1_000_003u64;
        let q = 1_000_033u64;
        let f = factorize((p as i128) * (q as i128), &c).unwrap();
        assert_eq!(f.factors, vec![(p, 1), (q, 1)]);
    }

    #[test]
    fn dagger_spec_examples() {
        let c = ctx();
        assert_eq!(dagger(35, 2, &c).unwrap(), 35);
        assert_eq!(dagger(12, 3, &c).unwrap(), 1);
        assert_eq!(dagger(-40, 3, &c).unwrap(), 5);
    }

    #[test]
    fn omega_z_spec_examples() {
        let c = ctx();
        assert_eq!(omega_z(1, 2, 100.0, &c).unwrap(), 0);
        assert_eq!(omega_z(30, 2, 5.0, &c).unwrap(), 2);
        assert_eq!(omega_z(7 * 11 * 13, 5, 12.0, &c).unwrap(), 2);
    }

    #[test]
    fn hensel_spec_examples() {
        let f = IntPoly::x();
        let r = hensel_roots(&f, 5, 3).unwrap();
        assert_eq!(r, vec![ResidueClass { modulus: 125, residue: 0 }]);

        let f = IntPoly::new(vec![1, 0, 1]); // x^2 + 1
        let r = hensel_roots(&f, 5, 2).unwrap();
        let vals: Vec<u64> = r.iter().map(|c| c.residue).collect();
        assert_eq!(vals, vec![7, 18]);

        assert!(hensel_roots(&f, 3, 1).unwrap().is_empty());
    }

    #[test]
    fn hensel_agrees_with_exhaustive_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let primes = [2u64, 3, 5, 7, 11, 13, 97, 101];
        for _ in 0..200 {
            let deg = rng.gen_range(1..=3);
            let mut coeffs: Vec<i128> = (0..=deg).map(|_| rng.gen_range(-30i128..30)).collect();
            if coeffs.iter().all(|&c| c == 0) {
                coeffs[deg] = 1;
            }
            let f = IntPoly::new(coeffs);
            let p = primes[rng.gen_range(0..primes.len())];
            let mut k = rng.gen_range(1..=4u32);
            while (p as u128).pow(k) > 1_000_000 {
                k -= 1;
            }
            if f.reduce_mod(p).is_empty() {
                continue;
            }
            let m = p.pow(k);
            let got: Vec<u64> = hensel_roots(&f, p, k)
                .unwrap()
                .iter()
                .map(|c| c.residue)
                .collect();
            let want: Vec<u64> = (0..m).filter(|&x| f.eval_mod(x, m) == 0).collect();
            assert_eq!(got, want, "f={:?} p={p} k={k}", f.coeffs);
        }
    }

    #[test]
    fn cubic_roots_large_prime() {
        // (x-5)(x-17)(x+3) mod p
        let p = 1_000_003u64;
        let f = IntPoly::new(vec![255, 19, -19, 1]); // expand (x-5)(x-17)(x+3)
        let mut want: Vec<u64> = vec![5, 17, p - 3];
        want.sort_unstable();
        let got = roots_mod_p(&f.reduce_mod(p), p);
        assert_eq!(got, want);
        // Irreducible cubic: x^3 - x - 1 mod 7 has one root? scan small prime instead.
        let g = IntPoly::new(vec![-1, -1, 0, 1]);
        for p in [10007u64, 100003] {
            let got = roots_mod_p(&g.reduce_mod(p), p);
            let want: Vec<u64> = (0..p).filter(|&x| g.eval_mod(x, p) == 0).collect();
            assert_eq!(got, want, "p={p}");
        }
    }

    #[test]
    fn factorization_invariants_enforced() {
        let f = Factorization::new(-12, vec![(3, 1), (2, 2)]);
        assert_eq!(f.factors, vec![(2, 2), (3, 1)]);
        assert_eq!(f.tau(), 6);
        assert_eq!(f.moebius(), 0);
        let mut d = f.divisors();
        d.sort_unstable();
        assert_eq!(d, vec![1, 2, 3, 4, 6, 12]);
    }
}
