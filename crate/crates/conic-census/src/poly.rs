//! Univariate integer polynomials: evaluation, content, gcd over Q, resultants.
//!
//! Everything here is desk-scale (degree <= 6 or so); the Sylvester resultant
//! is computed in `BigInt` so callers never worry about overflow.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

/// Dense polynomial with integer coefficients, ascending order:
/// `coeffs[j]` multiplies `x^j`. The zero polynomial is an empty vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntPoly {
    pub coeffs: Vec<i128>,
}

impl IntPoly {
    pub fn new(mut coeffs: Vec<i128>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        IntPoly { coeffs }
    }

    pub fn zero() -> Self {
        IntPoly { coeffs: vec![] }
    }

    pub fn constant(c: i128) -> Self {
        Self::new(vec![c])
    }

    /// Monomial x.
    pub fn x() -> Self {
        IntPoly { coeffs: vec![0, 1] }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports `None`.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn leading(&self) -> i128 {
        *self.coeffs.last().unwrap_or(&0)
    }

    pub fn eval(&self, x: i128) -> i128 {
        let mut acc = 0i128;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Evaluation modulo m (m > 0), reducing at every step.
    pub fn eval_mod(&self, x: u64, m: u64) -> u64 {
        let mut acc = 0u128;
        let m128 = m as u128;
        let x128 = (x % m) as u128;
        for &c in self.coeffs.iter().rev() {
            let cm = c.rem_euclid(m as i128) as u128;
            acc = (acc * x128 + cm) % m128;
        }
        acc as u64
    }

    pub fn derivative(&self) -> IntPoly {
        if self.coeffs.len() <= 1 {
            return IntPoly::zero();
        }
        IntPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| c * j as i128)
                .collect(),
        )
    }

    /// Gcd of coefficients, zero for the zero polynomial.
    pub fn content(&self) -> i128 {
        self.coeffs.iter().fold(0i128, |g, &c| g.gcd(&c))
    }

    pub fn mul(&self, other: &IntPoly) -> IntPoly {
        if self.is_zero() || other.is_zero() {
            return IntPoly::zero();
        }
        let mut out = vec![0i128; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        IntPoly::new(out)
    }

    pub fn scale(&self, c: i128) -> IntPoly {
        IntPoly::new(self.coeffs.iter().map(|&a| a * c).collect())
    }

    /// Reduce coefficients mod p into [0, p).
    pub fn reduce_mod(&self, p: u64) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .coeffs
            .iter()
            .map(|&c| c.rem_euclid(p as i128) as u64)
            .collect();
        while v.last() == Some(&0) {
            v.pop();
        }
        v
    }
}

fn big(x: i128) -> BigInt {
    BigInt::from(x)
}

/// Determinant by fraction-free Bareiss elimination.
fn det_bareiss(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::from(1);
    }
    let mut sign = 1i32;
    let mut prev = BigInt::from(1);
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            let swap = (k + 1..n).find(|&r| !m[r][k].is_zero());
            match swap {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = num / &prev;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    if sign < 0 {
        -d
    } else {
        d
    }
}

/// Sylvester resultant of two coefficient sequences of *declared* degrees
/// `deg_f` and `deg_g` (trailing zero coefficients are significant: this is
/// the homogeneous-resultant convention for binary forms).
pub fn resultant_with_degrees(f: &[i128], deg_f: usize, g: &[i128], deg_g: usize) -> BigInt {
    assert!(f.len() <= deg_f + 1 && g.len() <= deg_g + 1);
    if deg_f == 0 && deg_g == 0 {
        return BigInt::from(1);
    }
    let n = deg_f + deg_g;
    let coeff = |c: &[i128], j: usize| -> BigInt {
        if j < c.len() {
            big(c[j])
        } else {
            BigInt::zero()
        }
    };
    // Rows: deg_g shifts of f, then deg_f shifts of g, in descending-power layout.
    let mut m = vec![vec![BigInt::zero(); n]; n];
    for r in 0..deg_g {
        for j in 0..=deg_f {
            m[r][r + j] = coeff(f, deg_f - j);
        }
    }
    for r in 0..deg_f {
        for j in 0..=deg_g {
            m[deg_g + r][r + j] = coeff(g, deg_g - j);
        }
    }
    det_bareiss(m)
}

/// Resultant of two univariate polynomials at their true degrees.
pub fn resultant(f: &IntPoly, g: &IntPoly) -> BigInt {
    match (f.degree(), g.degree()) {
        (None, _) | (_, None) => BigInt::zero(),
        (Some(df), Some(dg)) => resultant_with_degrees(&f.coeffs, df, &g.coeffs, dg),
    }
}

/// True iff f (nonzero) is squarefree over Q, i.e. gcd(f, f') is constant.
pub fn is_squarefree(f: &IntPoly) -> bool {
    match f.degree() {
        None => false,
        Some(0) => true,
        Some(_) => !resultant(f, &f.derivative()).is_zero(),
    }
}

/// Rational roots of f as (numerator, denominator) pairs in lowest terms
/// with positive denominator. f must be nonzero.
pub fn rational_roots(f: &IntPoly) -> Vec<(i128, i128)> {
    let mut roots = vec![];
    let mut g = f.clone();
    // Factor out x | f.
    let mut shift = 0;
    while !g.is_zero() && g.coeffs[0] == 0 {
        g.coeffs.remove(0);
        shift += 1;
    }
    if shift > 0 {
        roots.push((0, 1));
    }
    if g.degree().map_or(true, |d| d == 0) {
        return roots;
    }
    let a0 = g.coeffs[0].unsigned_abs();
    let an = g.leading().unsigned_abs();
    let divs = |n: u128| -> Vec<i128> {
        let mut out = vec![];
        let mut d = 1u128;
        while d * d <= n {
            if n % d == 0 {
                out.push(d as i128);
                out.push((n / d) as i128);
            }
            d += 1;
        }
        out.sort_unstable();
        out.dedup();
        out
    };
    for p in divs(a0) {
        for q in divs(an) {
            if p.gcd(&q) != 1 {
                continue;
            }
            for num in [p, -p] {
                // f(num/q) == 0 <=> sum c_j num^j q^(d-j) == 0
                let d = g.degree().unwrap();
                let mut acc = BigInt::zero();
                for (j, &c) in g.coeffs.iter().enumerate() {
                    acc += big(c) * big(num).pow(j as u32) * big(q).pow((d - j) as u32);
                }
                if acc.is_zero() {
                    roots.push((num, q));
                }
            }
        }
    }
    roots.sort_unstable();
    roots.dedup();
    roots
}

/// Exact division f / g over Q assuming g | f; returns None if not divisible.
pub fn div_exact(f: &IntPoly, g: &IntPoly) -> Option<IntPoly> {
    if g.is_zero() {
        return None;
    }
    if f.is_zero() {
        return Some(IntPoly::zero());
    }
    let df = f.degree()?;
    let dg = g.degree()?;
    if df < dg {
        return None;
    }
    // Work in BigRational-free style: multiply by lc(g)^(df-dg+1) and do
    // pseudo-division, then undo.
    let mut rem: Vec<BigInt> = f.coeffs.iter().map(|&c| big(c)).collect();
    let gl = big(g.leading());
    let mut quo = vec![BigInt::zero(); df - dg + 1];
    for k in (0..=df - dg).rev() {
        let lead = rem[k + dg].clone();
        if (&lead % &gl) != BigInt::zero() {
            return None;
        }
        let q = lead / &gl;
        for j in 0..=dg {
            let t = &q * big(g.coeffs[j]);
            rem[k + j] -= t;
        }
        quo[k] = q;
    }
    if rem.iter().any(|c| !c.is_zero()) {
        return None;
    }
    let mut out = Vec::with_capacity(quo.len());
    for q in quo {
        out.push(q.to_i128()?);
    }
    Some(IntPoly::new(out))
}

/// |resultant| reduced to u64 primes: the primes dividing the resultant.
pub fn resultant_prime_divisors(r: &BigInt, limit_note: &str) -> Result<Vec<u64>, String> {
    if r.is_zero() {
        return Err(format!("resultant is zero ({limit_note})"));
    }
    let mut n = r.abs();
    let mut primes = vec![];
    let mut p = BigInt::from(2);
    // Desk-scale resultants fit u128 comfortably; plain trial division.
    while &p * &p <= n {
        if (&n % &p).is_zero() {
            primes.push(p.to_u64().ok_or("resultant prime exceeds u64")?);
            while (&n % &p).is_zero() {
                n /= &p;
            }
        }
        p += 1;
    }
    if n > BigInt::from(1) {
        primes.push(n.to_u64().ok_or("resultant prime exceeds u64")?);
    }
    Ok(primes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resultant_small_cases() {
        // Res(x-1, x+1) = 2 (dehomogenised s-t, s+t)
        let f = IntPoly::new(vec![-1, 1]);
        let g = IntPoly::new(vec![1, 1]);
        assert_eq!(resultant(&f, &g), BigInt::from(2));
        // Res(x^2+2, -4) with declared degrees (2, 0) = (-4)^2 = 16
        let h = IntPoly::new(vec![2, 0, 1]);
        assert_eq!(
            resultant_with_degrees(&h.coeffs, 2, &[-4], 0),
            BigInt::from(16)
        );
        // common factor -> 0
        let a = IntPoly::new(vec![0, 1]);
        let b = IntPoly::new(vec![0, 0, 1]);
        assert_eq!(resultant(&a, &b), BigInt::from(0));
    }

    #[test]
    fn squarefree_detection() {
        assert!(is_squarefree(&IntPoly::new(vec![-4, 0, 0, 1]))); // x^3 - 4
        assert!(!is_squarefree(&IntPoly::new(vec![0, 0, 1]))); // x^2
        assert!(is_squarefree(&IntPoly::new(vec![0, 1]))); // x
        assert!(!is_squarefree(&IntPoly::zero()));
    }

    #[test]
    fn rational_root_search() {
        // (2x-3)(x+5) = 2x^2 + 7x - 15
        let f = IntPoly::new(vec![-15, 7, 2]);
        let roots = rational_roots(&f);
        assert!(roots.contains(&(-5, 1)));
        assert!(roots.contains(&(3, 2)));
        assert_eq!(roots.len(), 2);
        // x^2 + 1: none
        assert!(rational_roots(&IntPoly::new(vec![1, 0, 1])).is_empty());
    }

    #[test]
    fn exact_division() {
        let f = IntPoly::new(vec![-15, 7, 2]);
        let g = IntPoly::new(vec![5, 1]);
        let q = div_exact(&f, &g).unwrap();
        assert_eq!(q, IntPoly::new(vec![-3, 2]));
        assert!(div_exact(&f, &IntPoly::new(vec![1, 1])).is_none());
    }
}
