//! Real and p-adic solubility of ternary conics, the Hasse-Minkowski global
//! test, the detector formula for large primes, and the congruence frame
//! (D0, W, kappa_p, W_i, the box R) that everything downstream counts over.

use crate::arith::{
    factorize, is_prime_u64, jacobi64, valuation, ArithContext, ArithError, Factorization,
};
use crate::forms::{BinaryForm, BundleAnalysis, ConicBundle};
use crate::poly::resultant_prime_divisors;
use num_rational::Ratio;
use num_traits::Signed;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

pub type Rat = Ratio<i64>;

#[derive(Debug, Error)]
pub enum LocalError {
    #[error("singular ternary form (det = 0)")]
    SingularForm,
    #[error("{0}")]
    Arith(#[from] ArithError),
    #[error("no factor Delta_i is divisible by p = {0}: detector precondition violated")]
    NoFactorDivisible(u64),
    #[error("p = {0} divides more than one Delta_i(s,t): D0 too small, frame rebuild required")]
    UniquenessViolated(u64),
    #[error("p = {0} divides F_i(s,t): D0 too small, frame rebuild required")]
    SymbolDegenerate(u64),
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("base point ({0}, {1}) is not primitive")]
    BaseNotPrimitive(i64, i64),
    #[error("base point has singular fibre: Delta(s0, t0) = 0")]
    BaseSingular,
    #[error("base fibre Q_{{s0,t0}} has no rational point")]
    BaseInsoluble,
    #[error("box validation failed: {0}")]
    BadBox(String),
    #[error("W overflows u64: the bundle needs a smaller congruence frame")]
    WTooLarge,
    #[error("{0}")]
    Local(#[from] LocalError),
    #[error("{0}")]
    Arith(#[from] ArithError),
    #[error("resultant failure: {0}")]
    Resultant(String),
}

/// Place of Q: the real place or a finite prime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Place {
    Real,
    Prime(u64),
}

fn eps2(u: i128) -> u32 {
    // (u-1)/2 mod 2 for odd u
    if u.rem_euclid(4) == 1 {
        0
    } else {
        1
    }
}

fn omega2(u: i128) -> u32 {
    // (u^2-1)/8 mod 2 for odd u
    let r = u.rem_euclid(8);
    if r == 1 || r == 7 {
        0
    } else {
        1
    }
}

/// Hilbert symbol (a, b)_v for nonzero integers; multiplicative in both
/// arguments and symmetric, with product formula over all places.
pub fn hilbert_symbol(a: i128, b: i128, place: Place) -> i32 {
    assert!(a != 0 && b != 0, "hilbert symbol needs nonzero arguments");
    match place {
        Place::Real => {
            if a < 0 && b < 0 {
                -1
            } else {
                1
            }
        }
        Place::Prime(2) => {
            let alpha = valuation(a.unsigned_abs(), 2);
            let beta = valuation(b.unsigned_abs(), 2);
            let u = a / (1i128 << alpha);
            let w = b / (1i128 << beta);
            let e = eps2(u) * eps2(w) + alpha * omega2(w) + beta * omega2(u);
            if e % 2 == 0 {
                1
            } else {
                -1
            }
        }
        Place::Prime(p) => {
            debug_assert!(p % 2 == 1 && is_prime_u64(p));
            let alpha = valuation(a.unsigned_abs(), p);
            let beta = valuation(b.unsigned_abs(), p);
            let u = a / (p as i128).pow(alpha);
            let w = b / (p as i128).pow(beta);
            let mut sym = 1i32;
            if alpha % 2 == 1 && beta % 2 == 1 && (p - 1) / 2 % 2 == 1 {
                sym = -sym;
            }
            if beta % 2 == 1 {
                sym *= jacobi64(u, p);
            }
            if alpha % 2 == 1 {
                sym *= jacobi64(w, p);
            }
            sym
        }
    }
}

/// Hilbert symbol of nonzero rationals given as (numerator, denominator):
/// the class of n/d equals the class of n*d.
pub fn hilbert_symbol_rat(a: (i128, i128), b: (i128, i128), place: Place) -> i32 {
    hilbert_symbol(a.0 * a.1, b.0 * b.1, place)
}

/// Integral symmetric Gram matrix of a ternary quadratic form. Constructed
/// from the bundle it is the matrix (f_ij); from polynomial coefficients it
/// is the matrix of 2Q, which has the same isotropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TernaryForm {
    pub m: [[i128; 3]; 3],
}

impl TernaryForm {
    pub fn from_matrix_entries(a11: i128, a22: i128, a33: i128, a12: i128, a13: i128, a23: i128) -> Self {
        TernaryForm { m: [[a11, a12, a13], [a12, a22, a23], [a13, a23, a33]] }
    }

    /// From Q = a x^2 + b y^2 + c z^2 + d xy + e xz + f yz: uses the matrix
    /// of 2Q to stay integral.
    pub fn from_poly_coeffs(a: i128, b: i128, c: i128, d: i128, e: i128, f: i128) -> Self {
        TernaryForm { m: [[2 * a, d, e], [d, 2 * b, f], [e, f, 2 * c]] }
    }

    pub fn diagonal(a: i128, b: i128, c: i128) -> Self {
        Self::from_matrix_entries(a, b, c, 0, 0, 0)
    }

    pub fn from_bundle_at(bundle: &ConicBundle, s: i128, t: i128) -> Self {
        let [a11, a22, a33, a12, a13, a23] = bundle.specialise(s, t);
        Self::from_matrix_entries(a11, a22, a33, a12, a13, a23)
    }

    pub fn det(&self) -> i128 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[1][2])
            - m[0][1] * (m[0][1] * m[2][2] - m[1][2] * m[0][2])
            + m[0][2] * (m[0][1] * m[1][2] - m[1][1] * m[0][2])
    }

    /// Diagonalise over Q by symmetric completion of squares with pivoting:
    /// returns an integer triple (a, b, c) with diag(a, b, c) isotropic over
    /// each completion exactly when the form is.
    pub fn diagonalize(&self) -> Result<(i128, i128, i128), LocalError> {
        if self.det() == 0 {
            return Err(LocalError::SingularForm);
        }
        let mut m = self.m;
        // Pivot a nonzero entry into position (0,0).
        if m[0][0] == 0 {
            if let Some(i) = (1..3).find(|&i| m[i][i] != 0) {
                m.swap(0, i);
                for row in m.iter_mut() {
                    row.swap(0, i);
                }
            } else {
                // All diagonal entries vanish; x0 -> x0 + xj with m[0][j] != 0.
                let j = (1..3).find(|&j| m[0][j] != 0).expect("nonsingular");
                for k in 0..3 {
                    m[0][k] += m[j][k];
                }
                for k in 0..3 {
                    m[k][0] += m[k][j];
                }
            }
        }
        let a = m[0][0];
        // N_jk = a m_jk - m_0j m_0k for j,k in {1,2}.
        let mut n = [[0i128; 2]; 2];
        for j in 0..2 {
            for k in 0..2 {
                n[j][k] = a * m[j + 1][k + 1] - m[0][j + 1] * m[0][k + 1];
            }
        }
        if n[0][0] == 0 {
            if n[1][1] != 0 {
                n.swap(0, 1);
                for row in n.iter_mut() {
                    row.swap(0, 1);
                }
            } else {
                // y -> y + z doubles the off-diagonal into the corner.
                n[0][0] = 2 * n[0][1];
                // remaining entries are not needed beyond n[1][1], n[0][1]:
                let n01 = n[0][1] + n[1][1];
                n[0][1] = n01;
                n[1][0] = n01;
            }
        }
        let b = n[0][0];
        let c = n[0][0] * n[1][1] - n[0][1] * n[0][1];
        debug_assert!(b != 0 && c != 0);
        // Q isotropic <=> b u^2 + v^2 + c w^2 isotropic.
        Ok((b, 1, c))
    }
}

/// The symbol H_v: +1 if the conic Q = 0 is soluble over the completion at
/// `place`, -1 otherwise. Q must be nonsingular.
pub fn conic_soluble_at(q: &TernaryForm, place: Place) -> Result<i32, LocalError> {
    let (a, b, c) = q.diagonalize()?;
    Ok(hilbert_symbol(-a * c, -b * c, place))
}

/// Hasse-Minkowski: a smooth conic has a rational point iff it has one over
/// R and over Q_p for every p dividing 2 det.
pub fn has_rational_point(q: &TernaryForm, ctx: &ArithContext) -> Result<bool, LocalError> {
    let det = q.det();
    if det == 0 {
        return Err(LocalError::SingularForm);
    }
    if conic_soluble_at(q, Place::Real)? == -1 {
        return Ok(false);
    }
    let f = factorize(det, ctx)?;
    if conic_soluble_at(q, Place::Prime(2))? == -1 {
        return Ok(false);
    }
    for &(p, _) in &f.factors {
        if p == 2 {
            continue;
        }
        if conic_soluble_at(q, Place::Prime(p))? == -1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Independent solubility oracle: reduce a x^2 + b y^2 + c z^2 = 0 to the
/// squarefree pairwise-coprime normal form and exhaust the Holzer box
/// |x| <= sqrt|bc|, |y| <= sqrt|ac|. Exponential in the coefficient size;
/// test use only.
pub fn holzer_soluble(a: i128, b: i128, c: i128, ctx: &ArithContext) -> Result<bool, LocalError> {
    assert!(a != 0 && b != 0 && c != 0);
    let squarefree_part = |n: i128| -> Result<i128, LocalError> {
        let f = factorize(n, ctx)?;
        let mut out = n.signum();
        for (p, e) in f.factors {
            if e % 2 == 1 {
                out *= p as i128;
            }
        }
        Ok(out)
    };
    let (mut a, mut b, mut c) = (squarefree_part(a)?, squarefree_part(b)?, squarefree_part(c)?);
    // Make pairwise coprime: if g | a and g | b then a/g x'^2 + b/g y'^2 + cg z^2.
    loop {
        let mut changed = false;
        for _ in 0..3 {
            let g = crate::arith::gcd_u64(a.unsigned_abs() as u64, b.unsigned_abs() as u64) as i128;
            if g > 1 {
                a /= g;
                b /= g;
                c *= g;
                c = squarefree_part(c)?;
                changed = true;
            }
            // rotate (a, b, c) -> (b, c, a)
            let t = a;
            a = b;
            b = c;
            c = t;
        }
        if !changed {
            break;
        }
    }
    if a > 0 && b > 0 && c > 0 || a < 0 && b < 0 && c < 0 {
        return Ok(false);
    }
    let xb = ((b * c).unsigned_abs() as f64).sqrt() as i128 + 1;
    let yb = ((a * c).unsigned_abs() as f64).sqrt() as i128 + 1;
    for x in 0..=xb {
        for y in 0..=yb {
            if x == 0 && y == 0 {
                continue;
            }
            let rest = -(a * x * x + b * y * y);
            if rest % c != 0 {
                continue;
            }
            let z2 = rest / c;
            if z2 < 0 {
                continue;
            }
            let z = (z2 as u128).isqrt() as i128;
            if z * z == z2 {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Closed rational box [s_min, s_max] x [t_min, t_max].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Box2D {
    pub s_min: Rat,
    pub s_max: Rat,
    pub t_min: Rat,
    pub t_max: Rat,
}

impl Box2D {
    pub fn new(s_min: Rat, s_max: Rat, t_min: Rat, t_max: Rat) -> Self {
        assert!(s_min < s_max && t_min < t_max, "degenerate box");
        Box2D { s_min, s_max, t_min, t_max }
    }

    /// Sup norm of the box corners.
    pub fn sup_norm(&self) -> Rat {
        [self.s_min, self.s_max, self.t_min, self.t_max]
            .into_iter()
            .map(|r| r.abs())
            .max()
            .unwrap()
    }

    pub fn volume(&self) -> Rat {
        (self.s_max - self.s_min) * (self.t_max - self.t_min)
    }

    /// Is the integer point (s, t) inside B * box (closed)?
    pub fn contains_scaled(&self, b: u64, s: i64, t: i64) -> bool {
        let ge = |x: i64, r: Rat| (x as i128) * (*r.denom() as i128) >= (b as i128) * (*r.numer() as i128);
        let le = |x: i64, r: Rat| (x as i128) * (*r.denom() as i128) <= (b as i128) * (*r.numer() as i128);
        ge(s, self.s_min) && le(s, self.s_max) && ge(t, self.t_min) && le(t, self.t_max)
    }

    /// Integer range of s inside B * box.
    pub fn s_range(&self, b: u64) -> (i64, i64) {
        let lo = ceil_ratio(b, self.s_min);
        let hi = floor_ratio(b, self.s_max);
        (lo, hi)
    }

    pub fn t_range(&self, b: u64) -> (i64, i64) {
        let lo = ceil_ratio(b, self.t_min);
        let hi = floor_ratio(b, self.t_max);
        (lo, hi)
    }
}

fn ceil_ratio(b: u64, r: Rat) -> i64 {
    let num = (b as i128) * (*r.numer() as i128);
    let den = *r.denom() as i128;
    num.div_euclid(den) as i64 + if num.rem_euclid(den) != 0 { 1 } else { 0 }
}

fn floor_ratio(b: u64, r: Rat) -> i64 {
    let num = (b as i128) * (*r.numer() as i128);
    let den = *r.denom() as i128;
    num.div_euclid(den) as i64
}

/// The congruence/region frame: D0, W = prod p^{n_p}, the stability depths
/// kappa_p, the per-fibre small-prime parts W_i, and the box R.
#[derive(Clone, Debug, Serialize)]
pub struct LocalData {
    pub d0: u64,
    pub w: u64,
    pub kappa: BTreeMap<u64, u32>,
    pub n_exp: BTreeMap<u64, u32>,
    pub base_point: (i64, i64),
    pub w_i: Vec<u64>,
    pub bx: Box2D,
}

impl LocalData {
    /// curly-A_i = <Delta_i> (1 + deg Delta_i) ||R||_inf^deg: the exact
    /// rational with |Delta_i(s,t)| <= A_i B^deg on B*R.
    pub fn curly_a(&self, delta: &BinaryForm) -> Ratio<i128> {
        let d = delta.degree() as u32;
        let h = delta.height();
        let sup = self.bx.sup_norm();
        let num = (*sup.numer() as i128).pow(d);
        let den = (*sup.denom() as i128).pow(d);
        Ratio::new(h * (d as i128 + 1) * num, den)
    }

    /// Q_i^2 = A_i B^deg / (m^2 W_i) as an exact rational.
    pub fn q_i_squared(&self, i: usize, delta: &BinaryForm, b: u64, m: u64) -> Ratio<i128> {
        let d = delta.degree() as u32;
        let a = self.curly_a(delta);
        let bpow = (b as i128).pow(d);
        a * Ratio::new(bpow, (m as i128) * (m as i128) * self.w_i[i] as i128)
    }

    /// Largest integer k with k <= Q_i, and whether Q_i is itself an integer.
    pub fn q_i_floor(&self, i: usize, delta: &BinaryForm, b: u64, m: u64) -> (u64, bool) {
        let q2 = self.q_i_squared(i, delta, b, m);
        // floor of sqrt(num/den): k <= Q <=> k^2 * den <= num.
        let num = *q2.numer();
        let den = *q2.denom();
        if num <= 0 {
            return (0, false);
        }
        let mut k = ((num / den) as u128).isqrt() as i128;
        while (k + 1) * (k + 1) * den <= num {
            k += 1;
        }
        while k > 0 && k * k * den > num {
            k -= 1;
        }
        (k as u64, k * k * den == num)
    }
}

/// A fibre of the bundle: the primitive pair, the specialised form, and the
/// factorised values Delta_i(s, t).
#[derive(Clone, Debug)]
pub struct Fibre {
    pub s: i64,
    pub t: i64,
    pub q: TernaryForm,
    pub delta_vals: Vec<(i128, Factorization)>,
}

impl Fibre {
    pub fn new(
        analysis: &BundleAnalysis,
        bundle: &ConicBundle,
        s: i64,
        t: i64,
        ctx: &ArithContext,
    ) -> Result<Self, ArithError> {
        assert_eq!(crate::arith::gcd_i64(s, t), 1, "fibre needs a primitive pair");
        let q = TernaryForm::from_bundle_at(bundle, s as i128, t as i128);
        let mut delta_vals = vec![];
        for f in &analysis.fibres {
            let v = f.delta.eval(s as i128, t as i128);
            delta_vals.push((v, factorize(v, ctx)?));
        }
        Ok(Fibre { s, t, q, delta_vals })
    }
}

/// Detector: for p > D0 with p | Delta(s,t), the unique index i with
/// p | Delta_i(s,t) and the value (F_i(s,t)/p)^{v_p(Delta_i(s,t))}.
pub fn detector(
    analysis: &BundleAnalysis,
    frame: &LocalData,
    fibre: &Fibre,
    p: u64,
) -> Result<(i32, usize), LocalError> {
    debug_assert!(p > frame.d0);
    let mut hit = None;
    for (i, (v, _)) in fibre.delta_vals.iter().enumerate() {
        if v.rem_euclid(p as i128) == 0 {
            if hit.is_some() {
                return Err(LocalError::UniquenessViolated(p));
            }
            hit = Some(i);
        }
    }
    let i = hit.ok_or(LocalError::NoFactorDivisible(p))?;
    let nu = valuation(fibre.delta_vals[i].0.unsigned_abs(), p);
    let fval = analysis.fibres[i].f_form.eval(fibre.s as i128, fibre.t as i128);
    let sym = jacobi64(fval, p);
    if sym == 0 {
        return Err(LocalError::SymbolDegenerate(p));
    }
    Ok((if nu % 2 == 0 { 1 } else { sym }, i))
}

fn primes_of_big(n: &num_bigint::BigInt, what: &str) -> Result<Vec<u64>, FrameError> {
    resultant_prime_divisors(n, what).map_err(FrameError::Resultant)
}

/// Stability depth and frame assembly. D0 collects every prime the paper's
/// "enlarging D0" steps need: 2, content(Delta), pairwise resultants,
/// Res(Delta_i, F_i), Delta_i(1,0), the kernel coordinate norms, the primes
/// of Delta(s0,t0), and 4 c_i Delta_i(s0,t0) for linear factors.
pub fn build_local_frame(
    bundle: &ConicBundle,
    analysis: &BundleAnalysis,
    base_point: (i64, i64),
    bx: Box2D,
    d0_floor: u64,
    ctx: &ArithContext,
) -> Result<LocalData, FrameError> {
    let (s0, t0) = base_point;
    if crate::arith::gcd_i64(s0, t0) != 1 {
        return Err(FrameError::BaseNotPrimitive(s0, t0));
    }
    let delta0 = analysis.delta.eval(s0 as i128, t0 as i128);
    if delta0 == 0 {
        return Err(FrameError::BaseSingular);
    }
    let q0 = TernaryForm::from_bundle_at(bundle, s0 as i128, t0 as i128);
    if !has_rational_point(&q0, ctx)? {
        return Err(FrameError::BaseInsoluble);
    }

    let mut d0 = 2u64.max(d0_floor);
    let mut absorb = |n: &num_bigint::BigInt, what: &str| -> Result<(), FrameError> {
        for p in primes_of_big(n, what)? {
            d0 = d0.max(p);
        }
        Ok(())
    };
    let content = num_bigint::BigInt::from(analysis.content);
    absorb(&content, "content")?;
    absorb(&num_bigint::BigInt::from(delta0), "Delta(s0,t0)")?;
    let fibres = &analysis.fibres;
    for i in 0..fibres.len() {
        for j in i + 1..fibres.len() {
            let r = crate::forms::resultant(&fibres[i].delta, &fibres[j].delta);
            absorb(&r, "Res(Delta_i,Delta_j)")?;
        }
        let r = crate::forms::resultant(&fibres[i].delta, &fibres[i].f_form);
        absorb(&r, "Res(Delta_i,F_i)")?;
        let lead = fibres[i].delta.eval(1, 0);
        if lead != 0 {
            absorb(&num_bigint::BigInt::from(lead), "Delta_i(1,0)")?;
        }
        absorb(&fibres[i].v_ell_norm, "norm(v_ell)")?;
        if fibres[i].delta.degree() == 1 {
            // Delta_i = a s - b t; c_i = F_i(b, a); require 4 c_i Delta_i(s0,t0) | W.
            let a = fibres[i].delta.coeffs[0];
            let b = -fibres[i].delta.coeffs[1];
            let c_i = fibres[i].f_form.eval(b, a);
            let d_i0 = fibres[i].delta.eval(s0 as i128, t0 as i128);
            absorb(&num_bigint::BigInt::from(4 * c_i * d_i0), "4 c_i Delta_i(s0,t0)")?;
        }
    }

    // kappa_p = v_p(Delta(s0,t0)) + 1 for every p <= D0.
    let mut kappa = BTreeMap::new();
    let mut n_exp = BTreeMap::new();
    for p in ctx.primes_up_to(d0) {
        let v = if delta0.rem_euclid(p as i128) == 0 {
            valuation(delta0.unsigned_abs(), p)
        } else {
            0
        };
        kappa.insert(p, v + 1);
        n_exp.insert(p, v + 1);
    }
    // n_p must additionally make 4 c_i Delta_i(s0,t0) | W for linear factors.
    for f in fibres {
        if f.delta.degree() == 1 {
            let a = f.delta.coeffs[0];
            let b = -f.delta.coeffs[1];
            let c_i = f.f_form.eval(b, a);
            let d_i0 = f.delta.eval(s0 as i128, t0 as i128);
            let target = (4 * c_i * d_i0).unsigned_abs();
            for (&p, e) in n_exp.iter_mut() {
                if target % (p as u128) == 0 {
                    *e = (*e).max(valuation(target, p));
                }
            }
        }
    }
    let mut w: u64 = 1;
    for (&p, &e) in &n_exp {
        for _ in 0..e {
            w = w.checked_mul(p).ok_or(FrameError::WTooLarge)?;
        }
    }
    // W_i: the small-prime part of Delta_i(s0,t0).
    let mut w_i = vec![];
    for f in fibres {
        let v = f.delta.eval(s0 as i128, t0 as i128);
        let fac = factorize(v, ctx)?;
        let mut wi = 1u64;
        for &(p, e) in &fac.factors {
            if p <= d0 {
                wi *= p.pow(e);
            }
        }
        w_i.push(wi);
    }

    let frame = LocalData { d0, w, kappa, n_exp, base_point, w_i, bx };
    validate_box(bundle, analysis, &frame)?;
    Ok(frame)
}

/// Box validation: each Delta_i must be sign-definite on the box cone
/// (certified by interval subdivision), real solubility must hold on a dense
/// sample at B = 1000, and linear factors must match the base-point sign.
fn validate_box(
    bundle: &ConicBundle,
    analysis: &BundleAnalysis,
    frame: &LocalData,
) -> Result<(), FrameError> {
    let bx = &frame.bx;
    for f in &analysis.fibres {
        if !interval_definite(
            &f.delta,
            rat_f64(bx.s_min),
            rat_f64(bx.s_max),
            rat_f64(bx.t_min),
            rat_f64(bx.t_max),
            0,
        ) {
            return Err(FrameError::BadBox(format!(
                "Delta_{} may vanish on the box",
                f.index + 1
            )));
        }
    }
    // Dense sampling at B = 1000 for real solubility and the sign condition.
    let b = 1000u64;
    let (s_lo, s_hi) = bx.s_range(b);
    let (t_lo, t_hi) = bx.t_range(b);
    let step = |lo: i64, hi: i64| ((hi - lo) / 40).max(1);
    let (s0, t0) = frame.base_point;
    let mut s = s_lo;
    while s <= s_hi {
        let mut t = t_lo;
        while t <= t_hi {
            let d = analysis.delta.eval(s as i128, t as i128);
            if d == 0 {
                return Err(FrameError::BadBox(format!("Delta({s},{t}) = 0 in the box")));
            }
            let q = TernaryForm::from_bundle_at(bundle, s as i128, t as i128);
            if conic_soluble_at(&q, Place::Real)? == -1 {
                return Err(FrameError::BadBox(format!(
                    "fibre ({s},{t}) not soluble over R"
                )));
            }
            for f in &analysis.fibres {
                if f.delta.degree() == 1 {
                    let here = f.delta.eval(s as i128, t as i128);
                    let base = f.delta.eval(s0 as i128, t0 as i128);
                    if here.signum() * base.signum() <= 0 {
                        return Err(FrameError::BadBox(format!(
                            "sign condition fails for Delta_{} at ({s},{t})",
                            f.index + 1
                        )));
                    }
                }
            }
            t += step(t_lo, t_hi);
        }
        s += step(s_lo, s_hi);
    }
    Ok(())
}

fn rat_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Interval certificate that a form has no zero on [slo,shi] x [tlo,thi].
fn interval_definite(f: &BinaryForm, slo: f64, shi: f64, tlo: f64, thi: f64, depth: u32) -> bool {
    let (lo, hi) = interval_eval(f, slo, shi, tlo, thi);
    if lo > 0.0 || hi < 0.0 {
        return true;
    }
    if depth >= 8 {
        return false;
    }
    let sm = (slo + shi) / 2.0;
    let tm = (tlo + thi) / 2.0;
    interval_definite(f, slo, sm, tlo, tm, depth + 1)
        && interval_definite(f, sm, shi, tlo, tm, depth + 1)
        && interval_definite(f, slo, sm, tm, thi, depth + 1)
        && interval_definite(f, sm, shi, tm, thi, depth + 1)
}

/// Crude interval evaluation of a binary form over a rectangle.
pub fn interval_eval(f: &BinaryForm, slo: f64, shi: f64, tlo: f64, thi: f64) -> (f64, f64) {
    let d = f.degree();
    let pow_range = |lo: f64, hi: f64, e: u32| -> (f64, f64) {
        if e == 0 {
            return (1.0, 1.0);
        }
        let a = lo.powi(e as i32);
        let b = hi.powi(e as i32);
        let (mut mn, mx) = (a.min(b), a.max(b));
        if e % 2 == 0 && lo < 0.0 && hi > 0.0 {
            mn = 0.0;
        }
        (mn, mx)
    };
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (j, &c) in f.coeffs.iter().enumerate() {
        let (smn, smx) = pow_range(slo, shi, (d - j) as u32);
        let (tmn, tmx) = pow_range(tlo, thi, j as u32);
        let cands = [smn * tmn, smn * tmx, smx * tmn, smx * tmx];
        let mn = cands.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let c = c as f64;
        if c >= 0.0 {
            lo += c * mn;
            hi += c * mx;
        } else {
            lo += c * mx;
            hi += c * mn;
        }
    }
    (lo, hi)
}

/// Membership in the congruence set: primitive, inside B*R, congruent to the
/// base point mod W.
pub fn in_curly_b(frame: &LocalData, b: u64, s: i64, t: i64) -> bool {
    crate::arith::gcd_i64(s, t) == 1
        && frame.bx.contains_scaled(b, s, t)
        && (s - frame.base_point.0).rem_euclid(frame.w as i64) == 0
        && (t - frame.base_point.1).rem_euclid(frame.w as i64) == 0
}

/// All members of the congruence set at height scale B.
pub fn enumerate_curly_b(frame: &LocalData, b: u64) -> Vec<(i64, i64)> {
    let w = frame.w as i64;
    let (s_lo, s_hi) = frame.bx.s_range(b);
    let (t_lo, t_hi) = frame.bx.t_range(b);
    let mut out = vec![];
    let first = |lo: i64, r: i64| lo + (r - lo).rem_euclid(w);
    let mut s = first(s_lo, frame.base_point.0);
    while s <= s_hi {
        let mut t = first(t_lo, frame.base_point.1);
        while t <= t_hi {
            if crate::arith::gcd_i64(s, t) == 1 {
                out.push((s, t));
            }
            t += w;
        }
        s += w;
    }
    out
}

/// Is the fibre at (s, t) soluble over R and over Q_p for all p <= d?
pub fn in_sol(bundle: &ConicBundle, s: i64, t: i64, d: u64, ctx: &ArithContext) -> Result<bool, LocalError> {
    let q = TernaryForm::from_bundle_at(bundle, s as i128, t as i128);
    if conic_soluble_at(&q, Place::Real)? == -1 {
        return Ok(false);
    }
    for p in ctx.primes_up_to(d) {
        if conic_soluble_at(&q, Place::Prime(p))? == -1 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{analyze_bundle, bundle_e1, bundle_e2};
    use rand::{Rng, SeedableRng};

    fn ctx() -> ArithContext {
        ArithContext::new(200_000, 200_000)
    }

    #[test]
    fn hilbert_spec_examples() {
        for v in [Place::Real, Place::Prime(2), Place::Prime(3), Place::Prime(7)] {
            assert_eq!(hilbert_symbol(1, 17, v), 1);
            assert_eq!(hilbert_symbol(1, -30, v), 1);
        }
        assert_eq!(hilbert_symbol(-1, -1, Place::Real), -1);
        assert_eq!(hilbert_symbol(-1, -1, Place::Prime(2)), -1);
    }

    #[test]
    fn hilbert_product_formula_and_bilinearity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let c = ctx();
        for _ in 0..400 {
            let a = loop {
                let x = rng.gen_range(-300i128..300);
                if x != 0 {
                    break x;
                }
            };
            let b = loop {
                let x = rng.gen_range(-300i128..300);
                if x != 0 {
                    break x;
                }
            };
            // product over {inf, 2} and odd primes of ab
            let mut prod = hilbert_symbol(a, b, Place::Real) * hilbert_symbol(a, b, Place::Prime(2));
            let f = factorize(a * b, &c).unwrap();
            for &(p, _) in &f.factors {
                if p != 2 {
                    prod *= hilbert_symbol(a, b, Place::Prime(p));
                }
            }
            assert_eq!(prod, 1, "product formula for ({a},{b})");
            // symmetry and bilinearity at a fixed place
            for v in [Place::Real, Place::Prime(2), Place::Prime(3), Place::Prime(5)] {
                assert_eq!(hilbert_symbol(a, b, v), hilbert_symbol(b, a, v));
                let a2 = loop {
                    let x = rng.gen_range(-50i128..50);
                    if x != 0 {
                        break x;
                    }
                };
                assert_eq!(
                    hilbert_symbol(a * a2, b, v),
                    hilbert_symbol(a, b, v) * hilbert_symbol(a2, b, v)
                );
            }
        }
    }

    #[test]
    fn conic_solubility_spec_examples() {
        let q = TernaryForm::diagonal(1, 1, -2);
        assert_eq!(conic_soluble_at(&q, Place::Real).unwrap(), 1);
        let q3 = TernaryForm::diagonal(1, 1, -3);
        assert_eq!(conic_soluble_at(&q3, Place::Prime(3)).unwrap(), -1);
        assert_eq!(conic_soluble_at(&q3, Place::Prime(5)).unwrap(), 1);
        assert!(conic_soluble_at(&TernaryForm::diagonal(0, 1, 1), Place::Real).is_err());
    }

    #[test]
    fn hasse_spec_examples() {
        let c = ctx();
        assert!(has_rational_point(&TernaryForm::diagonal(1, 1, -2), &c).unwrap());
        assert!(!has_rational_point(&TernaryForm::diagonal(1, 1, -3), &c).unwrap());
        assert!(has_rational_point(&TernaryForm::diagonal(2, 3, -5), &c).unwrap());
    }

    #[test]
    fn hasse_agrees_with_holzer_oracle() {
        let c = ctx();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| loop {
                let x = rng.gen_range(-50i128..=50);
                if x != 0 {
                    break x;
                }
            };
            let (a, b, cc) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
            let q = TernaryForm::diagonal(a, b, cc);
            if q.det() == 0 {
                continue;
            }
            let got = has_rational_point(&q, &c).unwrap();
            let want = holzer_soluble(a, b, cc, &c).unwrap();
            assert_eq!(got, want, "({a},{b},{cc})");
        }
    }

    #[test]
    fn hasse_agrees_with_holzer_on_general_forms() {
        let c = ctx();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut tested = 0;
        while tested < 60 {
            let r = |rng: &mut rand_chacha::ChaCha8Rng| rng.gen_range(-4i128..=4);
            let q = TernaryForm::from_poly_coeffs(
                r(&mut rng),
                r(&mut rng),
                r(&mut rng),
                r(&mut rng),
                r(&mut rng),
                r(&mut rng),
            );
            if q.det() == 0 {
                continue;
            }
            tested += 1;
            let (a, b, cc) = q.diagonalize().unwrap();
            let got = has_rational_point(&q, &c).unwrap();
            let want = holzer_soluble(a, b, cc, &c).unwrap();
            assert_eq!(got, want, "form {:?}", q.m);
        }
    }

    #[test]
    fn frame_e1_spec_example() {
        let c = ctx();
        let b = bundle_e1();
        let a = analyze_bundle(&b, &c).unwrap();
        let bx = Box2D::new(
            Rat::new(1, 2),
            Rat::new(3, 2),
            Rat::new(1, 2),
            Rat::new(3, 2),
        );
        let frame = build_local_frame(&b, &a, (1, 1), bx, 2, &c).unwrap();
        assert_eq!(frame.d0, 2);
        assert_eq!(frame.kappa[&2], 3); // v_2(-4) + 1
        assert_eq!(frame.w % 8, 0);
        assert_eq!(frame.w, 16); // n_2 = 4 from 4 c_i Delta_i(1,1) = -16
        assert_eq!(frame.w_i, vec![1, 1]);
    }

    #[test]
    fn frame_e2_spec_example() {
        let c = ctx();
        let b = bundle_e2();
        let a = analyze_bundle(&b, &c).unwrap();
        let bx = Box2D::new(
            Rat::new(1, 2),
            Rat::new(3, 2),
            Rat::new(1, 2),
            Rat::new(7, 2),
        );
        let frame = build_local_frame(&b, &a, (1, 2), bx, 2, &c).unwrap();
        assert_eq!(frame.d0, 3);
        assert_eq!(frame.kappa[&2], 3);
        assert_eq!(frame.kappa[&3], 3);
        assert_eq!(frame.w, 8 * 27);
        assert_eq!(frame.w_i, vec![9]);
    }

    #[test]
    fn frame_rejects_bad_bases() {
        let c = ctx();
        let b = bundle_e1();
        let a = analyze_bundle(&b, &c).unwrap();
        let bx = Box2D::new(
            Rat::new(1, 2),
            Rat::new(3, 2),
            Rat::new(1, 2),
            Rat::new(3, 2),
        );
        // Delta(1, 0) = 0: singular base
        assert!(matches!(
            build_local_frame(&b, &a, (1, 0), bx, 2, &c),
            Err(FrameError::BaseSingular)
        ));
        // (-1, 1): x^2 + y^2 + st z^2 insoluble over R at st = -1 < 0...
        assert!(matches!(
            build_local_frame(&b, &a, (-1, 1), bx, 2, &c),
            Err(FrameError::BaseInsoluble) | Err(FrameError::BadBox(_))
        ));
        assert!(matches!(
            build_local_frame(&b, &a, (2, 2), bx, 2, &c),
            Err(FrameError::BaseNotPrimitive(2, 2))
        ));
    }

    #[test]
    fn detector_spec_examples() {
        let c = ctx();
        let b = bundle_e1();
        let a = analyze_bundle(&b, &c).unwrap();
        let bx = Box2D::new(
            Rat::new(1, 2),
            Rat::new(3, 2),
            Rat::new(1, 2),
            Rat::new(3, 2),
        );
        let frame = build_local_frame(&b, &a, (1, 1), bx, 2, &c).unwrap();

        let f = Fibre::new(&a, &b, 7, 1, &c).unwrap();
        let (val, i) = detector(&a, &frame, &f, 7).unwrap();
        assert_eq!(val, -1);
        let direct = conic_soluble_at(&f.q, Place::Prime(7)).unwrap();
        assert_eq!(val, direct);
        assert_eq!(a.fibres[i].delta.eval(7, 1) % 7, 0);

        let f = Fibre::new(&a, &b, 49, 1, &c).unwrap();
        let (val, _) = detector(&a, &frame, &f, 7).unwrap();
        assert_eq!(val, 1);
        assert_eq!(val, conic_soluble_at(&f.q, Place::Prime(7)).unwrap());

        // E2 at (3, 1): Delta_1 = 11
        let b2 = bundle_e2();
        let a2 = analyze_bundle(&b2, &c).unwrap();
        let bx2 = Box2D::new(
            Rat::new(1, 2),
            Rat::new(3, 2),
            Rat::new(1, 2),
            Rat::new(7, 2),
        );
        let frame2 = build_local_frame(&b2, &a2, (1, 2), bx2, 2, &c).unwrap();
        let f2 = Fibre::new(&a2, &b2, 3, 1, &c).unwrap();
        let (val, _) = detector(&a2, &frame2, &f2, 11).unwrap();
        assert_eq!(val, -1);
        assert_eq!(val, conic_soluble_at(&f2.q, Place::Prime(11)).unwrap());
    }

    #[test]
    fn padic_stability() {
        // p^a || Delta(sigma,tau) and (s,t) = (sigma,tau) mod p^{a+1} => same
        // solubility at p.
        let c = ctx();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for bundle in [bundle_e1(), bundle_e2()] {
            let a = analyze_bundle(&bundle, &c).unwrap();
            for _ in 0..150 {
                let sigma = rng.gen_range(-40i64..=40);
                let tau = rng.gen_range(1i64..=40);
                if crate::arith::gcd_i64(sigma, tau) != 1 {
                    continue;
                }
                let d = a.delta.eval(sigma as i128, tau as i128);
                if d == 0 {
                    continue;
                }
                let p = [2u64, 3, 5, 7][rng.gen_range(0..4)];
                let alpha = if d.rem_euclid(p as i128) == 0 {
                    valuation(d.unsigned_abs(), p)
                } else {
                    0
                };
                let step = (p as i64).pow(alpha + 1);
                let (s, t) = (
                    sigma + step * rng.gen_range(-3i64..=3),
                    tau + step * rng.gen_range(-3i64..=3),
                );
                if a.delta.eval(s as i128, t as i128) == 0 {
                    continue;
                }
                let q1 = TernaryForm::from_bundle_at(&bundle, sigma as i128, tau as i128);
                let q2 = TernaryForm::from_bundle_at(&bundle, s as i128, t as i128);
                assert_eq!(
                    conic_soluble_at(&q1, Place::Prime(p)).unwrap(),
                    conic_soluble_at(&q2, Place::Prime(p)).unwrap(),
                    "stability at p={p}, base ({sigma},{tau}), shifted ({s},{t})"
                );
            }
        }
    }

    #[test]
    fn curly_b_enumeration_consistent() {
        let c = ctx();
        let b = bundle_e1();
        let a = analyze_bundle(&b, &c).unwrap();
        let bx = Box2D::new(
            Rat::new(1, 2),
            Rat::new(3, 2),
            Rat::new(1, 2),
            Rat::new(3, 2),
        );
        let frame = build_local_frame(&b, &a, (1, 1), bx, 2, &c).unwrap();
        let b_height = 200u64;
        let listed = enumerate_curly_b(&frame, b_height);
        assert!(!listed.is_empty());
        for &(s, t) in &listed {
            assert!(in_curly_b(&frame, b_height, s, t));
        }
        // brute force check
        let mut count = 0;
        for s in 90..=310i64 {
            for t in 90..=310i64 {
                if in_curly_b(&frame, b_height, s, t) {
                    count += 1;
                }
            }
        }
        assert_eq!(count, listed.len());
    }
}
