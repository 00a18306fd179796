//! Binary forms over Z, the conic-bundle data, discriminant factorisation,
//! the number-field kernel computation behind (ell_i, F_i), and the
//! non-splitness certificate.

use crate::arith::{jacobi64, ArithContext};
use crate::poly::{self, IntPoly};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("discriminant vanishes identically: the bundle is singular")]
    ZeroDiscriminant,
    #[error("discriminant is not separable: repeated factor {0}")]
    NotSeparable(String),
    #[error("principal minor {{{0}}} has odd degree {1}")]
    OddMinor(String, usize),
    #[error("fibre {0} is a double line (Hessian kernel of dimension {1})")]
    DoubleLine(usize, usize),
    #[error("form of degree {0} exceeds the factoring range")]
    FactorDegree(usize),
    #[error("coefficient overflow while {0}")]
    Overflow(&'static str),
    #[error("fibre {0}: Res(Delta_i, F_i) = 0, the singular fibre degenerates")]
    DegenerateFibre(usize),
}

/// Binary form of declared degree d: `coeffs[j]` multiplies `s^(d-j) t^j`.
/// The zero form has an empty coefficient vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BinaryForm {
    pub coeffs: Vec<i128>,
}

impl BinaryForm {
    pub fn new(coeffs: Vec<i128>) -> Self {
        BinaryForm { coeffs }
    }

    pub fn zero() -> Self {
        BinaryForm { coeffs: vec![] }
    }

    pub fn constant(c: i128) -> Self {
        BinaryForm { coeffs: vec![c] }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Height <f>: maximum |coefficient|.
    pub fn height(&self) -> i128 {
        self.coeffs.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// f(s, t) = sum_j coeffs[j] s^(d-j) t^j, Horner in s with t-grading.
    pub fn eval(&self, s: i128, t: i128) -> i128 {
        if self.coeffs.is_empty() {
            return 0;
        }
        let mut acc = 0i128;
        let mut tp = 1i128;
        for &c in &self.coeffs {
            acc = acc * s + c * tp;
            tp *= t;
        }
        acc
    }

    pub fn content(&self) -> i128 {
        use num_integer::Integer;
        self.coeffs.iter().fold(0i128, |g, &c| g.gcd(&c))
    }

    /// f(x, 1) as a univariate polynomial (ascending coefficients).
    pub fn dehom_s(&self) -> IntPoly {
        IntPoly::new(self.coeffs.iter().rev().cloned().collect())
    }

    /// f(1, y) as a univariate polynomial (ascending coefficients).
    pub fn dehom_t(&self) -> IntPoly {
        IntPoly::new(self.coeffs.clone())
    }

    /// The form f(t, s).
    pub fn swap(&self) -> BinaryForm {
        BinaryForm::new(self.coeffs.iter().rev().cloned().collect())
    }

    pub fn mul(&self, other: &BinaryForm) -> BinaryForm {
        if self.is_zero() || other.is_zero() {
            return BinaryForm::zero();
        }
        let mut out = vec![0i128; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        BinaryForm::new(out)
    }

    pub fn add(&self, other: &BinaryForm) -> BinaryForm {
        assert_eq!(
            self.degree(),
            other.degree(),
            "adding forms of different degrees"
        );
        BinaryForm::new(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn scale(&self, c: i128) -> BinaryForm {
        BinaryForm::new(self.coeffs.iter().map(|&a| a * c).collect())
    }

    /// Multiplicity of t as a factor.
    pub fn t_multiplicity(&self) -> usize {
        self.coeffs.iter().take_while(|&&c| c == 0).count()
    }

    /// Canonicalise the zero form to the empty coefficient vector.
    pub fn normalized(&self) -> BinaryForm {
        if self.is_zero() {
            BinaryForm::zero()
        } else {
            self.clone()
        }
    }
}

/// Homogeneous resultant of two binary forms at their declared degrees:
/// vanishes iff they share a projective root; p | Res captures common
/// projective roots mod p.
pub fn resultant(f: &BinaryForm, g: &BinaryForm) -> BigInt {
    let uf: Vec<i128> = f.coeffs.iter().rev().cloned().collect();
    let ug: Vec<i128> = g.coeffs.iter().rev().cloned().collect();
    poly::resultant_with_degrees(&uf, f.degree(), &ug, g.degree())
}

/// The 3x3 symmetric matrix of binary forms defining Q_{s,t}.
#[derive(Clone, Debug)]
pub struct ConicBundle {
    /// Entries m[i][j] = f_ij, i <= j stored fully (symmetric).
    pub m: [[BinaryForm; 3]; 3],
}

impl ConicBundle {
    pub fn from_entries(
        f11: BinaryForm,
        f12: BinaryForm,
        f13: BinaryForm,
        f22: BinaryForm,
        f23: BinaryForm,
        f33: BinaryForm,
    ) -> Self {
        let m = [
            [f11.clone(), f12.clone(), f13.clone()],
            [f12, f22.clone(), f23.clone()],
            [f13, f23, f33],
        ];
        ConicBundle { m }
    }

    pub fn diagonal(a: BinaryForm, b: BinaryForm, c: BinaryForm) -> Self {
        let z = BinaryForm::zero;
        Self::from_entries(a, z(), z(), b, z(), c)
    }

    pub fn is_diagonal(&self) -> bool {
        self.m[0][1].is_zero() && self.m[0][2].is_zero() && self.m[1][2].is_zero()
    }

    /// Determinant of the submatrix indexed by `idx` (principal minor).
    fn principal_minor(&self, idx: &[usize]) -> BinaryForm {
        match idx.len() {
            1 => self.m[idx[0]][idx[0]].clone(),
            2 => {
                let (i, j) = (idx[0], idx[1]);
                form_sub(
                    &self.m[i][i].mul(&self.m[j][j]),
                    &self.m[i][j].mul(&self.m[i][j]),
                )
            }
            3 => {
                let m = &self.m;
                let mut acc = m[0][0].mul(&form_sub(
                    &m[1][1].mul(&m[2][2]),
                    &m[1][2].mul(&m[1][2]),
                ));
                acc = form_sub(
                    &acc,
                    &m[0][1].mul(&form_sub(
                        &m[0][1].mul(&m[2][2]),
                        &m[1][2].mul(&m[0][2]),
                    )),
                );
                form_add_any(
                    &acc,
                    &m[0][2].mul(&form_sub(
                        &m[0][1].mul(&m[1][2]),
                        &m[1][1].mul(&m[0][2]),
                    )),
                )
            }
            _ => unreachable!(),
        }
    }

    /// Check every principal minor has even degree, naming the offender.
    pub fn validate_even_minors(&self) -> Result<(), BundleError> {
        let subsets: [&[usize]; 7] = [
            &[0],
            &[1],
            &[2],
            &[0, 1],
            &[0, 2],
            &[1, 2],
            &[0, 1, 2],
        ];
        for idx in subsets {
            let minor = self.principal_minor(idx).normalized();
            if !minor.is_zero() {
                let d = true_degree(&minor);
                if d % 2 != 0 {
                    let name: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
                    return Err(BundleError::OddMinor(name.join(","), d));
                }
            }
        }
        Ok(())
    }

    /// The six coefficients of the specialised ternary form at (s, t):
    /// (a11, a22, a33, a12, a13, a23) with Q = sum a_ii x_i^2 + 2 sum a_ij x_i x_j.
    pub fn specialise(&self, s: i128, t: i128) -> [i128; 6] {
        [
            self.m[0][0].eval(s, t),
            self.m[1][1].eval(s, t),
            self.m[2][2].eval(s, t),
            self.m[0][1].eval(s, t),
            self.m[0][2].eval(s, t),
            self.m[1][2].eval(s, t),
        ]
    }
}

/// True homogeneous degree ignoring declared padding: the largest total degree
/// of a monomial with nonzero coefficient (forms are homogeneous, so this is
/// just the declared degree once fully-zero tails are dropped).
fn true_degree(f: &BinaryForm) -> usize {
    f.degree()
}

fn form_sub(a: &BinaryForm, b: &BinaryForm) -> BinaryForm {
    form_add_any(a, &b.scale(-1))
}

/// Add forms, treating zero forms as degree-compatible with anything.
fn form_add_any(a: &BinaryForm, b: &BinaryForm) -> BinaryForm {
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    assert_eq!(a.degree(), b.degree(), "form degree mismatch in sum");
    a.add(b)
}

/// Delta(s,t) = (1/2) det(Hessian of Q_{s,t}) = 4 det(f_ij); asserts
/// separability. A single factor of t (a singular fibre at infinity) is
/// accepted and handled through the swapped chart downstream; t^2 | Delta is
/// rejected as non-separable.
pub fn hessian_discriminant(bundle: &ConicBundle) -> Result<BinaryForm, BundleError> {
    let det = bundle.principal_minor(&[0, 1, 2]);
    let delta = det.scale(4);
    if delta.is_zero() {
        return Err(BundleError::ZeroDiscriminant);
    }
    if delta.t_multiplicity() >= 2 {
        return Err(BundleError::NotSeparable("t^2".into()));
    }
    let dehom = delta.dehom_s();
    if !dehom.is_zero() && !poly::is_squarefree(&dehom) {
        return Err(BundleError::NotSeparable(format!(
            "gcd(Delta(x,1), Delta'(x,1)) is non-constant for Delta = {:?}",
            delta.coeffs
        )));
    }
    Ok(delta)
}

/// Factor a nonzero binary form over Q into primitive irreducible factors with
/// positive leading s-coefficient (positive t-coefficient for the factor t),
/// returning (content, [(factor, multiplicity)]).
pub fn factor_form(f: &BinaryForm) -> Result<(i128, Vec<(BinaryForm, u32)>), BundleError> {
    assert!(!f.is_zero(), "cannot factor the zero form");
    let mut content = f.content();
    if content == 0 {
        content = 1;
    }
    // Sign: normalise so the first nonzero coefficient of the primitive part
    // is positive.
    let first = *f.coeffs.iter().find(|&&c| c != 0).unwrap();
    if first < 0 {
        content = -content;
    }
    let prim = BinaryForm::new(f.coeffs.iter().map(|&c| c / content).collect());

    let mut factors: Vec<(BinaryForm, u32)> = vec![];
    let tmult = prim.t_multiplicity();
    if tmult > 0 {
        factors.push((BinaryForm::new(vec![0, 1]), tmult as u32));
    }
    let u = prim.dehom_s(); // degree = deg(prim) - tmult
    let mut rem = u.clone();
    let mut linear: Vec<(IntPoly, u32)> = vec![];
    for (num, den) in poly::rational_roots(&u) {
        // root num/den -> factor (den x - num), primitive.
        let lf = IntPoly::new(vec![-num, den]);
        let mut mult = 0;
        while let Some(q) = poly::div_exact(&rem, &lf) {
            rem = q;
            mult += 1;
        }
        if mult > 0 {
            linear.push((lf, mult));
        }
    }
    // Remaining factor: degree 0, irreducible deg 2/3, or a quartic that may
    // split into two irreducible quadratics.
    let mut higher: Vec<(IntPoly, u32)> = vec![];
    match rem.degree().unwrap_or(0) {
        0 => {}
        2 | 3 => higher.push((rem.clone(), 1)),
        4 => match split_quartic(&rem) {
            Some((a, b)) => {
                if a == b {
                    higher.push((a, 2));
                } else {
                    higher.push((a, 1));
                    higher.push((b, 1));
                }
            }
            None => higher.push((rem.clone(), 1)),
        },
        d => return Err(BundleError::FactorDegree(d)),
    }
    // Rehomogenise to total degree matching each univariate factor's degree.
    let mut content_extra = 1i128;
    for (lf, mult) in linear.into_iter().chain(higher) {
        let (bf, c) = homogenise_normalised(&lf);
        for _ in 0..mult {
            content_extra *= c;
        }
        factors.push((bf, mult));
    }
    // rem's leading/content leftovers fold into the content.
    let content = content * content_extra;
    // Sanity: product reproduces f exactly.
    let mut prod = BinaryForm::constant(1);
    for (g, e) in &factors {
        for _ in 0..*e {
            prod = prod.mul(g);
        }
    }
    let rebuilt = prod.scale(content);
    debug_assert_eq!(rebuilt, *f, "factorisation does not reproduce the form");
    if rebuilt != *f {
        return Err(BundleError::Overflow("rebuilding factored form"));
    }
    factors.sort_by_key(|(g, _)| (g.degree(), g.coeffs.clone()));
    Ok((content, factors))
}

/// Homogenise an ascending univariate u(x) of degree d to u(s/t) t^d,
/// normalised primitive with positive lead; returns (form, removed content).
fn homogenise_normalised(u: &IntPoly) -> (BinaryForm, i128) {
    let d = u.degree().expect("nonzero");
    let coeffs: Vec<i128> = (0..=d).map(|j| u.coeffs[d - j]).collect();
    let f = BinaryForm::new(coeffs);
    let mut c = f.content().max(1);
    let first = *f.coeffs.iter().find(|&&x| x != 0).unwrap();
    if first < 0 {
        c = -c;
    }
    (
        BinaryForm::new(f.coeffs.iter().map(|&x| x / c).collect()),
        c,
    )
}

/// Try to split a primitive quartic with no rational roots into two integer
/// quadratics; `None` means irreducible.
fn split_quartic(u: &IntPoly) -> Option<(IntPoly, IntPoly)> {
    let a = u.coeffs[4];
    let e = u.coeffs[0];
    let divisors = |n: i128| -> Vec<i128> {
        let m = n.unsigned_abs();
        let mut out = vec![];
        let mut d = 1u128;
        while d * d <= m {
            if m % d == 0 {
                out.push(d as i128);
                out.push((m / d) as i128);
            }
            d += 1;
        }
        let mut all: Vec<i128> = out.iter().flat_map(|&x| [x, -x]).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    for alpha in divisors(a) {
        if a % alpha != 0 {
            continue;
        }
        let delta = a / alpha;
        for gamma in divisors(e) {
            if e % gamma != 0 {
                continue;
            }
            let zeta = e / gamma;
            // Solve alpha*eps + beta*delta = b; beta*zeta + eps*gamma = d.
            let b = u.coeffs[3];
            let dd = u.coeffs[1];
            let det = alpha * zeta - delta * gamma;
            let (beta, eps);
            if det != 0 {
                let bn = b * zeta - dd * delta;
                let en = dd * alpha - b * gamma;
                if bn % det != 0 || en % det != 0 {
                    continue;
                }
                beta = bn / det;
                eps = en / det;
            } else {
                // Degenerate: scan small beta.
                let mut found = None;
                for cand in -64..=64i128 {
                    if delta == 0 && alpha == 0 {
                        break;
                    }
                    let rest = b - cand * delta;
                    if alpha != 0 && rest % alpha == 0 {
                        let ec = rest / alpha;
                        if cand * zeta + ec * gamma == dd {
                            found = Some((cand, ec));
                            break;
                        }
                    }
                }
                match found {
                    Some((x, y)) => {
                        beta = x;
                        eps = y;
                    }
                    None => continue,
                }
            }
            if alpha * zeta + beta * eps + gamma * delta == u.coeffs[2] {
                let p = IntPoly::new(vec![gamma, beta, alpha]);
                let q = IntPoly::new(vec![zeta, eps, delta]);
                if p.degree() == Some(2) && q.degree() == Some(2) {
                    return Some((p, q));
                }
            }
        }
    }
    None
}

/// Element of Q[x]/(minpoly) in the power basis, rational coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct NfElem {
    pub coords: Vec<BigRational>,
}

/// Arithmetic in Q[x]/(m) for a monic integer m of degree <= 3.
pub struct NumberField {
    pub minpoly: IntPoly,
}

impl NumberField {
    pub fn new(minpoly: IntPoly) -> Self {
        assert_eq!(minpoly.leading(), 1, "minimal polynomial must be monic");
        NumberField { minpoly }
    }

    pub fn degree(&self) -> usize {
        self.minpoly.degree().unwrap()
    }

    pub fn zero(&self) -> NfElem {
        NfElem { coords: vec![BigRational::zero(); self.degree()] }
    }

    pub fn from_rational(&self, r: BigRational) -> NfElem {
        let mut z = self.zero();
        z.coords[0] = r;
        z
    }

    pub fn theta(&self) -> NfElem {
        let mut z = self.zero();
        if self.degree() > 1 {
            z.coords[1] = BigRational::one();
        } else {
            // degree-1 field: theta is the rational root of the minpoly.
            z.coords[0] = -BigRational::from(BigInt::from(self.minpoly.coeffs[0]));
        }
        z
    }

    pub fn is_zero(&self, a: &NfElem) -> bool {
        a.coords.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, a: &NfElem, b: &NfElem) -> NfElem {
        NfElem {
            coords: a
                .coords
                .iter()
                .zip(&b.coords)
                .map(|(x, y)| x + y)
                .collect(),
        }
    }

    pub fn sub(&self, a: &NfElem, b: &NfElem) -> NfElem {
        NfElem {
            coords: a
                .coords
                .iter()
                .zip(&b.coords)
                .map(|(x, y)| x - y)
                .collect(),
        }
    }

    pub fn mul(&self, a: &NfElem, b: &NfElem) -> NfElem {
        let n = self.degree();
        let mut prod = vec![BigRational::zero(); 2 * n];
        for (i, x) in a.coords.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.coords.iter().enumerate() {
                prod[i + j] += x * y;
            }
        }
        // Reduce modulo the monic minpoly.
        for k in (n..2 * n).rev() {
            if prod[k].is_zero() {
                continue;
            }
            let c = prod[k].clone();
            prod[k] = BigRational::zero();
            for j in 0..n {
                let m = BigRational::from(BigInt::from(self.minpoly.coeffs[j]));
                prod[k - n + j] -= &c * m;
            }
        }
        NfElem { coords: prod[..n].to_vec() }
    }

    pub fn scale(&self, a: &NfElem, r: &BigRational) -> NfElem {
        NfElem { coords: a.coords.iter().map(|c| c * r).collect() }
    }

    /// Inverse via extended Euclid in Q[x]; panics on zero (minpoly is
    /// irreducible in use, so every nonzero element is a unit).
    pub fn inv(&self, a: &NfElem) -> NfElem {
        assert!(!self.is_zero(a), "inverting zero in number field");
        let to_poly = |e: &NfElem| -> Vec<BigRational> {
            let mut v = e.coords.clone();
            while v.last().map_or(false, |c| c.is_zero()) {
                v.pop();
            }
            v
        };
        let m: Vec<BigRational> = self
            .minpoly
            .coeffs
            .iter()
            .map(|&c| BigRational::from(BigInt::from(c)))
            .collect();
        // Extended Euclid: r0 = minpoly, r1 = a.
        let (mut r0, mut r1) = (m, to_poly(a));
        let zero_poly: Vec<BigRational> = vec![];
        let one_poly = vec![BigRational::one()];
        let (mut t0, mut t1) = (zero_poly, one_poly);
        while !r1.is_empty() {
            let (q, rem) = poly_divmod(&r0, &r1);
            let tnew = poly_sub(&t0, &poly_mul(&q, &t1));
            r0 = r1;
            r1 = rem;
            t0 = t1;
            t1 = tnew;
        }
        // r0 is a nonzero constant gcd.
        assert_eq!(r0.len(), 1, "element not invertible: minpoly reducible?");
        let c = r0[0].clone();
        let mut coords = vec![BigRational::zero(); self.degree()];
        for (i, v) in t0.iter().enumerate() {
            coords[i] = v / &c;
        }
        NfElem { coords }
    }

    /// Evaluate a binary form at (theta_hat / c, 1), where theta_hat is the
    /// field generator and c is the original leading coefficient.
    pub fn eval_form_at_root(&self, f: &BinaryForm, c: i128) -> NfElem {
        // f(theta, 1) with theta = theta_hat / c.
        let th = self.theta();
        let cinv = BigRational::new(BigInt::one(), BigInt::from(c));
        let theta = self.scale(&th, &cinv);
        let mut acc = self.zero();
        for &coef in &f.coeffs {
            acc = self.mul(&acc, &theta);
            let cc = self.from_rational(BigRational::from(BigInt::from(coef)));
            acc = self.add(&acc, &cc);
        }
        acc
    }
}

fn poly_divmod(a: &[BigRational], b: &[BigRational]) -> (Vec<BigRational>, Vec<BigRational>) {
    let mut rem = a.to_vec();
    let db = b.len() - 1;
    if rem.len() < b.len() {
        return (vec![], rem);
    }
    let mut quo = vec![BigRational::zero(); rem.len() - db];
    let lead = b[db].clone();
    for k in (0..quo.len()).rev() {
        let c = &rem[k + db] / &lead;
        if !c.is_zero() {
            for j in 0..=db {
                let t = &c * &b[j];
                rem[k + j] -= t;
            }
        }
        quo[k] = c;
    }
    while rem.last().map_or(false, |c| c.is_zero()) {
        rem.pop();
    }
    (quo, rem)
}

fn poly_mul(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_sub(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let n = a.len().max(b.len());
    let mut out = vec![BigRational::zero(); n];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] -= y;
    }
    while out.last().map_or(false, |c| c.is_zero()) {
        out.pop();
    }
    out
}

/// Which affine chart of P^1 a fibre's root theta lives on. The factor
/// Delta_i = t (fibre at infinity) is analysed through the swapped chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Chart {
    Affine,
    Swapped,
}

/// Projective root representative (sigma : tau) of a form modulo a prime
/// power: `Affine(xi)` is [xi : 1] (the congruence s = xi t), `Infinity(eta)`
/// is [1 : eta] with p | eta (the congruence t = eta s).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProjRoot {
    Affine(u64),
    Infinity(u64),
}

impl ProjRoot {
    pub fn rep(&self) -> (i128, i128) {
        match *self {
            ProjRoot::Affine(xi) => (xi as i128, 1),
            ProjRoot::Infinity(eta) => (1, eta as i128),
        }
    }
}

/// One witness that F_i(theta_i, 1) is not a square in Q(theta_i): a prime
/// with a root of Delta_i at which the Jacobi symbol of F_i is -1.
#[derive(Clone, Debug, Serialize)]
pub struct NonsplitWitness {
    pub prime: u64,
    pub root: (i64, i64),
    pub symbol: i32,
}

#[derive(Clone, Debug, Serialize)]
pub enum NonsplitStatus {
    Certified(Vec<NonsplitWitness>),
    Inconclusive { primes_tried: usize },
}

/// Everything the counting layers need to know about one singular fibre.
#[derive(Clone, Debug)]
pub struct FibreAnalysis {
    pub index: usize,
    pub delta: BinaryForm,
    pub chart: Chart,
    /// Monic minimal polynomial of the scaled root generating Q(theta_i).
    pub theta_min_poly: IntPoly,
    pub ell: usize,
    /// Kernel vector over Z[theta_hat], one coordinate vector per x_i.
    pub v: [Vec<i128>; 3],
    /// |Norm(v_ell)|, one of the D0 ingredients.
    pub v_ell_norm: BigInt,
    pub f_form: BinaryForm,
    pub nonsplit: NonsplitStatus,
}

/// Kernel of a symmetric 3x3 matrix over the field; errors with the kernel
/// dimension if it is not 1.
fn kernel_of_matrix(
    nf: &NumberField,
    mat: &[[NfElem; 3]; 3],
) -> Result<[NfElem; 3], usize> {
    // Gaussian elimination, tracking column permutation implicitly.
    let mut rows: Vec<[NfElem; 3]> = mat.to_vec();
    let mut pivots: Vec<(usize, usize)> = vec![]; // (row, col)
    let mut used_cols = [false; 3];
    for r in 0..3 {
        // Find a pivot in row r among unused columns.
        let mut pivot_col = None;
        for c in 0..3 {
            if !used_cols[c] && !nf.is_zero(&rows[r][c]) {
                pivot_col = Some(c);
                break;
            }
        }
        let Some(pc) = pivot_col else { continue };
        used_cols[pc] = true;
        pivots.push((r, pc));
        let inv = nf.inv(&rows[r][pc]);
        for rr in 0..3 {
            if rr == r || nf.is_zero(&rows[rr][pc]) {
                continue;
            }
            let factor = nf.mul(&rows[rr][pc], &inv);
            for c in 0..3 {
                let t = nf.mul(&factor, &rows[r][c]);
                rows[rr][c] = nf.sub(&rows[rr][c], &t);
            }
        }
    }
    let rank = pivots.len();
    if rank != 2 {
        return Err(3 - rank);
    }
    // One free column: build the kernel vector.
    let free = (0..3).find(|&c| !used_cols[c]).unwrap();
    let mut v = [nf.zero(), nf.zero(), nf.zero()];
    v[free] = nf.from_rational(BigRational::one());
    for &(r, pc) in &pivots {
        // row r: rows[r][pc] * v[pc] + rows[r][free] * v[free] = 0
        let inv = nf.inv(&rows[r][pc]);
        let val = nf.mul(&rows[r][free], &inv);
        v[pc] = nf.sub(&nf.zero(), &val);
    }
    Ok(v)
}

/// Monic minimal polynomial for c * theta where theta is a root of the
/// dehomogenised irreducible factor (leading coefficient c).
fn scaled_minpoly(dehom: &IntPoly) -> IntPoly {
    let d = dehom.degree().unwrap();
    let c = dehom.leading();
    // dehom = sum a_j x^(d-j) with a_0 = c (descending index j).
    // minpoly(x) = x^d + sum_{j>=1} a_j c^(j-1) x^(d-j).
    let mut coeffs = vec![0i128; d + 1];
    coeffs[d] = 1;
    for j in 1..=d {
        let a_j = dehom.coeffs[d - j];
        coeffs[d - j] = a_j * c.pow((j - 1) as u32);
    }
    IntPoly::new(coeffs)
}

/// Solve Hessian(theta_i, 1) v = 0 in Q(theta_i)^3, clear denominators, and
/// fix ell_i as the smallest index with v_ell != 0.
pub fn singular_kernel(
    bundle: &ConicBundle,
    index: usize,
    delta_i: &BinaryForm,
) -> Result<(Chart, IntPoly, usize, [Vec<i128>; 3], BigInt), BundleError> {
    // The factor t is handled in the swapped chart where it reads s.
    let (chart, work_bundle, work_delta) = if delta_i.degree() == 1 && delta_i.coeffs[0] == 0 {
        let swapped = ConicBundle {
            m: [
                [
                    bundle.m[0][0].swap(),
                    bundle.m[0][1].swap(),
                    bundle.m[0][2].swap(),
                ],
                [
                    bundle.m[1][0].swap(),
                    bundle.m[1][1].swap(),
                    bundle.m[1][2].swap(),
                ],
                [
                    bundle.m[2][0].swap(),
                    bundle.m[2][1].swap(),
                    bundle.m[2][2].swap(),
                ],
            ],
        };
        (Chart::Swapped, swapped, delta_i.swap())
    } else {
        (Chart::Affine, bundle.clone(), delta_i.clone())
    };
    let dehom = work_delta.dehom_s();
    let c = dehom.leading();
    let minpoly = scaled_minpoly(&dehom);
    let nf = NumberField::new(minpoly.clone());
    let mut mat: [[NfElem; 3]; 3] = std::array::from_fn(|_| {
        std::array::from_fn(|_| nf.zero())
    });
    for i in 0..3 {
        for j in 0..3 {
            mat[i][j] = nf.eval_form_at_root(&work_bundle.m[i][j], c);
        }
    }
    let v = kernel_of_matrix(&nf, &mat)
        .map_err(|dim| BundleError::DoubleLine(index, dim))?;
    // Clear denominators to land in Z[theta_hat]^3.
    let mut lcm = BigInt::one();
    for e in &v {
        for c in &e.coords {
            let den = c.denom();
            lcm = num_integer::Integer::lcm(&lcm, den);
        }
    }
    let mut iv: [Vec<i128>; 3] = std::array::from_fn(|_| vec![]);
    let mut gcd_all = BigInt::zero();
    for (k, e) in v.iter().enumerate() {
        let coords: Vec<BigInt> = e
            .coords
            .iter()
            .map(|c| c.numer() * (&lcm / c.denom()))
            .collect();
        for c in &coords {
            gcd_all = num_integer::Integer::gcd(&gcd_all, c);
        }
        iv[k] = coords
            .iter()
            .map(|c| c.to_i128().ok_or(BundleError::Overflow("kernel vector")))
            .collect::<Result<_, _>>()?;
    }
    if !gcd_all.is_zero() && gcd_all > BigInt::one() {
        let g = gcd_all.to_i128().ok_or(BundleError::Overflow("kernel gcd"))?;
        for e in iv.iter_mut() {
            for c in e.iter_mut() {
                *c /= g;
            }
        }
    }
    let ell = (0..3)
        .find(|&k| iv[k].iter().any(|&c| c != 0))
        .expect("kernel vector is nonzero")
        + 1;
    // Norm of v_ell: resultant of the minpoly with the coordinate polynomial.
    let vpoly = IntPoly::new(iv[ell - 1].clone());
    let norm = poly::resultant(&minpoly, &vpoly);
    Ok((chart, minpoly, ell, iv, norm))
}

/// Discriminant of the binary quadratic form Q_{s,t}(x_ell = 0): with
/// {j,k} the complementary indices and the cross coefficient 2 f_jk,
/// F = (2 f_jk)^2 - 4 f_jj f_kk.
pub fn construct_f(bundle: &ConicBundle, ell: usize) -> BinaryForm {
    assert!((1..=3).contains(&ell));
    let rest: Vec<usize> = (0..3).filter(|&i| i != ell - 1).collect();
    let (j, k) = (rest[0], rest[1]);
    let cross = bundle.m[j][k].scale(2);
    let sq = cross.mul(&cross);
    let prod = bundle.m[j][j].mul(&bundle.m[k][k]).scale(4);
    form_sub(&sq, &prod).normalized()
}

/// Roots of a form mod a prime, projectively.
pub fn projective_roots_mod_p(f: &BinaryForm, p: u64) -> Vec<ProjRoot> {
    let mut out: Vec<ProjRoot> = crate::arith::roots_mod_p(&f.dehom_s().reduce_mod(p), p)
        .into_iter()
        .map(ProjRoot::Affine)
        .collect();
    // Infinity-side roots: [1 : eta] with p | eta and f(1, eta) = 0 mod p,
    // i.e. eta = 0 and p | f(1, 0).
    if f.dehom_t().eval_mod(0, p) == 0 {
        out.push(ProjRoot::Infinity(0));
    }
    out
}

/// Search primes p > d0 for roots xi of Delta_i with (F_i(xi)/p) = -1; any
/// hit certifies the fibre non-split. Split fibres never produce a witness,
/// so exhaustion of the budget is reported as inconclusive.
pub fn nonsplit_certificate(
    delta: &BinaryForm,
    f_form: &BinaryForm,
    d0: u64,
    prime_budget: usize,
    ctx: &ArithContext,
) -> NonsplitStatus {
    let mut witnesses = vec![];
    let mut tried = 0;
    for &p in &ctx.primes {
        let p = p as u64;
        if p <= d0 || p == 2 {
            continue;
        }
        if tried >= prime_budget {
            break;
        }
        tried += 1;
        for root in projective_roots_mod_p(delta, p) {
            let (sig, tau) = root.rep();
            let val = f_form.eval(sig, tau);
            if val % p as i128 == 0 {
                continue; // p | Res(Delta_i, F_i): not a usable witness
            }
            if jacobi64(val, p) == -1 {
                witnesses.push(NonsplitWitness {
                    prime: p,
                    root: (sig as i64, tau as i64),
                    symbol: -1,
                });
                break;
            }
        }
        if witnesses.len() >= 3 {
            return NonsplitStatus::Certified(witnesses);
        }
    }
    if witnesses.is_empty() {
        NonsplitStatus::Inconclusive { primes_tried: tried }
    } else {
        NonsplitStatus::Certified(witnesses)
    }
}

/// Full fibre analysis of a validated bundle.
#[derive(Debug)]
pub struct BundleAnalysis {
    pub delta: BinaryForm,
    pub content: i128,
    pub fibres: Vec<FibreAnalysis>,
    /// Rank r(pi) = sum of deg(Delta_i).
    pub rank: usize,
}

impl BundleAnalysis {
    /// Number of certified non-split fibres (the n in (log B)^{n/2}).
    pub fn n_nonsplit(&self) -> usize {
        self.fibres
            .iter()
            .filter(|f| matches!(f.nonsplit, NonsplitStatus::Certified(_)))
            .count()
    }
}

pub const DEFAULT_CERT_BUDGET: usize = 500;

/// Validate the bundle and analyse every singular fibre.
pub fn analyze_bundle(
    bundle: &ConicBundle,
    ctx: &ArithContext,
) -> Result<BundleAnalysis, BundleError> {
    bundle.validate_even_minors()?;
    let delta = hessian_discriminant(bundle)?;
    let (content, factors) = factor_form(&delta)?;
    let mut fibres = vec![];
    let mut rank = 0;
    for (idx, (fac, mult)) in factors.iter().enumerate() {
        assert_eq!(*mult, 1, "separable discriminant has squarefree factors");
        rank += fac.degree();
        let (chart, minpoly, ell, v, norm) = singular_kernel(bundle, idx, fac)?;
        let f_form = construct_f(bundle, ell);
        if f_form.is_zero() || !resultant(fac, &f_form).abs().is_positive() {
            return Err(BundleError::DegenerateFibre(idx));
        }
        assert_eq!(f_form.degree() % 2, 0, "F_i must have even degree");
        // d0 ingredient primes are assembled by the local frame; here we only
        // need a small-prime floor for the certificate search.
        let d0_floor = 2u64;
        let nonsplit =
            nonsplit_certificate(fac, &f_form, d0_floor, DEFAULT_CERT_BUDGET, ctx);
        fibres.push(FibreAnalysis {
            index: idx,
            delta: fac.clone(),
            chart,
            theta_min_poly: minpoly,
            ell,
            v,
            v_ell_norm: norm.abs(),
            f_form,
            nonsplit,
        });
    }
    Ok(BundleAnalysis { delta, content, fibres, rank })
}

/// The two reference bundles.
pub fn bundle_e1() -> ConicBundle {
    // x^2 + y^2 - st z^2
    ConicBundle::diagonal(
        BinaryForm::constant(1),
        BinaryForm::constant(1),
        BinaryForm::new(vec![0, -1, 0]),
    )
}

pub fn bundle_e2() -> ConicBundle {
    // x^2 + y^2 - (s^2 + 2t^2) z^2
    ConicBundle::diagonal(
        BinaryForm::constant(1),
        BinaryForm::constant(1),
        BinaryForm::new(vec![-1, 0, -2]),
    )
}
