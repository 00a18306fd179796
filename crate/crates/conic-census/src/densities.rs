//! The multiplicative root-counting functions tau_i and rho_i, their prime
//! power structure, the derived densities sigma_i and tau#_i, Mertens-type
//! partial sums, and the planar-conic density rho_3.
//!
//! Roots are counted projectively: a root of Delta_i mod q is a class
//! [sigma : tau] in P^1(Z/q) with Delta_i(sigma, tau) = 0. For factors with
//! Delta_i(1,0) != 0 and q coprime to it this is the usual affine count;
//! the factor t contributes the single class [1 : 0]. This keeps every
//! identity exact for bundles whose fibre at infinity is singular.

use crate::arith::{factorize, hensel_roots, jacobi64, ArithContext, ArithError};
use crate::forms::{BinaryForm, ProjRoot};
use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};

pub type Rat128 = Ratio<i128>;

/// Projective roots of a binary form modulo p^k.
pub fn projective_roots_mod_pk(
    delta: &BinaryForm,
    p: u64,
    k: u32,
) -> Result<Vec<ProjRoot>, ArithError> {
    let modulus = p.pow(k);
    let mut out = vec![];
    let aff = delta.dehom_s();
    if !aff.reduce_mod(p).is_empty() {
        for r in hensel_roots(&aff, p, k)? {
            out.push(ProjRoot::Affine(r.residue));
        }
    } else {
        // Delta(x, 1) = 0 mod p identically: every affine class is a root.
        // Unreachable for irreducible primitive factors with p > height.
        for xi in 0..modulus {
            out.push(ProjRoot::Affine(xi));
        }
    }
    let inf = delta.dehom_t();
    if !inf.reduce_mod(p).is_empty() {
        for r in hensel_roots(&inf, p, k)? {
            if r.residue % p == 0 {
                out.push(ProjRoot::Infinity(r.residue));
            }
        }
    }
    Ok(out)
}

/// tau_i(p^k): number of projective roots of Delta_i mod p^k.
pub fn tau_prime_power(delta: &BinaryForm, p: u64, k: u32) -> Result<u64, ArithError> {
    Ok(projective_roots_mod_pk(delta, p, k)?.len() as u64)
}

/// rho_i(p^k): roots weighted by the Jacobi symbol of F_i at the root.
pub fn rho_prime_power(
    delta: &BinaryForm,
    f_form: &BinaryForm,
    p: u64,
    k: u32,
) -> Result<i64, ArithError> {
    let modulus = p.pow(k);
    let mut acc = 0i64;
    for root in projective_roots_mod_pk(delta, p, k)? {
        let (sig, tau) = root.rep();
        acc += jacobi64(f_form.eval(sig, tau), modulus) as i64;
    }
    Ok(acc)
}

/// tau_i(d): multiplicative over the prime powers of d, vanishing as soon as
/// a prime factor is <= d0. tau_i(1) = 1.
pub fn tau_i(delta: &BinaryForm, d: u64, d0: u64, ctx: &ArithContext) -> Result<u64, ArithError> {
    if d == 1 {
        return Ok(1);
    }
    let f = factorize(d as i128, ctx)?;
    let mut acc = 1u64;
    for &(p, e) in &f.factors {
        if p <= d0 {
            return Ok(0);
        }
        acc *= tau_prime_power(delta, p, e)?;
        if acc == 0 {
            return Ok(0);
        }
    }
    Ok(acc)
}

/// rho_i(d): multiplicative companion weighted by (F_i(root)/d).
pub fn rho_i(
    delta: &BinaryForm,
    f_form: &BinaryForm,
    d: u64,
    d0: u64,
    ctx: &ArithContext,
) -> Result<i64, ArithError> {
    if d == 1 {
        return Ok(1);
    }
    let f = factorize(d as i128, ctx)?;
    let mut acc = 1i64;
    for &(p, e) in &f.factors {
        if p <= d0 {
            return Ok(0);
        }
        acc *= rho_prime_power(delta, f_form, p, e)?;
        if acc == 0 {
            return Ok(0);
        }
    }
    Ok(acc)
}

/// Verify rho_i(p^nu) = rho_i(p) for odd nu and tau_i(p) for even nu, for all
/// nu <= nu_max, by direct prime-power computation on both sides.
pub fn check_hensel_pattern(
    delta: &BinaryForm,
    f_form: &BinaryForm,
    p: u64,
    nu_max: u32,
) -> Result<bool, ArithError> {
    let rho1 = rho_prime_power(delta, f_form, p, 1)?;
    let tau1 = tau_prime_power(delta, p, 1)? as i64;
    for nu in 1..=nu_max {
        if (p as u128).pow(nu) > u64::MAX as u128 {
            break;
        }
        let got = rho_prime_power(delta, f_form, p, nu)?;
        let want = if nu % 2 == 1 { rho1 } else { tau1 };
        if got != want {
            return Ok(false);
        }
    }
    Ok(true)
}

/// sigma_i(p) = tau + rho + (p tau + rho)/(p^2 - 1), the closed form of the
/// prime-power series; always nonnegative for p > D0.
pub fn sigma_p(tau: i64, rho: i64, p: u64) -> Rat128 {
    let p = p as i128;
    Rat128::from_integer(tau as i128 + rho as i128)
        + Rat128::new(p * tau as i128 + rho as i128, p * p - 1)
}

/// tau#_i(p) = tau + (rho p + tau)/(p^2 - 1).
pub fn tau_sharp_p(tau: i64, rho: i64, p: u64) -> Rat128 {
    let p = p as i128;
    Rat128::from_integer(tau as i128) + Rat128::new(rho as i128 * p + tau as i128, p * p - 1)
}

fn rat_to_big(r: Rat128) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// sigma_i(d) for squarefree d coprime to W, as an exact rational.
pub fn sigma_i(
    delta: &BinaryForm,
    f_form: &BinaryForm,
    d: u64,
    d0: u64,
    ctx: &ArithContext,
) -> Result<BigRational, ArithError> {
    let mut acc = BigRational::from(BigInt::from(1));
    if d == 1 {
        return Ok(acc);
    }
    let f = factorize(d as i128, ctx)?;
    for &(p, e) in &f.factors {
        assert_eq!(e, 1, "sigma_i needs a squarefree argument");
        assert!(p > d0, "sigma_i argument must be coprime to W");
        let tau = tau_prime_power(delta, p, 1)? as i64;
        let rho = rho_prime_power(delta, f_form, p, 1)?;
        acc *= rat_to_big(sigma_p(tau, rho, p));
    }
    Ok(acc)
}

/// tau#_i(d) for squarefree d coprime to W.
pub fn tau_sharp_i(
    delta: &BinaryForm,
    f_form: &BinaryForm,
    d: u64,
    d0: u64,
    ctx: &ArithContext,
) -> Result<BigRational, ArithError> {
    let mut acc = BigRational::from(BigInt::from(1));
    if d == 1 {
        return Ok(acc);
    }
    let f = factorize(d as i128, ctx)?;
    for &(p, e) in &f.factors {
        assert_eq!(e, 1, "tau#_i needs a squarefree argument");
        assert!(p > d0, "tau#_i argument must be coprime to W");
        let tau = tau_prime_power(delta, p, 1)? as i64;
        let rho = rho_prime_power(delta, f_form, p, 1)?;
        acc *= rat_to_big(tau_sharp_p(tau, rho, p));
    }
    Ok(acc)
}

/// Truncated series evaluation of the sigma_i(p) Euler factor, the
/// independent cross-check of the closed form: tau + sum_{k<=K} rho(p^{k+1})/p^k.
pub fn sigma_p_series(
    delta: &BinaryForm,
    f_form: &BinaryForm,
    p: u64,
    terms: u32,
) -> Result<f64, ArithError> {
    let tau = tau_prime_power(delta, p, 1)? as f64;
    let rho1 = rho_prime_power(delta, f_form, p, 1)? as f64;
    let tau1 = tau;
    let mut acc = tau;
    let mut pk = 1f64;
    for k in 0..terms {
        // rho(p^{k+1}) follows the proven alternating pattern; using it here
        // only tests convergence of the series against the closed form.
        let rho_k1 = if (k + 1) % 2 == 1 { rho1 } else { tau1 };
        acc += rho_k1 / pk;
        pk *= p as f64;
    }
    Ok(acc)
}

/// Per-fibre tables of tau_i(p), rho_i(p) for p <= p_max.
pub struct RootCountProfile {
    pub index: usize,
    pub d0: u64,
    pub p_max: u64,
    /// (p, tau_i(p), rho_i(p)) for d0 < p <= p_max.
    pub table: Vec<(u64, u8, i8)>,
}

pub fn build_profile(
    index: usize,
    delta: &BinaryForm,
    f_form: &BinaryForm,
    d0: u64,
    p_max: u64,
    ctx: &ArithContext,
) -> Result<RootCountProfile, ArithError> {
    let mut table = vec![];
    for p in ctx.primes_up_to(p_max) {
        if p <= d0 {
            continue;
        }
        let mut tau = 0u8;
        let mut rho = 0i8;
        for root in projective_roots_mod_pk(delta, p, 1)? {
            let (sig, tchart) = root.rep();
            tau += 1;
            rho += jacobi64(f_form.eval(sig, tchart), p) as i8;
        }
        table.push((p, tau, rho));
    }
    Ok(RootCountProfile { index, d0, p_max, table })
}

impl RootCountProfile {
    /// Partial sum sum_{p < z} tau_i(p)/p.
    pub fn mertens_tau(&self, z: f64) -> f64 {
        self.table
            .iter()
            .take_while(|&&(p, _, _)| (p as f64) < z)
            .map(|&(p, tau, _)| tau as f64 / p as f64)
            .sum()
    }

    /// Partial sum sum_{p < z} rho_i(p)/p.
    pub fn mertens_rho(&self, z: f64) -> f64 {
        self.table
            .iter()
            .take_while(|&&(p, _, _)| (p as f64) < z)
            .map(|&(p, _, rho)| rho as f64 / p as f64)
            .sum()
    }
}

/// rho_3(p) = 1 - p / (2 (p+1)^2): the probability that a random ternary
/// quadratic form over Z_p is isotropic.
pub fn rho3(p: u64) -> Rat128 {
    let p = p as i128;
    Rat128::from_integer(1) - Rat128::new(p, 2 * (p + 1) * (p + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{analyze_bundle, bundle_e1, bundle_e2};
    use num_traits::{Signed, ToPrimitive};
    use rand::{Rng, SeedableRng};

    fn ctx() -> ArithContext {
        ArithContext::new(200_000, 200_000)
    }

    #[test]
    fn tau_rho_spec_examples() {
        let c = ctx();
        let a1 = analyze_bundle(&bundle_e1(), &c).unwrap();
        // Delta_1 = s (index of s-factor may vary; find it)
        let fs = a1
            .fibres
            .iter()
            .find(|f| f.delta == BinaryForm::new(vec![1, 0]))
            .unwrap();
        assert_eq!(tau_i(&fs.delta, 1, 2, &c).unwrap(), 1);
        assert_eq!(rho_i(&fs.delta, &fs.f_form, 1, 2, &c).unwrap(), 1);
        for p in [3u64, 5, 7, 11, 13, 97] {
            assert_eq!(tau_i(&fs.delta, p, 2, &c).unwrap(), 1);
        }
        assert_eq!(rho_i(&fs.delta, &fs.f_form, 7, 2, &c).unwrap(), -1);
        // vanishing below d0
        assert_eq!(tau_i(&fs.delta, 6, 3, &c).unwrap(), 0);

        // The t-factor counts the projective root [1:0] once.
        let ft = a1
            .fibres
            .iter()
            .find(|f| f.delta == BinaryForm::new(vec![0, 1]))
            .unwrap();
        for p in [3u64, 5, 7] {
            assert_eq!(tau_i(&ft.delta, p, 2, &c).unwrap(), 1);
        }
        assert_eq!(rho_i(&ft.delta, &ft.f_form, 7, 2, &c).unwrap(), -1);

        // E2: tau(11) = 2 with roots +-3, rho(11) = -2.
        let a2 = analyze_bundle(&bundle_e2(), &c).unwrap();
        let f2 = &a2.fibres[0];
        assert_eq!(tau_i(&f2.delta, 11, 3, &c).unwrap(), 2);
        assert_eq!(rho_i(&f2.delta, &f2.f_form, 11, 3, &c).unwrap(), -2);
        let roots = projective_roots_mod_pk(&f2.delta, 11, 1).unwrap();
        assert_eq!(roots, vec![ProjRoot::Affine(3), ProjRoot::Affine(8)]);
        // 3 not a root mod 5: x^2+2 has no root
        assert_eq!(tau_i(&f2.delta, 5, 3, &c).unwrap(), 0);
    }

    #[test]
    fn multiplicativity_against_direct_scans() {
        let c = ctx();
        let a2 = analyze_bundle(&bundle_e2(), &c).unwrap();
        let f = &a2.fibres[0];
        let d0 = 3u64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..60 {
            let d = rng.gen_range(2u64..100_000);
            let fac = factorize(d as i128, &c).unwrap();
            if fac.factors.iter().any(|&(p, _)| p <= d0) {
                assert_eq!(tau_i(&f.delta, d, d0, &c).unwrap(), 0);
                continue;
            }
            // direct affine scan (no infinity roots for s^2 + 2t^2)
            let poly = f.delta.dehom_s();
            let tau_direct = (0..d).filter(|&x| poly.eval_mod(x, d) == 0).count() as u64;
            let rho_direct: i64 = (0..d)
                .filter(|&x| poly.eval_mod(x, d) == 0)
                .map(|x| jacobi64(f.f_form.eval(x as i128, 1), d) as i64)
                .sum();
            assert_eq!(tau_i(&f.delta, d, d0, &c).unwrap(), tau_direct, "d={d}");
            assert_eq!(
                rho_i(&f.delta, &f.f_form, d, d0, &c).unwrap(),
                rho_direct,
                "d={d}"
            );
        }
    }

    #[test]
    fn pairwise_multiplicative() {
        let c = ctx();
        let a2 = analyze_bundle(&bundle_e2(), &c).unwrap();
        let f = &a2.fibres[0];
        let d0 = 3u64;
        let pairs = [(5u64, 7u64), (7, 11), (11, 13), (5, 121), (49, 11)];
        for (m, n) in pairs {
            assert_eq!(
                tau_i(&f.delta, m * n, d0, &c).unwrap(),
                tau_i(&f.delta, m, d0, &c).unwrap() * tau_i(&f.delta, n, d0, &c).unwrap()
            );
            assert_eq!(
                rho_i(&f.delta, &f.f_form, m * n, d0, &c).unwrap(),
                rho_i(&f.delta, &f.f_form, m, d0, &c).unwrap()
                    * rho_i(&f.delta, &f.f_form, n, d0, &c).unwrap()
            );
        }
    }

    #[test]
    fn hensel_pattern_spec_examples() {
        let c = ctx();
        let a1 = analyze_bundle(&bundle_e1(), &c).unwrap();
        let fs = a1
            .fibres
            .iter()
            .find(|f| f.delta == BinaryForm::new(vec![1, 0]))
            .unwrap();
        // E1, p=7: rho(49) = tau(7) = 1, rho(343) = rho(7) = -1
        assert_eq!(rho_prime_power(&fs.delta, &fs.f_form, 7, 2).unwrap(), 1);
        assert_eq!(rho_prime_power(&fs.delta, &fs.f_form, 7, 3).unwrap(), -1);
        assert!(check_hensel_pattern(&fs.delta, &fs.f_form, 7, 6).unwrap());

        // E2, p=11: pattern (-2, 2, -2, 2)
        let a2 = analyze_bundle(&bundle_e2(), &c).unwrap();
        let f2 = &a2.fibres[0];
        let got: Vec<i64> = (1..=4)
            .map(|nu| rho_prime_power(&f2.delta, &f2.f_form, 11, nu).unwrap())
            .collect();
        assert_eq!(got, vec![-2, 2, -2, 2]);
        assert!(check_hensel_pattern(&f2.delta, &f2.f_form, 11, 6).unwrap());
    }

    #[test]
    fn hensel_pattern_matches_exhaustive_scan() {
        let c = ctx();
        let a2 = analyze_bundle(&bundle_e2(), &c).unwrap();
        let f = &a2.fibres[0];
        for (p, numax) in [(5u64, 6u32), (7, 6), (11, 5), (13, 5), (17, 4)] {
            for nu in 1..=numax {
                let m = p.pow(nu);
                if m > 2_000_000 {
                    break;
                }
                let poly = f.delta.dehom_s();
                let direct: i64 = (0..m)
                    .filter(|&x| poly.eval_mod(x, m) == 0)
                    .map(|x| jacobi64(f.f_form.eval(x as i128, 1), m) as i64)
                    .sum();
                assert_eq!(
                    rho_prime_power(&f.delta, &f.f_form, p, nu).unwrap(),
                    direct,
                    "p={p} nu={nu}"
                );
            }
        }
    }

    #[test]
    fn sigma_spec_examples() {
        let c = ctx();
        let a1 = analyze_bundle(&bundle_e1(), &c).unwrap();
        let fs = a1
            .fibres
            .iter()
            .find(|f| f.delta == BinaryForm::new(vec![1, 0]))
            .unwrap();
        // p=7: sigma = 1/8
        let s7 = sigma_i(&fs.delta, &fs.f_form, 7, 2, &c).unwrap();
        assert_eq!(s7, BigRational::new(BigInt::from(1), BigInt::from(8)));
        // p=5: sigma = 9/4
        let s5 = sigma_i(&fs.delta, &fs.f_form, 5, 2, &c).unwrap();
        assert_eq!(s5, BigRational::new(BigInt::from(9), BigInt::from(4)));
        // d=1
        assert_eq!(
            sigma_i(&fs.delta, &fs.f_form, 1, 2, &c).unwrap(),
            BigRational::from(BigInt::from(1))
        );
        // closed form vs truncated series at k=40
        for p in [5u64, 7, 11, 13] {
            let closed = sigma_i(&fs.delta, &fs.f_form, p, 2, &c)
                .unwrap()
                .to_f64()
                .unwrap();
            let series = sigma_p_series(&fs.delta, &fs.f_form, p, 40).unwrap();
            assert!((closed - series).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn sigma_nonnegative_and_bounded() {
        let c = ctx();
        for bundle in [bundle_e1(), bundle_e2()] {
            let a = analyze_bundle(&bundle, &c).unwrap();
            for f in &a.fibres {
                for p in c.primes_up_to(50_000) {
                    if p <= 3 {
                        continue;
                    }
                    let tau = tau_prime_power(&f.delta, p, 1).unwrap() as i64;
                    let rho = rho_prime_power(&f.delta, &f.f_form, p, 1).unwrap();
                    let s = sigma_p(tau, rho, p);
                    assert!(!s.is_negative(), "sigma_{}({p}) = {s}", f.index);
                    assert!(rho.abs() as u64 <= tau as u64);
                    assert!(tau as usize <= f.delta.degree());
                }
            }
        }
    }

    #[test]
    fn rho3_values() {
        assert_eq!(rho3(2), Rat128::new(8, 9));
        assert_eq!(rho3(3), Rat128::new(29, 32));
        // monotone to 1
        let mut prev = rho3(2);
        for p in [3u64, 5, 7, 11, 101, 10007] {
            let r = rho3(p);
            assert!(r > prev);
            assert!(r < Rat128::from_integer(1));
            prev = r;
        }
    }

    #[test]
    fn mertens_partial_sums_stabilise() {
        let c = ArithContext::new(1_100_000, 100_000);
        let a1 = analyze_bundle(&bundle_e1(), &c).unwrap();
        let fs = a1
            .fibres
            .iter()
            .find(|f| f.delta == BinaryForm::new(vec![1, 0]))
            .unwrap();
        let prof = build_profile(0, &fs.delta, &fs.f_form, 2, 1_000_000, &c).unwrap();
        // z = d0 edge: empty sum
        assert_eq!(prof.mertens_tau(2.0), 0.0);
        let drift_tau = (prof.mertens_tau(1e6) - (1e6f64.ln()).ln())
            - (prof.mertens_tau(1e5) - (1e5f64.ln()).ln());
        assert!(drift_tau.abs() < 0.05, "tau drift {drift_tau}");
        let drift_rho = prof.mertens_rho(1e6) - prof.mertens_rho(1e5);
        assert!(drift_rho.abs() < 0.05, "rho drift {drift_rho}");
    }
}
