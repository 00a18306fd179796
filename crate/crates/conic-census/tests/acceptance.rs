//! Acceptance suite: the eleven exit criteria, one test each, printing one
//! PASS/FAIL line per criterion (run with `--nocapture` to see them).

use conic_census::arith::ArithContext;
use conic_census::census::{scaling_fit, CensusEngine};
use conic_census::config::{e1_toml, e2_toml, BundleConfig};
use conic_census::forms::{BundleAnalysis, ConicBundle};
use conic_census::local::{holzer_soluble, has_rational_point, LocalData, TernaryForm};
use conic_census::verify::{
    suite_densities, suite_detector, suite_identities, suite_lattice, suite_sieve, CheckResult,
    VerifyCtx,
};
use rand::{Rng, SeedableRng};
use std::sync::OnceLock;
use std::time::Instant;

struct Setup {
    bundle: ConicBundle,
    analysis: BundleAnalysis,
    frame: LocalData,
    ctx: ArithContext,
}

impl Setup {
    fn from_toml(text: &str) -> Setup {
        let cfg: BundleConfig = toml::from_str(text).unwrap();
        let ctx = ArithContext::new(2_000_000, 1_000_000);
        let (bundle, analysis, frame) = cfg.build(&ctx).unwrap();
        Setup { bundle, analysis, frame, ctx }
    }

    fn vctx(&self, seed: u64) -> VerifyCtx<'_> {
        VerifyCtx {
            bundle: &self.bundle,
            analysis: &self.analysis,
            frame: &self.frame,
            ctx: &self.ctx,
            seed,
            varpi: 0.25,
            y_exponent: 0.5,
        }
    }
}

fn e1() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| Setup::from_toml(e1_toml()))
}

fn e2() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| Setup::from_toml(e2_toml()))
}

fn report(criterion: &str, passed: bool, detail: String) {
    let status = if passed { "PASS" } else { "FAIL" };
    println!("[{status}] acceptance {criterion}: {detail}");
    assert!(passed, "acceptance {criterion} failed: {detail}");
}

fn pick<'a>(checks: &'a [CheckResult], name: &str) -> &'a CheckResult {
    checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("missing check {name}"))
}

#[test]
fn criterion_01_hasse_oracle_equivalence() {
    let t0 = Instant::now();
    let s = e1();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut tested = 0u64;
    let mut disagree = None;
    while tested < 2000 {
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| loop {
            let x = rng.gen_range(-50i128..=50);
            if x != 0 {
                break x;
            }
        };
        let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let q = TernaryForm::diagonal(a, b, c);
        if q.det() == 0 {
            continue;
        }
        tested += 1;
        let got = has_rational_point(&q, &s.ctx).unwrap();
        let want = holzer_soluble(a, b, c, &s.ctx).unwrap();
        if got != want {
            disagree.get_or_insert(format!("({a},{b},{c}): hasse {got} vs holzer {want}"));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "1 (Hasse oracle equivalence)",
        disagree.is_none() && secs < 60.0,
        format!("{tested} conics, {} disagreements, {secs:.1}s", disagree.iter().count()),
    );
}

#[test]
fn criterion_02_detector_exactness() {
    let t0 = Instant::now();
    let mut all = String::new();
    let mut pass = true;
    for (name, s) in [("E1", e1()), ("E2", e2())] {
        let checks = suite_detector(&s.vctx(2), 300);
        let c = pick(&checks, "detector_exactness");
        pass &= c.passed;
        all.push_str(&format!("{name}: {}; ", c.detail));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    report("2 (detector exactness, B <= 300)", pass, format!("{all}{secs:.1}s"));
}

#[test]
fn criterion_03_reciprocity_and_dagger() {
    let mut pass = true;
    let mut all = String::new();
    for (name, s) in [("E1", e1()), ("E2", e2())] {
        let checks = suite_detector(&s.vctx(3), 300);
        let r = pick(&checks, "hilbert_reciprocity");
        let d = pick(&checks, "dagger_symbol");
        pass &= r.passed && d.passed;
        all.push_str(&format!("{name}: {} / {}; ", r.detail, d.detail));
    }
    report("3 (Hilbert reciprocity and dagger symbol)", pass, all);
}

#[test]
fn criterion_04_divisor_sum_triple_identity() {
    let mut pass = true;
    let mut all = String::new();
    for (name, s) in [("E1", e1()), ("E2", e2())] {
        let checks = suite_identities(&s.vctx(4), 50);
        let c = pick(&checks, "triple_identity");
        pass &= c.passed;
        all.push_str(&format!(
            "{name}: {}{}; ",
            c.detail,
            c.counterexample.as_deref().unwrap_or("")
        ));
    }
    report("4 (S_direct = S_hyperbola = S_partitioned)", pass, all);
}

#[test]
fn criterion_05_hensel_pattern() {
    let mut pass = true;
    let mut all = String::new();
    for (name, s) in [("E1", e1()), ("E2", e2())] {
        let checks = suite_densities(&s.vctx(5), 200_000);
        let c = pick(&checks, "hensel_pattern");
        pass &= c.passed;
        all.push_str(&format!("{name}: {}; ", c.detail));
    }
    report("5 (rho_i(p^nu) pattern, p <= 200, nu <= 6)", pass, all);
}

#[test]
fn criterion_06_sieve_structure() {
    let t0 = Instant::now();
    let s = e1();
    let checks = suite_sieve(&s.vctx(6), 10_000, 100_000);
    let w = pick(&checks, "weights_structure");
    let sand = pick(&checks, "neutraliser_sandwich");
    let l16 = pick(&checks, "lemma_16plus");
    let secs = t0.elapsed().as_secs_f64();
    report(
        "6 (sieve structure + sandwich + 16+)",
        w.passed && sand.passed && l16.passed && secs < 120.0,
        format!("{} / {} / {} / {secs:.1}s", w.detail, sand.detail, l16.detail),
    );
}

#[test]
fn criterion_07_fundamental_lemma_ratio() {
    let s = e1();
    let checks = suite_sieve(&s.vctx(7), 50, 1_000);
    let half = pick(&checks, "fl_ratio_half");
    let bundle = pick(&checks, "fl_ratio_bundle");
    report(
        "7 (Fundamental-Lemma ratios, kappa = 1/2 and 1)",
        half.passed && bundle.passed,
        format!("{} / {}", half.detail, bundle.detail),
    );
}

#[test]
fn criterion_08_lattice_counting() {
    let s = e1();
    let checks = suite_lattice(&s.vctx(8), 500);
    let part1 = pick(&checks, "lattice_count_envelope");
    let part2 = pick(&checks, "lattice_primitive_envelope");
    report(
        "8 (lattice counting envelopes, 500 instances)",
        part1.passed && part2.passed,
        format!("{} / {}", part1.detail, part2.detail),
    );
}

#[test]
fn criterion_09_headline_scaling() {
    let t0 = Instant::now();
    let grid: Vec<u64> = (0..7).map(|k| 250u64 << k).collect();
    let mut pass = true;
    let mut all = String::new();
    for (name, s, window) in [
        ("E1", e1(), (-1.2f64, -0.8f64)),
        ("E2", e2(), (-0.65, -0.35)),
    ] {
        let engine = CensusEngine::new(&s.bundle, &s.analysis, &s.frame, &s.ctx, &grid).unwrap();
        let rep = engine.run(None).unwrap();
        let (slope, stderr) = scaling_fit(&rep.b_values, &rep.n).unwrap();
        let ok = slope >= window.0 && slope <= window.1;
        pass &= ok;
        all.push_str(&format!(
            "{name}: slope {slope:.4} +- {stderr:.4} in [{}, {}] N(16000) = {}; ",
            window.0,
            window.1,
            rep.n.last().unwrap()
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "9 (N(pi,B) scaling exponent, B = 250..16000)",
        pass,
        format!("{all}{secs:.0}s"),
    );
}

#[test]
fn criterion_10_density_product() {
    let s = e1();
    let checks = suite_densities(&s.vctx(10), 50_000);
    let c = pick(&checks, "rho3_product");
    report("10 (rho_3 product * sqrt(log B) steady)", c.passed, c.detail.clone());
}

#[test]
fn criterion_11_cutoff_bound() {
    let s = e1();
    let checks = suite_identities(&s.vctx(11), 5);
    let c = pick(&checks, "cutoff_bound");
    report("11 (M* cut-off bound stability)", c.passed, c.detail.clone());
}
