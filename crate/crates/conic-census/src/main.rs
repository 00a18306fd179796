//! Command-line surface: analyze a bundle, run the census, or run the
//! verification suites.
//!
//! Exit codes: 0 pass, 1 invariant failure, 2 invalid config, 3 resource
//! refusal (census beyond the 64-bit-safe bound).

use clap::{Parser, Subcommand};
use conic_census::census::{CensusEngine, CensusReport};
use conic_census::config::BundleConfig;
use conic_census::forms::NonsplitStatus;
use conic_census::verify::{run_suite, VerifyCtx};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "conic-census", version, about = "Isotropic-fibre counting for conic bundles over P^1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a bundle and print its fibre analysis and congruence frame.
    Analyze {
        #[arg(long)]
        bundle: PathBuf,
        /// Write the analysis as JSON to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact census N(pi, B) over a grid of B values.
    Census {
        #[arg(long)]
        bundle: PathBuf,
        /// Comma-separated B values, e.g. 250,500,1000.
        #[arg(long = "B", value_delimiter = ',')]
        b: Vec<u64>,
        /// Output base path: writes <out>.csv and <out>.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Strip-completion log for resumable runs.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run a property-verification suite.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        /// detector | identities | sieve | lattice | densities | all
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// z = y^varpi in the sieve checks.
        #[arg(long, default_value_t = 0.25)]
        varpi: f64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Write the machine-readable report as JSON to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct AnalyzeOut<'a> {
    name: &'a str,
    delta: &'a conic_census::forms::BinaryForm,
    content: i128,
    rank: usize,
    n_nonsplit: usize,
    fibres: Vec<FibreOut<'a>>,
    d0: u64,
    w: u64,
    kappa: &'a std::collections::BTreeMap<u64, u32>,
    n_exp: &'a std::collections::BTreeMap<u64, u32>,
    w_i: &'a [u64],
}

#[derive(Serialize)]
struct FibreOut<'a> {
    index: usize,
    delta: &'a conic_census::forms::BinaryForm,
    degree: usize,
    chart: conic_census::forms::Chart,
    theta_min_poly: Vec<i128>,
    ell: usize,
    v: &'a [Vec<i128>; 3],
    f_form: &'a conic_census::forms::BinaryForm,
    nonsplit: &'a NonsplitStatus,
}

fn init_workers(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn load(bundle: &PathBuf) -> Result<(BundleConfig, conic_census::arith::ArithContext), ExitCode> {
    let cfg = match BundleConfig::load(bundle) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(ExitCode::from(2));
        }
    };
    let ctx = cfg.arith_context();
    Ok((cfg, ctx))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze { bundle, out } => {
            let Ok((cfg, ctx)) = load(&bundle) else { return ExitCode::from(2) };
            let (b, analysis, frame) = match cfg.build(&ctx) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let _ = b;
            println!("bundle {}", cfg.name);
            println!("  Delta = {:?} (content {})", analysis.delta.coeffs, analysis.content);
            println!("  rank r(pi) = {}, non-split fibres n = {}", analysis.rank, analysis.n_nonsplit());
            for f in &analysis.fibres {
                println!(
                    "  fibre {}: Delta_i {:?} (deg {}), chart {:?}, ell = {}, F_i = {:?}",
                    f.index,
                    f.delta.coeffs,
                    f.delta.degree(),
                    f.chart,
                    f.ell,
                    f.f_form.coeffs
                );
                println!("    min poly {:?}, kernel v = {:?}", f.theta_min_poly.coeffs, f.v);
                match &f.nonsplit {
                    NonsplitStatus::Certified(ws) => {
                        let ps: Vec<u64> = ws.iter().map(|w| w.prime).collect();
                        println!("    non-split: certified by witnesses at p = {ps:?}");
                    }
                    NonsplitStatus::Inconclusive { primes_tried } => {
                        println!("    non-split: inconclusive after {primes_tried} primes (fibre may be split)");
                    }
                }
            }
            println!("  D0 = {}, W = {}", frame.d0, frame.w);
            println!("  kappa_p = {:?}", frame.kappa);
            println!("  W_i = {:?}", frame.w_i);
            if let Some(path) = out {
                let doc = AnalyzeOut {
                    name: &cfg.name,
                    delta: &analysis.delta,
                    content: analysis.content,
                    rank: analysis.rank,
                    n_nonsplit: analysis.n_nonsplit(),
                    fibres: analysis
                        .fibres
                        .iter()
                        .map(|f| FibreOut {
                            index: f.index,
                            delta: &f.delta,
                            degree: f.delta.degree(),
                            chart: f.chart,
                            theta_min_poly: f.theta_min_poly.coeffs.clone(),
                            ell: f.ell,
                            v: &f.v,
                            f_form: &f.f_form,
                            nonsplit: &f.nonsplit,
                        })
                        .collect(),
                    d0: frame.d0,
                    w: frame.w,
                    kappa: &frame.kappa,
                    n_exp: &frame.n_exp,
                    w_i: &frame.w_i,
                };
                if let Err(e) = std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap())
                {
                    eprintln!("error writing {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            ExitCode::SUCCESS
        }
        Command::Census { bundle, b, out, checkpoint, workers } => {
            init_workers(workers);
            let Ok((cfg, ctx)) = load(&bundle) else { return ExitCode::from(2) };
            let (bun, analysis, frame) = match cfg.build(&ctx) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let engine = match CensusEngine::new(&bun, &analysis, &frame, &ctx, &b) {
                Ok(e) => e,
                Err(e @ conic_census::census::CensusError::UnsafeB { .. }) => {
                    eprintln!("refused: {e}");
                    return ExitCode::from(3);
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let report = match engine.run(checkpoint.as_deref()) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            eprintln!("census finished in {} ms", report.wall_ms);
            let csv = render_csv(&report);
            match &out {
                Some(base) => {
                    let csv_path = base.with_extension("csv");
                    let json_path = base.with_extension("json");
                    let doc = CensusDoc { name: &cfg.name, frame: &frame, report: &report };
                    if let Err(e) = std::fs::write(&csv_path, csv).and_then(|_| {
                        std::fs::write(&json_path, serde_json::to_string_pretty(&doc).unwrap())
                    }) {
                        eprintln!("error writing output: {e}");
                        return ExitCode::from(2);
                    }
                    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
                }
                None => print!("{csv}"),
            }
            ExitCode::SUCCESS
        }
        Command::Verify { bundle, suite, seed, varpi, workers, out } => {
            init_workers(workers);
            let Ok((cfg, ctx)) = load(&bundle) else { return ExitCode::from(2) };
            let (bun, analysis, frame) = match cfg.build(&ctx) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let v = VerifyCtx {
                bundle: &bun,
                analysis: &analysis,
                frame: &frame,
                ctx: &ctx,
                seed,
                varpi,
                y_exponent: cfg.overrides.sieve_y_exponent.unwrap_or(0.5),
            };
            let report = run_suite(&suite, &v);
            for c in &report.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("[{status}] {}: {}", c.name, c.detail);
                if let Some(w) = &c.counterexample {
                    println!("        counterexample: {w}");
                }
            }
            if let Some(path) = out {
                if let Err(e) = std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap())
                {
                    eprintln!("error writing {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[derive(Serialize)]
struct CensusDoc<'a> {
    name: &'a str,
    frame: &'a conic_census::local::LocalData,
    report: &'a CensusReport,
}

fn render_csv(r: &CensusReport) -> String {
    let mut out = String::from("B,N,N_restricted,normalised,slope_so_far\n");
    for k in 0..r.b_values.len() {
        let slope = r.slope_so_far[k]
            .map(|s| format!("{s:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            r.b_values[k], r.n[k], r.n_restricted[k], r.normalised[k], slope
        ));
    }
    out
}
