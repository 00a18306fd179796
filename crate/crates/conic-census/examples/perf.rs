use conic_census::*;
fn main() {
    let c = arith::ArithContext::new(2_000_000, 1_000_000);
    for (name, bundle, base, bx) in [
        ("E1", forms::bundle_e1(), (1i64,1i64), local::Box2D::new(local::Rat::new(1,2), local::Rat::new(3,2), local::Rat::new(1,2), local::Rat::new(3,2))),
        ("E2", forms::bundle_e2(), (1,2), local::Box2D::new(local::Rat::new(1,2), local::Rat::new(3,2), local::Rat::new(1,2), local::Rat::new(7,2))),
    ] {
        let a = forms::analyze_bundle(&bundle, &c).unwrap();
        let frame = local::build_local_frame(&bundle, &a, base, bx, 2, &c).unwrap();
        let grid: Vec<u64> = (0..7).map(|k| 250u64 << k).collect();
        let t0 = std::time::Instant::now();
        let eng = census::CensusEngine::new(&bundle, &a, &frame, &c, &grid).unwrap();
        let rep = eng.run(None).unwrap();
        let fit = census::scaling_fit(&rep.b_values, &rep.n).unwrap();
        println!("{name}: N {:?} restricted {:?} slope {:.4} +- {:.4} in {:?}", rep.n, rep.n_restricted, fit.0, fit.1, t0.elapsed());
    }
}
