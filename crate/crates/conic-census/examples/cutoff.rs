use conic_census::*;
use conic_census::sums::*;
fn main() {
    let c = arith::ArithContext::new(400_000, 200_000);
    let bundle = forms::bundle_e1();
    let a = forms::analyze_bundle(&bundle, &c).unwrap();
    let bx = local::Box2D::new(local::Rat::new(1,2), local::Rat::new(3,2), local::Rat::new(1,2), local::Rat::new(3,2));
    let frame = local::build_local_frame(&bundle, &a, (1,1), bx, 2, &c).unwrap();
    let sf = SumFrame { bundle: &bundle, analysis: &a, frame: &frame, ctx: &c };
    for b in [50u64, 100, 200] {
        let bs = BSet::build(&sf, b).unwrap();
        print!("B={b:4}: ");
        for y in [2u64,3,4,5,6,8,10,12,14] {
            let (full, trunc) = m_star(&sf, &[1,1], b, y, &bs).unwrap();
            let resid = (full - trunc).abs();
            print!("Y={y}:{resid} ");
        }
        let (full, _) = m_star(&sf, &[1,1], b, 1, &bs).unwrap();
        println!(" | full={full}");
    }
}
