use std::sync::Arc;
use pamfract::{GridSpec, Boundary, Scheme, InitialData};
use pamfract::tail::*;

fn main() {
    let n: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let dt: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.005);
    let t0 = std::time::Instant::now();
    let g = Arc::new(GridSpec {
        dx: 0.05, dt, x_min: -8.0, x_max: 8.0,
        boundary: Boundary::Periodic, scheme: Scheme::Splitting,
        t_end: 8.0, snapshot_times: vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
    });
    let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 20260811, n);
    let t_grid = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    for k in [2u32, 3] {
        let rep = moment_lyapunov(&params, k, &t_grid).unwrap();
        println!("N={n} dt={dt} k={k}: slope {:.4} ci ({:.4},{:.4}) dropped {:?}", rep.slope, rep.slope_ci.0, rep.slope_ci.1, rep.dropped);
        for r in &rep.rows {
            println!("   t={} mean={:.4} rel={:.3}", r.t, r.mean, r.rel_stderr);
        }
    }
    println!("({:?})", t0.elapsed());
}
