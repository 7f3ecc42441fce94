use std::sync::Arc;
use pamfract::{GridSpec, Boundary, Scheme, InitialData};
use pamfract::tail::*;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    let t0 = std::time::Instant::now();
    if which == "moments" || which.is_empty() {
        // criterion 3 pilot: k=2,3 moments, dx=0.05
        for dt in [0.005, 0.0025] {
            let g = Arc::new(GridSpec {
                dx: 0.05, dt, x_min: -12.0, x_max: 12.0,
                boundary: Boundary::Periodic, scheme: Scheme::Splitting,
                t_end: 8.0, snapshot_times: vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            });
            let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 777, 8000);
            let t_grid = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
            for k in [2u32, 3] {
                let rep = moment_lyapunov(&params, k, &t_grid).unwrap();
                println!("dt={dt} k={k}: slope {:.4} ci ({:.4},{:.4}) dropped {:?} ({:?})",
                    rep.slope, rep.slope_ci.0, rep.slope_ci.1, rep.dropped, t0.elapsed());
                for r in &rep.rows {
                    println!("   t={} mean={:.4} rel={:.3} ess={:.2e}", r.t, r.mean, r.rel_stderr, r.ess_ratio);
                }
            }
        }
    }
    if which == "upsilon" || which.is_empty() {
        // criterion 8 pilot: P(Upsilon_1(0) >= s) upper tail, N = 1e5
        let g = Arc::new(GridSpec {
            dx: 0.05, dt: 0.0025, x_min: -4.0, x_max: 4.0,
            boundary: Boundary::Periodic, scheme: Scheme::Splitting,
            t_end: 1.0, snapshot_times: vec![1.0],
        });
        let params = EnsembleParams::new(g, InitialData::Dirac { x0: 0.0 }, 888, 100_000);
        let sweep: Vec<f64> = (0..14).map(|i| 0.75 + 0.25 * i as f64).collect();
        let event = EventSpec::UpsilonUpper { t: 1.0, x: 0.0, s: 1.0 };
        let curve = estimate_tail(&params, &event, &sweep).unwrap();
        for r in &curve.rows {
            println!("  s={:.2} hits={} p={:.3e}", r.param, r.hits, r.p_hat);
        }
        match fit_exponent(&curve) {
            Ok(f) => println!("upsilon pilot: alpha {:.3} +- {:.3} c {:.3} R2 {:.4} range {:?} ({:?})",
                f.alpha, f.alpha_stderr, f.c, f.r_squared, f.s_range, t0.elapsed()),
            Err(e) => println!("fit failed: {e}"),
        }
    }
    if which == "conv" || which.is_empty() {
        // criterion 7 pilot: one repetition
        let g = Arc::new(GridSpec {
            dx: 0.02, dt: 0.0008, x_min: -6.0, x_max: 6.0,
            boundary: Boundary::Periodic, scheme: Scheme::Splitting,
            t_end: 1.0, snapshot_times: vec![1.0],
        });
        let r = convolution_test(&g, &InitialData::Flat { c: 1.0 }, 1.0, 5000, 999, None).unwrap();
        println!("conv pilot: D={:.4} p={:.4} trunc={:.2e} means {:.4}/{:.4} ({:?})",
            r.ks_distance, r.p_value, r.truncation_mass, r.direct_mean, r.integral_mean, t0.elapsed());
    }
    if which == "fkg" || which.is_empty() {
        // criterion 9 pilot: a few interval pairs at N=1e4
        let g = Arc::new(GridSpec {
            dx: 0.05, dt: 0.0025, x_min: -8.0, x_max: 8.0,
            boundary: Boundary::Periodic, scheme: Scheme::Splitting,
            t_end: 1.0, snapshot_times: vec![1.0],
        });
        let params = EnsembleParams::new(g, InitialData::Dirac { x0: 0.0 }, 1234, 10_000);
        let pairs = [((-1.0, 0.0), (0.5, 1.5)), ((-2.0, -0.5), (0.0, 2.0)), ((-0.3, 0.1), (0.4, 0.9))];
        for (i1, i2) in pairs {
            let r = fkg_test(&params, 1.0, i1, i2, 0.5, None).unwrap();
            println!("fkg pilot {i1:?} {i2:?}: s={:.3} diff={:+.5} z={:+.2} p1={:.3} p2={:.3} ({:?})",
                r.s_used, r.difference, r.z, r.p1, r.p2, t0.elapsed());
        }
    }
}
