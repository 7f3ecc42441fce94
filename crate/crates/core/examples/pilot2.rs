use std::sync::Arc;
use pamfract::{GridSpec, Boundary, Scheme, InitialData};
use pamfract::tail::*;
use pamfract::stats::mean_var;

fn main() {
    let dx: f64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let n: u64 = std::env::args().nth(2).unwrap().parse().unwrap();
    let dtf: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let t0 = std::time::Instant::now();
    let g = Arc::new(GridSpec {
        dx, dt: dx * dx * dtf, x_min: -4.0, x_max: 4.0,
        boundary: Boundary::Periodic, scheme: Scheme::Splitting,
        t_end: 1.0, snapshot_times: vec![1.0],
    });
    let params = EnsembleParams::new(g.clone(), InitialData::Dirac { x0: 0.0 }, 888, n);
    // Collect Upsilon_1(0) samples directly.
    let out = map_trajectories(&params, |traj| {
        let snap = traj.snapshot_at(1.0).unwrap();
        let site = traj.grid.site_of_x(0.0).unwrap();
        snap.values[site].ln() + 1.0 / 24.0
    });
    let vals: Vec<f64> = out.per_traj.iter().flatten().copied().collect();
    let (m, v) = mean_var(&vals);
    println!("dx={dx} dtf={dtf} N={n}: mean {:.4} sd {:.4}", m, v.sqrt());
    let mut sorted = vals.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    for q in [0.5, 0.9, 0.99, 0.999, 0.9999] {
        let idx = ((sorted.len() as f64 * q) as usize).min(sorted.len()-1);
        println!("   q{:.4} -> {:.4}", q, sorted[idx]);
    }
    // local exponent table
    let sweep: Vec<f64> = (0..12).map(|i| 0.75 + 0.25 * i as f64).collect();
    for &s in &sweep {
        let hits = vals.iter().filter(|&&x| x >= s).count();
        if hits >= 10 {
            println!("   s={:.2} p={:.3e} hits={hits}", s, hits as f64 / vals.len() as f64);
        }
    }
    println!("   ({:?})", t0.elapsed());
}
