use std::sync::Arc;
use pamfract::{GridSpec, Boundary, Scheme, InitialData, NoiseStream, NoiseDrive, solve};

fn main() {
    // c8-style run: dirac, t=1, dx=0.05, domain [-4,4)
    let g = Arc::new(GridSpec {
        dx: 0.05, dt: 0.0025, x_min: -4.0, x_max: 4.0,
        boundary: Boundary::Periodic, scheme: Scheme::Splitting,
        t_end: 1.0, snapshot_times: vec![1.0],
    });
    let t0 = std::time::Instant::now();
    let reps = 200u64;
    let mut acc = 0.0;
    for sid in 0..reps {
        let d = NoiseDrive::full(NoiseStream::new(1, sid));
        let traj = solve(&g, &InitialData::Dirac { x0: 0.0 }, Some(&d)).unwrap();
        acc += traj.snapshots[0].values[80];
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    println!("c8-ish traj ({} sites, {} steps): {:.3} ms/traj -> N=1e6 ~ {:.0} s/core  [{acc:.3}]",
        g.n_sites(), g.n_steps(), per * 1e3, per * 1e6);

    // c3-style run: flat, t=8, dx=0.05, domain [-12,12)
    let g = Arc::new(GridSpec {
        dx: 0.05, dt: 0.005, x_min: -12.0, x_max: 12.0,
        boundary: Boundary::Periodic, scheme: Scheme::Splitting,
        t_end: 8.0, snapshot_times: vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
    });
    let t0 = std::time::Instant::now();
    let reps = 20u64;
    let mut acc = 0.0;
    for sid in 0..reps {
        let d = NoiseDrive::full(NoiseStream::new(1, sid));
        let traj = solve(&g, &InitialData::Flat { c: 1.0 }, Some(&d)).unwrap();
        acc += traj.snapshots[6].values[0];
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    println!("c3-ish traj ({} sites, {} steps): {:.3} ms/traj -> N=1e5 ~ {:.0} s/core  [{acc:.3}]",
        g.n_sites(), g.n_steps(), per * 1e3, per * 1e5);

    // c7-style: dx=0.02, t=1, domain [-6,6)
    let g = Arc::new(GridSpec {
        dx: 0.02, dt: 0.0008, x_min: -6.0, x_max: 6.0,
        boundary: Boundary::Periodic, scheme: Scheme::Splitting,
        t_end: 1.0, snapshot_times: vec![1.0],
    });
    let t0 = std::time::Instant::now();
    let reps = 50u64;
    let mut acc = 0.0;
    for sid in 0..reps {
        let d = NoiseDrive::full(NoiseStream::new(1, sid));
        let traj = solve(&g, &InitialData::Flat { c: 1.0 }, Some(&d)).unwrap();
        acc += traj.snapshots[0].values[0];
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    println!("c7-ish traj ({} sites, {} steps): {:.3} ms/traj -> N=5e4 ~ {:.0} s/core  [{acc:.3}]",
        g.n_sites(), g.n_steps(), per * 1e3, per * 5e4);
}
