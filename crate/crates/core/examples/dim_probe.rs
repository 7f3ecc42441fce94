use pamfract::hausdorff::{dimension_estimate, Strategy};
use pamfract::level_sets::RegionSet;

fn main() {
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
    for (name, region) in [
        ("xi_2   ", RegionSet::XiQ { q: 2.0 }),
        ("xi_half", RegionSet::XiQ { q: 0.5 }),
        ("line   ", RegionSet::HorizontalLine),
        ("quad   ", RegionSet::Quadrant),
    ] {
        let t0 = std::time::Instant::now();
        let est = dimension_estimate(&region, &grid, 4..=12, Strategy::SingleScale).unwrap();
        println!("{name} rho* = {:?}  ({:?})", est.rho_star, t0.elapsed());
        if std::env::args().any(|a| a == "-v") {
            for d in &est.diagnostics {
                println!("   rho {:4.2}  b {:7.4}  iso {:7.4}  se {:6.4}", d.rho, d.slope, d.slope_iso, d.slope_stderr);
            }
        }
    }
}
