//! Valley level sets, the stretch map, pixelation, and synthetic
//! known-dimension benchmark sets.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::Trajectory;

#[derive(Debug, Error)]
pub enum SetError {
    #[error("xi_q needs q > 0, got {0}")]
    BadExponent(f64),
    #[error("xi_q needs n_max >= 1, got {0}")]
    BadShellIndex(u32),
    #[error("materializing would produce >= {count} pixels, over the budget {budget}")]
    BudgetExceeded { count: u64, budget: u64 },
    #[error("operation needs a pixel set; call pixelate() first")]
    NotPixel,
    #[error("set file is malformed: {0}")]
    BadFile(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Provenance carried by every set and written to the JSON sidecar.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SetMeta {
    pub source: String,
    #[serde(default)]
    pub seed: Option<u64>,
    /// (dt, dx) of the originating lattice, when there is one.
    #[serde(default)]
    pub resolution: Option<(f64, f64)>,
    #[serde(default)]
    pub pixel_rule: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetData {
    /// Real-coordinate (t, x) points.
    Real(Vec<[f64; 2]>),
    /// Integer unit pixels, sorted lexicographically and deduplicated.
    Pixel(Vec<[i64; 2]>),
}

/// A finite space-time subset with resolution metadata.
#[derive(Debug, Clone)]
pub struct SpaceTimeSet {
    pub data: SetData,
    pub meta: SetMeta,
}

impl SpaceTimeSet {
    pub fn from_points(mut points: Vec<[f64; 2]>, meta: SetMeta) -> Self {
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        SpaceTimeSet {
            data: SetData::Real(points),
            meta,
        }
    }

    pub fn from_pixels(mut pixels: Vec<[i64; 2]>, meta: SetMeta) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        SpaceTimeSet {
            data: SetData::Pixel(pixels),
            meta,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            SetData::Real(p) => p.len(),
            SetData::Pixel(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_pixel(&self) -> bool {
        matches!(self.data, SetData::Pixel(_))
    }

    pub fn pixels(&self) -> Result<&[[i64; 2]], SetError> {
        match &self.data {
            SetData::Pixel(p) => Ok(p),
            SetData::Real(_) => Err(SetError::NotPixel),
        }
    }

    /// Points as floats regardless of backing (pixels map to their corners).
    pub fn points_f64(&self) -> Vec<[f64; 2]> {
        match &self.data {
            SetData::Real(p) => p.clone(),
            SetData::Pixel(p) => p.iter().map(|q| [q[0] as f64, q[1] as f64]).collect(),
        }
    }

    /// CSV with a provenance header line, rows `t,x`.
    pub fn to_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let kind = if self.is_pixel() { "pixel" } else { "real" };
        writeln!(
            out,
            "# kind={kind}, source={}, seed={}",
            self.meta.source,
            self.meta
                .seed
                .map(|s| s.to_string())
                .unwrap_or_else(|| "none".into())
        )?;
        match &self.data {
            SetData::Real(p) => {
                for q in p {
                    writeln!(out, "{},{}", q[0], q[1])?;
                }
            }
            SetData::Pixel(p) => {
                for q in p {
                    writeln!(out, "{},{}", q[0], q[1])?;
                }
            }
        }
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, SetError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| SetError::BadFile("empty file".into()))?;
        if !header.starts_with("# kind=") {
            return Err(SetError::BadFile("missing '# kind=' header".into()));
        }
        let is_pixel = header.contains("kind=pixel");
        let source = header
            .split("source=")
            .nth(1)
            .map(|s| s.split(',').next().unwrap_or("").trim().to_string())
            .unwrap_or_default();
        let meta = SetMeta {
            source,
            ..SetMeta::default()
        };
        if is_pixel {
            let mut pixels = Vec::new();
            for line in lines.filter(|l| !l.trim().is_empty()) {
                let mut it = line.split(',');
                let s: i64 = parse_field(it.next(), line)?;
                let j: i64 = parse_field(it.next(), line)?;
                pixels.push([s, j]);
            }
            Ok(SpaceTimeSet::from_pixels(pixels, meta))
        } else {
            let mut points = Vec::new();
            for line in lines.filter(|l| !l.trim().is_empty()) {
                let mut it = line.split(',');
                let t: f64 = parse_field(it.next(), line)?;
                let x: f64 = parse_field(it.next(), line)?;
                points.push([t, x]);
            }
            Ok(SpaceTimeSet::from_points(points, meta))
        }
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: &str) -> Result<T, SetError> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| SetError::BadFile(format!("bad row: {line}")))
}

/// Grid nodes `(t, x)` with `t > e` and `u(t, x) < e^{-gamma t}`.
///
/// Snapshots at or below `t = e` contribute nothing; if none lie above, the
/// result is empty and carries a warning in its metadata.
pub fn valley_set(traj: &Trajectory, gamma: f64) -> SpaceTimeSet {
    let mut points = Vec::new();
    let mut any_usable = false;
    for snap in &traj.snapshots {
        if snap.t <= std::f64::consts::E {
            continue;
        }
        any_usable = true;
        let threshold = (-gamma * snap.t).exp();
        for (i, &u) in snap.values.iter().enumerate() {
            if u < threshold {
                points.push([snap.t, snap.x(i)]);
            }
        }
    }
    let mut meta = SetMeta {
        source: format!("valley(gamma={gamma})"),
        seed: Some(traj.master_seed),
        resolution: Some((traj.grid.dt, traj.grid.dx)),
        ..SetMeta::default()
    };
    if !any_usable {
        meta.warnings
            .push("no snapshots with t > e; valley set is empty".into());
    }
    SpaceTimeSet::from_points(points, meta)
}

/// The stretch map `(t, x) -> (e^{t/beta}, x)` applied pointwise.
pub fn stretch(set: &SpaceTimeSet, beta: f64) -> SpaceTimeSet {
    let points: Vec<[f64; 2]> = set
        .points_f64()
        .into_iter()
        .map(|p| [(p[0] / beta).exp(), p[1]])
        .collect();
    let meta = SetMeta {
        source: format!("stretch(beta={beta}) of {}", set.meta.source),
        ..set.meta.clone()
    };
    SpaceTimeSet::from_points(points, meta)
}

/// Floor both coordinates onto the unit pixel lattice and deduplicate.
pub fn pixelate(set: &SpaceTimeSet) -> SpaceTimeSet {
    let pixels: Vec<[i64; 2]> = set
        .points_f64()
        .into_iter()
        .map(|p| [p[0].floor() as i64, p[1].floor() as i64])
        .collect();
    let mut meta = set.meta.clone();
    meta.pixel_rule = Some("floor (half-open unit cells)".into());
    SpaceTimeSet::from_pixels(pixels, meta)
}

/// Default pixel budget for synthetic-set materialization.
pub const XI_PIXEL_BUDGET: u64 = 20_000_000;

/// Integer pixels of `Xi_q = {(x, y) in (0, inf)^2 : y >= x^q}` inside
/// `V_{n_max} = [0, e^{n_max}) x [-e^{n_max}, e^{n_max})`.
pub fn xi_q(q: f64, n_max: u32, budget: Option<u64>) -> Result<SpaceTimeSet, SetError> {
    if !(q > 0.0) {
        return Err(SetError::BadExponent(q));
    }
    if n_max < 1 {
        return Err(SetError::BadShellIndex(n_max));
    }
    let budget = budget.unwrap_or(XI_PIXEL_BUDGET);
    let top = (n_max as f64).exp();
    let s_max = top.ceil() as i64 - 1;
    // Count before materializing.
    let mut count: u64 = 0;
    for s in 1..=s_max {
        let lo = xi_row_floor(s, q);
        if lo as f64 >= top {
            break;
        }
        let hi = top.ceil() as i64 - 1;
        count += (hi - lo + 1).max(0) as u64;
        if count > budget {
            return Err(SetError::BudgetExceeded { count, budget });
        }
    }
    let mut pixels = Vec::with_capacity(count as usize);
    for s in 1..=s_max {
        let lo = xi_row_floor(s, q);
        if lo as f64 >= top {
            break;
        }
        let hi = top.ceil() as i64 - 1;
        for j in lo..=hi {
            pixels.push([s, j]);
        }
    }
    Ok(SpaceTimeSet::from_pixels(
        pixels,
        SetMeta {
            source: format!("xi_q(q={q}, n_max={n_max})"),
            pixel_rule: Some("lattice points of the region".into()),
            ..SetMeta::default()
        },
    ))
}

/// Smallest integer j >= max(1, s^q).
fn xi_row_floor(s: i64, q: f64) -> i64 {
    let bound = (s as f64).powf(q);
    (bound.ceil() as i64).max(1)
}

/// Synthetic sets with known macroscopic dimension, kept implicit so shells
/// up to n = 12 and beyond stay cheap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSet {
    /// Integer points of `{y >= x^q, x > 0, y > 0}` (dimension 1 for q > 1,
    /// 2 for q <= 1).
    XiQ { q: f64 },
    /// All integer points of the closed first quadrant (dimension 2).
    Quadrant,
    /// The horizontal integer line `{(s, 0): s >= 1}` (dimension 1).
    HorizontalLine,
}

impl RegionSet {
    pub fn contains(&self, s: i64, j: i64) -> bool {
        match *self {
            RegionSet::XiQ { q } => s >= 1 && j >= 1 && j >= xi_row_floor(s, q),
            RegionSet::Quadrant => s >= 0 && j >= 0,
            RegionSet::HorizontalLine => s >= 1 && j == 0,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            RegionSet::XiQ { q } => format!("xi_q(q={q})"),
            RegionSet::Quadrant => "quadrant".into(),
            RegionSet::HorizontalLine => "horizontal_line".into(),
        }
    }

    /// Materialize the lattice points inside `V_{n_max}` (tests only use
    /// small `n_max`; honors the same budget rule as `xi_q`).
    pub fn materialize(&self, n_max: u32, budget: Option<u64>) -> Result<SpaceTimeSet, SetError> {
        match *self {
            RegionSet::XiQ { q } => xi_q(q, n_max, budget),
            _ => {
                let budget = budget.unwrap_or(XI_PIXEL_BUDGET);
                let top = (n_max as f64).exp().ceil() as i64 - 1;
                let mut pixels = Vec::new();
                for s in 0..=top {
                    for j in -(top + 1)..=top {
                        if self.contains(s, j) {
                            if pixels.len() as u64 >= budget {
                                return Err(SetError::BudgetExceeded {
                                    count: pixels.len() as u64 + 1,
                                    budget,
                                });
                            }
                            pixels.push([s, j]);
                        }
                    }
                }
                Ok(SpaceTimeSet::from_pixels(
                    pixels,
                    SetMeta {
                        source: self.label(),
                        ..SetMeta::default()
                    },
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, GridSpec, InitialData, Scheme};
    use crate::sim::LatticeField;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    /// Trajectory with snapshots holding `u(t, x) = profile(t)` everywhere.
    fn synthetic_trajectory(times: &[f64], profile: impl Fn(f64) -> f64) -> Trajectory {
        let grid = Arc::new(GridSpec {
            dx: 0.5,
            dt: 0.25,
            x_min: -2.0,
            x_max: 2.0,
            boundary: Boundary::Periodic,
            scheme: Scheme::Splitting,
            t_end: *times.last().unwrap(),
            snapshot_times: times.to_vec(),
        });
        let snapshots = times
            .iter()
            .map(|&t| LatticeField {
                t,
                values: vec![profile(t); grid.n_sites()],
                grid: grid.clone(),
            })
            .collect();
        Trajectory {
            snapshots,
            grid: grid.clone(),
            init: InitialData::Flat { c: 1.0 },
            master_seed: 0,
            stream_id: 0,
            noise_window: None,
            diverged: false,
            diverged_at_step: None,
        }
    }

    #[test]
    fn valley_thresholds() {
        let times = [3.0, 4.0, 5.0];
        // u = e^{-t/12}: empty for gamma = 1/6, full for gamma = 1/24.
        let traj = synthetic_trajectory(&times, |t| (-t / 12.0).exp());
        assert!(valley_set(&traj, 1.0 / 6.0).is_empty());
        let full = valley_set(&traj, 1.0 / 24.0);
        assert_eq!(full.len(), times.len() * traj.grid.n_sites());
        // Exact threshold is excluded (strict inequality); build the profile
        // with the same arithmetic the threshold uses so the bits match.
        let gamma = 1.0 / 24.0;
        let exact = synthetic_trajectory(&times, |t| (-gamma * t).exp());
        assert!(valley_set(&exact, gamma).is_empty());
    }

    #[test]
    fn valley_ignores_early_times_and_warns_when_all_early() {
        let traj = synthetic_trajectory(&[1.0, 2.0], |_| 1e-30);
        let set = valley_set(&traj, 0.5);
        assert!(set.is_empty());
        assert!(!set.meta.warnings.is_empty());
    }

    #[test]
    fn valley_monotone_in_gamma() {
        let times = [3.0, 4.5, 6.0];
        let traj = synthetic_trajectory(&times, |t| (-t / 10.0).exp() * 0.9);
        let mut prev = usize::MAX;
        for gamma in [0.05, 0.08, 0.1, 0.12, 0.2] {
            let n = valley_set(&traj, gamma).len();
            assert!(n <= prev, "gamma={gamma}: {n} > {prev}");
            prev = n;
        }
    }

    #[test]
    fn stretch_formula() {
        let set = SpaceTimeSet::from_points(vec![[2.0, 3.0]], SetMeta::default());
        let out = stretch(&set, 1.0);
        let p = out.points_f64()[0];
        assert_relative_eq!(p[0], 2f64.exp(), epsilon = 1e-12);
        assert_relative_eq!(p[0], 7.389056098930650, epsilon = 1e-9);
        assert_eq!(p[1], 3.0);
    }

    #[test]
    fn stretch_large_beta_taylor_limit() {
        let set = SpaceTimeSet::from_points(vec![[1.0, 0.0]], SetMeta::default());
        let out = stretch(&set, 1e6);
        let first = out.points_f64()[0][0];
        assert!((first - (1.0 + 1e-6)).abs() < 1e-5);
    }

    #[test]
    fn stretch_injective_preserves_x_and_t_order() {
        let pts = vec![[0.5, -1.0], [1.0, -1.0], [2.0, 4.0], [3.0, 4.0]];
        let set = SpaceTimeSet::from_points(pts.clone(), SetMeta::default());
        let out = stretch(&set, 2.0);
        let mapped = out.points_f64();
        assert_eq!(mapped.len(), pts.len());
        for (orig, new) in pts.iter().zip(&mapped) {
            assert_eq!(orig[1], new[1]);
        }
        for w in mapped.windows(2) {
            if w[0][1] == w[1][1] {
                assert!(w[0][0] < w[1][0]);
            }
        }
    }

    #[test]
    fn pixelate_floors_and_dedups() {
        let set = SpaceTimeSet::from_points(
            vec![[2.3, 0.7], [2.9, 0.1], [5.0, -1.2]],
            SetMeta::default(),
        );
        let px = pixelate(&set);
        assert_eq!(px.pixels().unwrap(), &[[2, 0], [5, -2]]);
        // Idempotent.
        let again = pixelate(&px);
        assert_eq!(again.pixels().unwrap(), px.pixels().unwrap());
    }

    #[test]
    fn xi_membership_examples() {
        let r = RegionSet::XiQ { q: 1.0 };
        assert!(r.contains(3, 5));
        assert!(!r.contains(5, 3));
        for q in [0.5, 1.0, 2.0, 7.3] {
            assert!(RegionSet::XiQ { q }.contains(1, 1), "q={q}");
        }
    }

    #[test]
    fn xi_count_matches_brute_force() {
        let q = 2.0;
        let set = xi_q(q, 3, None).unwrap();
        // Independent double loop over the bounding box.
        let top = 3f64.exp();
        let mut count = 0usize;
        let mut s = 1;
        while (s as f64) < top {
            let mut j = 1;
            while (j as f64) < top {
                if (j as f64) >= (s as f64).powf(q) {
                    count += 1;
                }
                j += 1;
            }
            s += 1;
        }
        assert_eq!(set.len(), count);
        for p in set.pixels().unwrap() {
            assert!(RegionSet::XiQ { q }.contains(p[0], p[1]));
        }
    }

    #[test]
    fn xi_budget_error() {
        match xi_q(0.5, 10, Some(1000)) {
            Err(SetError::BudgetExceeded { count, budget }) => {
                assert!(count > budget);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn xi_rejects_bad_params() {
        assert!(matches!(xi_q(0.0, 3, None), Err(SetError::BadExponent(_))));
        assert!(matches!(xi_q(2.0, 0, None), Err(SetError::BadShellIndex(_))));
    }

    #[test]
    fn csv_round_trip() {
        let set = SpaceTimeSet::from_pixels(vec![[3, 0], [5, -2]], SetMeta {
            source: "test".into(),
            seed: Some(7),
            ..SetMeta::default()
        });
        let mut buf = Vec::new();
        set.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# kind=pixel, source=test, seed=7"));
        let back = SpaceTimeSet::from_csv(&text).unwrap();
        assert_eq!(back.pixels().unwrap(), set.pixels().unwrap());
    }
}
