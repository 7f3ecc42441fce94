//! Spatial/temporal discretization and initial data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when checking "is an integer multiple of" rules.
pub const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitEuler,
    Splitting,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "periodic"),
            Boundary::Absorbing => write!(f, "absorbing"),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::ExplicitEuler => write!(f, "explicit_euler"),
            Scheme::Splitting => write!(f, "splitting"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dx must be > 0, got {0}")]
    NonpositiveDx(f64),
    #[error("dt must be > 0, got {0}")]
    NonpositiveDt(f64),
    #[error("x_max - x_min = {0} is not a positive integer multiple of dx = {1}")]
    DomainNotMultiple(f64, f64),
    #[error("explicit_euler stability requires dt <= dx^2 (dt = {dt}, dx^2 = {dx2})")]
    CflViolated { dt: f64, dx2: f64 },
    #[error("t_end must be a nonnegative multiple of dt, got t_end = {0}, dt = {1}")]
    BadTEnd(f64, f64),
    #[error("snapshot time {0} outside [0, t_end = {1}]")]
    SnapshotOutOfRange(f64, f64),
    #[error("snapshot time {0} is not a multiple of dt = {1}")]
    SnapshotNotOnStep(f64, f64),
    #[error("snapshot times must be sorted and distinct")]
    SnapshotsUnsorted,
    #[error("initial value {0} violates 0 < inf u0 <= sup u0 < inf")]
    BadInitialValue(f64),
    #[error("sampled initial data has {got} values, grid has {want} sites")]
    SampledLengthMismatch { got: usize, want: usize },
    #[error("dirac location {0} outside domain [{1}, {2})")]
    DiracOutsideDomain(f64, f64, f64),
    #[error("absorbing grid needs at least 3 interior sites, got {0}")]
    TooFewSites(usize),
}

/// Finite lattice on `[x_min, x_max)` with uniform steps.
///
/// Periodic grids carry `N = (x_max - x_min)/dx` sites at `x_min + i dx`
/// (`x_max` identifies with `x_min`). Absorbing grids carry the `N - 1`
/// interior sites; the solution is pinned to zero on both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dx: f64,
    pub dt: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub boundary: Boundary,
    pub scheme: Scheme,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl GridSpec {
    /// All invariant violations, empty when the spec is usable.
    pub fn issues(&self) -> Vec<GridError> {
        let mut out = Vec::new();
        if !(self.dx > 0.0) {
            out.push(GridError::NonpositiveDx(self.dx));
        }
        if !(self.dt > 0.0) {
            out.push(GridError::NonpositiveDt(self.dt));
        }
        if self.dx > 0.0 {
            let span = self.x_max - self.x_min;
            let ratio = span / self.dx;
            if !(span > 0.0) || (ratio - ratio.round()).abs() > GRID_TOL * ratio.abs().max(1.0) {
                out.push(GridError::DomainNotMultiple(span, self.dx));
            } else if self.boundary == Boundary::Absorbing && (ratio.round() as usize) < 4 {
                out.push(GridError::TooFewSites(ratio.round() as usize));
            }
            if self.scheme == Scheme::ExplicitEuler
                && self.dt > self.dx * self.dx * (1.0 + GRID_TOL)
            {
                out.push(GridError::CflViolated {
                    dt: self.dt,
                    dx2: self.dx * self.dx,
                });
            }
        }
        if self.dt > 0.0 {
            if self.t_end < 0.0 || !on_step(self.t_end, self.dt) {
                out.push(GridError::BadTEnd(self.t_end, self.dt));
            }
            for w in self.snapshot_times.windows(2) {
                if w[1] <= w[0] {
                    out.push(GridError::SnapshotsUnsorted);
                    break;
                }
            }
            for &s in &self.snapshot_times {
                if s < 0.0 || s > self.t_end * (1.0 + GRID_TOL) + GRID_TOL {
                    out.push(GridError::SnapshotOutOfRange(s, self.t_end));
                } else if !on_step(s, self.dt) {
                    out.push(GridError::SnapshotNotOnStep(s, self.dt));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), GridError> {
        match self.issues().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Number of evolved sites.
    pub fn n_sites(&self) -> usize {
        let cells = ((self.x_max - self.x_min) / self.dx).round() as usize;
        match self.boundary {
            Boundary::Periodic => cells,
            Boundary::Absorbing => cells.saturating_sub(1),
        }
    }

    /// Physical position of evolved site `i`.
    pub fn site_x(&self, i: usize) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.x_min + i as f64 * self.dx,
            Boundary::Absorbing => self.x_min + (i as f64 + 1.0) * self.dx,
        }
    }

    /// Evolved site whose position is closest to `x`, if inside the domain.
    pub fn site_of_x(&self, x: f64) -> Option<usize> {
        let offset = match self.boundary {
            Boundary::Periodic => 0.0,
            Boundary::Absorbing => 1.0,
        };
        let idx = ((x - self.x_min) / self.dx - offset).round();
        if idx < 0.0 || idx as usize >= self.n_sites() {
            None
        } else {
            Some(idx as usize)
        }
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    /// Step index of time `t` when `t` sits on the step lattice.
    pub fn step_of_time(&self, t: f64) -> Option<u64> {
        if t < 0.0 || !on_step(t, self.dt) {
            return None;
        }
        Some((t / self.dt).round() as u64)
    }

    /// Domain-size rule of thumb; returns a warning string when the domain
    /// looks too small for boundary effects to stay below statistical noise
    /// at an observation window of half-width `x_window`.
    pub fn domain_size_warning(&self, x_window: f64) -> Option<String> {
        let span = self.x_max - self.x_min;
        let need = 8.0 * self.t_end.sqrt().max(self.t_end.powf(2.0 / 3.0) * x_window);
        if span + GRID_TOL < need {
            Some(format!(
                "domain span {span} below recommended {need:.3} = 8*max(sqrt(t_end), t_end^(2/3)*x_window)"
            ))
        } else {
            None
        }
    }
}

fn on_step(t: f64, dt: f64) -> bool {
    let ratio = t / dt;
    (ratio - ratio.round()).abs() <= GRID_TOL * ratio.abs().max(1.0)
}

/// Initial datum for the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// Constant positive profile.
    Flat { c: f64 },
    /// Arbitrary positive bounded profile given per evolved site.
    Sampled { values: Vec<f64> },
    /// Unit point mass: value `1/dx` at the cell containing `x0`.
    Dirac { x0: f64 },
}

impl InitialData {
    pub fn issues(&self, grid: &GridSpec) -> Vec<GridError> {
        let mut out = Vec::new();
        match self {
            InitialData::Flat { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    out.push(GridError::BadInitialValue(*c));
                }
            }
            InitialData::Sampled { values } => {
                if values.len() != grid.n_sites() {
                    out.push(GridError::SampledLengthMismatch {
                        got: values.len(),
                        want: grid.n_sites(),
                    });
                }
                if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    out.push(GridError::BadInitialValue(bad));
                }
            }
            InitialData::Dirac { x0 } => {
                if *x0 < grid.x_min || *x0 >= grid.x_max {
                    out.push(GridError::DiracOutsideDomain(*x0, grid.x_min, grid.x_max));
                }
            }
        }
        out
    }

    /// Materialize the profile on the grid.
    pub fn realize(&self, grid: &GridSpec) -> Result<Vec<f64>, GridError> {
        if let Some(e) = self.issues(grid).into_iter().next() {
            return Err(e);
        }
        let n = grid.n_sites();
        Ok(match self {
            InitialData::Flat { c } => vec![*c; n],
            InitialData::Sampled { values } => values.clone(),
            InitialData::Dirac { x0 } => {
                let mut v = vec![0.0; n];
                let site = grid
                    .site_of_x(*x0)
                    .ok_or(GridError::DiracOutsideDomain(*x0, grid.x_min, grid.x_max))?;
                v[site] = 1.0 / grid.dx;
                v
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            InitialData::Flat { .. } => "flat",
            InitialData::Sampled { .. } => "sampled",
            InitialData::Dirac { .. } => "dirac",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_grid() -> GridSpec {
        GridSpec {
            dx: 0.1,
            dt: 0.01,
            x_min: -1.0,
            x_max: 1.0,
            boundary: Boundary::Periodic,
            scheme: Scheme::Splitting,
            t_end: 1.0,
            snapshot_times: vec![0.5, 1.0],
        }
    }

    #[test]
    fn valid_grid_has_no_issues() {
        assert!(base_grid().issues().is_empty());
    }

    #[test]
    fn cfl_boundary_case() {
        let mut g = base_grid();
        g.scheme = Scheme::ExplicitEuler;
        g.dt = g.dx * g.dx; // dt = dx^2 is allowed
        g.t_end = 0.1;
        g.snapshot_times = vec![0.1];
        assert!(g.issues().is_empty(), "{:?}", g.issues());
        g.dt = 2.0 * g.dx * g.dx; // dt = 2 dx^2 violates
        assert!(g
            .issues()
            .iter()
            .any(|e| matches!(e, GridError::CflViolated { .. })));
    }

    #[test]
    fn snapshot_rules() {
        let mut g = base_grid();
        g.snapshot_times = vec![0.005];
        assert!(matches!(
            g.issues()[0],
            GridError::SnapshotNotOnStep(_, _)
        ));
        g.snapshot_times = vec![2.0];
        assert!(matches!(
            g.issues()[0],
            GridError::SnapshotOutOfRange(_, _)
        ));
        g.snapshot_times = vec![0.5, 0.25];
        assert!(matches!(g.issues()[0], GridError::SnapshotsUnsorted));
    }

    #[test]
    fn site_layout_periodic_vs_absorbing() {
        let g = base_grid();
        assert_eq!(g.n_sites(), 20);
        assert_eq!(g.site_x(0), -1.0);
        assert_eq!(g.site_of_x(0.0), Some(10));
        let mut a = base_grid();
        a.boundary = Boundary::Absorbing;
        assert_eq!(a.n_sites(), 19);
        assert!((a.site_x(0) - -0.9).abs() < 1e-12);
        assert_eq!(a.site_of_x(-1.0), None);
    }

    #[test]
    fn dirac_realizes_unit_mass() {
        let g = base_grid();
        let v = InitialData::Dirac { x0: 0.0 }.realize(&g).unwrap();
        let mass: f64 = v.iter().sum::<f64>() * g.dx;
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
        assert_eq!(v[10], 1.0 / g.dx);
    }

    #[test]
    fn initial_data_positivity_enforced() {
        let g = base_grid();
        assert!(!InitialData::Flat { c: 0.0 }.issues(&g).is_empty());
        assert!(!InitialData::Flat { c: -1.0 }.issues(&g).is_empty());
        let bad = InitialData::Sampled {
            values: vec![1.0; 19],
        };
        assert!(matches!(
            bad.issues(&g)[0],
            GridError::SampledLengthMismatch { .. }
        ));
    }

    #[test]
    fn domain_warning_triggers() {
        let mut g = base_grid();
        g.t_end = 4.0;
        g.snapshot_times = vec![4.0];
        assert!(g.domain_size_warning(0.0).is_some()); // span 2 < 8*2
        g.x_min = -10.0;
        g.x_max = 10.0;
        assert!(g.domain_size_warning(0.0).is_none());
    }
}
