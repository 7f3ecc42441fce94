//! Cole-Hopf transform and the rescaled narrow-wedge field.
//!
//! The height `h = log u` solves the KPZ equation in the Cole-Hopf sense.
//! For Dirac initial data the rescaled field is
//! `Upsilon_t(x) = (h(t, t^{2/3} x) + t/24) / t^{1/3}` on a rescaled
//! coordinate grid; parabola-adjusted functionals (`sup`, `argsup`, modulus
//! of continuity) act on that field.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::GridSpec;
use crate::sim::LatticeField;

#[derive(Debug, Error)]
pub enum KpzError {
    #[error("nonpositive value u = {value} at site {site} (x = {x}); \
             log is undefined - wrong scheme or diverged run")]
    NonpositiveValue { site: usize, x: f64, value: f64 },
    #[error("upsilon needs t > 0, got {0}")]
    NonpositiveTime(f64),
    #[error("rescaled position {xt} maps to physical {physical}, outside the simulated domain")]
    OutsideDomain { xt: f64, physical: f64 },
    #[error("window [{lo}, {hi}] contains no grid points")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("interval [{lo}, {hi}] outside the rescaled grid")]
    IntervalOutsideGrid { lo: f64, hi: f64 },
}

/// Height field `h_i = log u_i` on the simulation grid.
#[derive(Debug, Clone)]
pub struct HeightField {
    pub t: f64,
    pub values: Vec<f64>,
    pub grid: Arc<GridSpec>,
}

impl HeightField {
    pub fn x(&self, i: usize) -> f64 {
        self.grid.site_x(i)
    }

    /// Linear interpolation of `h` at physical position `x`.
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        let first = self.grid.site_x(0);
        let last = self.grid.site_x(self.values.len() - 1);
        // Tolerate round-trip float overshoot at the domain edges.
        let tol = 1e-9 * x.abs().max(1.0);
        if x < first - tol || x > last + tol {
            return None;
        }
        let pos = ((x - first) / self.grid.dx).max(0.0);
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = (pos - i as f64).min(1.0);
        Some(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }
}

/// Elementwise logarithm; errors on the first nonpositive site.
pub fn cole_hopf(field: &LatticeField) -> Result<HeightField, KpzError> {
    for (site, &v) in field.values.iter().enumerate() {
        if !(v > 0.0) {
            return Err(KpzError::NonpositiveValue {
                site,
                x: field.x(site),
                value: v,
            });
        }
    }
    Ok(HeightField {
        t: field.t,
        values: field.values.iter().map(|v| v.ln()).collect(),
        grid: field.grid.clone(),
    })
}

/// The KPZ-rescaled narrow-wedge field on a rescaled coordinate grid.
#[derive(Debug, Clone)]
pub struct UpsilonField {
    pub t: f64,
    /// Rescaled coordinates; physical position is `t^{2/3} * xt`.
    pub xt: Vec<f64>,
    pub values: Vec<f64>,
}

impl UpsilonField {
    /// Construct directly from samples (used by tests and synthetic fields).
    pub fn from_samples(t: f64, xt: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(xt.len(), values.len());
        UpsilonField { t, xt, values }
    }

    pub fn value_at(&self, xt: f64) -> Option<f64> {
        let (first, last) = (*self.xt.first()?, *self.xt.last()?);
        let tol = 1e-9 * xt.abs().max(1.0);
        if xt < first - tol || xt > last + tol || self.xt.len() < 2 {
            return None;
        }
        let step = self.xt[1] - self.xt[0];
        let pos = ((xt - first) / step).max(0.0);
        let i = (pos.floor() as usize).min(self.xt.len() - 2);
        let frac = (pos - i as f64).min(1.0);
        Some(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }
}

/// Rescale a narrow-wedge height field onto the given rescaled grid.
///
/// `Upsilon_t(xt) = (h(t, t^{2/3} xt) + t/24) / t^{1/3}` with linear
/// interpolation of `h` at off-grid physical positions.
pub fn upsilon(height: &HeightField, xt: &[f64]) -> Result<UpsilonField, KpzError> {
    let t = height.t;
    if !(t > 0.0) {
        return Err(KpzError::NonpositiveTime(t));
    }
    let space_scale = t.powf(2.0 / 3.0);
    let value_scale = t.powf(1.0 / 3.0);
    let shift = t / 24.0;
    let mut values = Vec::with_capacity(xt.len());
    for &x in xt {
        let physical = space_scale * x;
        let h = height
            .interpolate(physical)
            .ok_or(KpzError::OutsideDomain { xt: x, physical })?;
        values.push((h + shift) / value_scale);
    }
    Ok(UpsilonField {
        t,
        xt: xt.to_vec(),
        values,
    })
}

/// Uniform rescaled grid spanning `[-xt_max, xt_max]` with `2 half_points + 1` nodes.
pub fn symmetric_grid(xt_max: f64, half_points: usize) -> Vec<f64> {
    let n = half_points as i64;
    (-n..=n).map(|i| xt_max * i as f64 / n as f64).collect()
}

/// Maximum of `Upsilon + nu x^2 / 2` over grid points in `[lo, hi]`,
/// together with the leftmost maximizer.
pub fn sup_parabola_on(
    ups: &UpsilonField,
    nu: f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64), KpzError> {
    let mut best: Option<(f64, f64)> = None;
    for (&x, &v) in ups.xt.iter().zip(&ups.values) {
        if x < lo || x > hi {
            continue;
        }
        let val = v + nu * x * x / 2.0;
        match best {
            Some((b, _)) if val <= b => {}
            _ => best = Some((val, x)),
        }
    }
    best.ok_or(KpzError::EmptyWindow { lo, hi })
}

/// `sup_parabola` over the symmetric window `[-m, m]`.
pub fn sup_parabola(ups: &UpsilonField, nu: f64, m: f64) -> Result<(f64, f64), KpzError> {
    sup_parabola_on(ups, nu, -m, m)
}

/// Modulus-of-continuity deviation: the sup over `[a, a + half_len]` of
/// `|Upsilon(x) + x^2/2 - Upsilon(a) - a^2/2|`.
///
/// Evaluated at every grid node inside the interval plus the linearly
/// interpolated endpoints, which is exact for the piecewise-linear model.
pub fn modulus_deviation(ups: &UpsilonField, a: f64, half_len: f64) -> Result<f64, KpzError> {
    let b = a + half_len;
    let parab = |x: f64, v: f64| v + x * x / 2.0;
    let base = parab(
        a,
        ups.value_at(a)
            .ok_or(KpzError::IntervalOutsideGrid { lo: a, hi: b })?,
    );
    let end = parab(
        b,
        ups.value_at(b)
            .ok_or(KpzError::IntervalOutsideGrid { lo: a, hi: b })?,
    );
    let mut dev = (end - base).abs().max(0.0);
    for (&x, &v) in ups.xt.iter().zip(&ups.values) {
        if x >= a && x <= b {
            dev = dev.max((parab(x, v) - base).abs());
        }
    }
    Ok(dev)
}
