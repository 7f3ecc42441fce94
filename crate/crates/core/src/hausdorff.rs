//! Barlow-Taylor macroscopic Hausdorff content and dimension machinery.
//!
//! Shells are `S_n = V_n \ V_{n-1}` with `V_n = [0, e^n) x [-e^n, e^n)`.
//! The content `nu_{n,rho}(E)` is the infimum of `sum (side(Q_i)/e^n)^rho`
//! over covers of `E cap S_n` by boxes of side >= 1; this module computes
//! restricted-infimum upper bounds (integer corners and sides, dyadic sides
//! for the tiling strategies) plus an exact small-instance solver, the
//! integer density counter `mu_n`, and a slope-based dimension estimator.

use serde::Serialize;

use crate::cover::{self, CoverError};
use crate::level_sets::{RegionSet, SetData, SetError, SetMeta, SpaceTimeSet};
use crate::stats::{fit_line, isotonic_nonincreasing};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HausdorffError {
    #[error("shell index must be >= 1, got {0}")]
    BadShell(u32),
    #[error("gamma must lie in (0, 2), got {0}")]
    BadGamma(f64),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("shell {n} holds ~{count} pixels; too large to materialize for strategy {strategy}")]
    ShellTooLarge { n: u32, count: u64, strategy: String },
    #[error("dimension fit needs >= {need} shells in range, got {got}")]
    TooFewShells { need: usize, got: usize },
    #[error("rho grid must ascend and span [0, 2]")]
    BadRhoGrid,
    #[error("all shells in range are empty; dimension undefined")]
    EmptyShells,
}

/// Exponential shell `S_n`.
#[derive(Debug, Clone, Copy)]
pub struct Shell {
    pub n: u32,
}

impl Shell {
    pub fn outer(&self) -> f64 {
        (self.n as f64).exp()
    }
    pub fn inner(&self) -> f64 {
        ((self.n - 1) as f64).exp()
    }
    pub fn contains(&self, t: f64, x: f64) -> bool {
        let o = self.outer();
        let i = self.inner();
        let in_outer = t >= 0.0 && t < o && x >= -o && x < o;
        let in_inner = t >= 0.0 && t < i && x >= -i && x < i;
        in_outer && !in_inner
    }
}

/// Restrict a set to shell `S_n` (membership tested on original coordinates).
pub fn shell_clip(set: &SpaceTimeSet, n: u32) -> Result<SpaceTimeSet, HausdorffError> {
    if n < 1 {
        return Err(HausdorffError::BadShell(n));
    }
    let shell = Shell { n };
    let meta = SetMeta {
        source: format!("{} cap S_{n}", set.meta.source),
        ..set.meta.clone()
    };
    Ok(match &set.data {
        SetData::Real(points) => SpaceTimeSet::from_points(
            points
                .iter()
                .copied()
                .filter(|p| shell.contains(p[0], p[1]))
                .collect(),
            meta,
        ),
        SetData::Pixel(pixels) => SpaceTimeSet::from_pixels(
            pixels
                .iter()
                .copied()
                .filter(|p| shell.contains(p[0] as f64, p[1] as f64))
                .collect(),
            meta,
        ),
    })
}

/// Cover-cost strategies for `nu_content`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// True infimum over integer-corner/integer-side covers; needs at most
    /// [`cover::EXACT_SMALL_BUDGET`] pixels in the shell.
    ExactSmall,
    /// Best single dyadic tiling `r in {1, 2, ..., 2^ceil(n log2 e)}`.
    SingleScale,
    /// Greedy weighted cover over the dyadic hierarchy; never worse than
    /// single_scale.
    GreedyMultiscale,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::ExactSmall => write!(f, "exact_small"),
            Strategy::SingleScale => write!(f, "single_scale"),
            Strategy::GreedyMultiscale => write!(f, "greedy_multiscale"),
        }
    }
}

/// Anything the content machinery can measure: materialized sets and
/// implicit lattice regions.
pub trait ContentSource {
    /// Unit pixels of (the floor image of) `E cap S_n`, or `None` when the
    /// shell is too large to materialize.
    fn shell_pixels(&self, n: u32) -> Option<Vec<[i64; 2]>>;
    /// Estimated pixel count of the shell (used for error messages).
    fn shell_pixel_estimate(&self, n: u32) -> u64;
    /// Number of occupied `r`-aligned `r`-boxes covering `E cap S_n`.
    fn occupied_boxes(&self, n: u32, r: i64) -> u64;
    /// `mu_n`: integer points with `e^n < s <= e^{n+1}`, `0 <= j < e^{n(1-gamma)}`.
    fn mu_count(&self, n: u32, gamma: f64) -> Result<u64, HausdorffError>;
    fn label(&self) -> String;
}

const MATERIALIZE_CAP: u64 = 2_000_000;

impl ContentSource for SpaceTimeSet {
    fn shell_pixels(&self, n: u32) -> Option<Vec<[i64; 2]>> {
        let shell = Shell { n };
        let mut pixels: Vec<[i64; 2]> = match &self.data {
            SetData::Real(points) => points
                .iter()
                .filter(|p| shell.contains(p[0], p[1]))
                .map(|p| [p[0].floor() as i64, p[1].floor() as i64])
                .collect(),
            SetData::Pixel(pixels) => pixels
                .iter()
                .copied()
                .filter(|p| shell.contains(p[0] as f64, p[1] as f64))
                .collect(),
        };
        pixels.sort_unstable();
        pixels.dedup();
        Some(pixels)
    }

    fn shell_pixel_estimate(&self, _n: u32) -> u64 {
        self.len() as u64
    }

    fn occupied_boxes(&self, n: u32, r: i64) -> u64 {
        let pixels = self.shell_pixels(n).unwrap();
        let mut ids: Vec<(i64, i64)> = pixels
            .iter()
            .map(|p| (p[0].div_euclid(r), p[1].div_euclid(r)))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len() as u64
    }

    fn mu_count(&self, n: u32, gamma: f64) -> Result<u64, HausdorffError> {
        if !(gamma > 0.0 && gamma < 2.0) {
            return Err(HausdorffError::BadGamma(gamma));
        }
        let pixels = self.pixels()?;
        let lo = (n as f64).exp();
        let hi = ((n + 1) as f64).exp();
        let j_top = (n as f64 * (1.0 - gamma)).exp();
        Ok(pixels
            .iter()
            .filter(|p| {
                let s = p[0] as f64;
                let j = p[1] as f64;
                s > lo && s <= hi && p[1] >= 0 && j < j_top
            })
            .count() as u64)
    }

    fn label(&self) -> String {
        self.meta.source.clone()
    }
}

impl RegionSet {
    /// Occupied unit rows of the region in column `s` clipped to `S_n`,
    /// as an inclusive integer interval. All built-in regions live in
    /// `j >= 0`, so a single interval suffices.
    fn shell_rows(&self, n: u32, s: i64) -> Option<(i64, i64)> {
        let outer = (n as f64).exp();
        let inner = ((n - 1) as f64).exp();
        if s < 0 || (s as f64) >= outer {
            return None;
        }
        let top = outer.ceil() as i64 - 1; // largest j with j < e^n
        let (lo, hi) = match *self {
            RegionSet::Quadrant => (0i64, top),
            RegionSet::HorizontalLine => {
                if s < 1 {
                    return None;
                }
                (0, 0)
            }
            RegionSet::XiQ { q } => {
                if s < 1 {
                    return None;
                }
                let lo = ((s as f64).powf(q)).ceil().max(1.0) as i64;
                (lo, top)
            }
        };
        // Columns inside V_{n-1} lose the rows below e^{n-1}.
        let lo = if (s as f64) < inner {
            lo.max(inner.ceil() as i64)
        } else {
            lo
        };
        if lo > hi {
            None
        } else {
            Some((lo, hi))
        }
    }
}

impl ContentSource for RegionSet {
    fn shell_pixels(&self, n: u32) -> Option<Vec<[i64; 2]>> {
        if self.shell_pixel_estimate(n) > MATERIALIZE_CAP {
            return None;
        }
        let top = ((n as f64).exp()).ceil() as i64 - 1;
        let mut pixels = Vec::new();
        for s in 0..=top {
            if let Some((lo, hi)) = self.shell_rows(n, s) {
                for j in lo..=hi {
                    pixels.push([s, j]);
                }
            }
        }
        Some(pixels)
    }

    fn shell_pixel_estimate(&self, n: u32) -> u64 {
        let top = ((n as f64).exp()).ceil() as i64 - 1;
        let mut count: u64 = 0;
        for s in 0..=top {
            if let Some((lo, hi)) = self.shell_rows(n, s) {
                count += (hi - lo + 1) as u64;
            }
        }
        count
    }

    fn occupied_boxes(&self, n: u32, r: i64) -> u64 {
        let top_col = ((n as f64).exp()).ceil() as i64 - 1;
        let mut total: u64 = 0;
        let mut block_start = 0i64;
        while block_start <= top_col {
            let block_end = (block_start + r - 1).min(top_col);
            let mut merged: Option<(i64, i64)> = None;
            for s in block_start..=block_end {
                if let Some((lo, hi)) = self.shell_rows(n, s) {
                    merged = Some(match merged {
                        None => (lo, hi),
                        Some((a, b)) => (a.min(lo), b.max(hi)),
                    });
                }
            }
            if let Some((lo, hi)) = merged {
                total += (hi.div_euclid(r) - lo.div_euclid(r) + 1) as u64;
            }
            block_start += r;
        }
        total
    }

    fn mu_count(&self, n: u32, gamma: f64) -> Result<u64, HausdorffError> {
        if !(gamma > 0.0 && gamma < 2.0) {
            return Err(HausdorffError::BadGamma(gamma));
        }
        let lo = (n as f64).exp();
        let hi = ((n + 1) as f64).exp();
        let j_top = (n as f64 * (1.0 - gamma)).exp();
        let s_lo = lo.floor() as i64 + 1;
        let s_hi = hi.floor() as i64;
        let mut count = 0u64;
        for s in s_lo..=s_hi {
            // Row interval of the raw region (no shell clipping here; the
            // mu window is its own region).
            let rows = match *self {
                RegionSet::Quadrant => Some((0i64, i64::MAX)),
                RegionSet::HorizontalLine => {
                    if s >= 1 {
                        Some((0, 0))
                    } else {
                        None
                    }
                }
                RegionSet::XiQ { q } => {
                    if s >= 1 {
                        Some((((s as f64).powf(q)).ceil().max(1.0) as i64, i64::MAX))
                    } else {
                        None
                    }
                }
            };
            if let Some((rlo, rhi)) = rows {
                let a = rlo.max(0);
                let b = if (rhi as f64) < j_top - 1.0 {
                    rhi
                } else {
                    (j_top.ceil() as i64 - 1).min(rhi)
                };
                if b >= a {
                    count += (b - a + 1) as u64;
                }
            }
        }
        Ok(count)
    }

    fn label(&self) -> String {
        RegionSet::label(self)
    }
}

/// Dyadic tiling counts `(r, occupied boxes)` for one shell.
pub fn scale_counts(source: &impl ContentSource, n: u32) -> Vec<(i64, u64)> {
    cover::dyadic_scales(n)
        .into_iter()
        .map(|r| (r, source.occupied_boxes(n, r)))
        .collect()
}

fn single_scale_cost(counts: &[(i64, u64)], n: u32, rho: f64) -> f64 {
    let en = (n as f64).exp();
    counts
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(r, c)| *c as f64 * (*r as f64 / en).powf(rho))
        .fold(f64::INFINITY, f64::min)
        .min(f64::INFINITY)
}

/// Upper bound (exact for `ExactSmall`) on the restricted-infimum content
/// `nu_{n,rho}` of the set's intersection with shell `S_n`.
pub fn nu_content(
    source: &impl ContentSource,
    n: u32,
    rho: f64,
    strategy: Strategy,
) -> Result<f64, HausdorffError> {
    if n < 1 {
        return Err(HausdorffError::BadShell(n));
    }
    match strategy {
        Strategy::SingleScale => {
            let counts = scale_counts(source, n);
            if counts.iter().all(|(_, c)| *c == 0) {
                return Ok(0.0);
            }
            Ok(single_scale_cost(&counts, n, rho))
        }
        Strategy::GreedyMultiscale => {
            let pixels = source
                .shell_pixels(n)
                .ok_or_else(|| HausdorffError::ShellTooLarge {
                    n,
                    count: source.shell_pixel_estimate(n),
                    strategy: strategy.to_string(),
                })?;
            Ok(cover::greedy_multiscale_cover(&pixels, n, rho))
        }
        Strategy::ExactSmall => {
            let pixels = source
                .shell_pixels(n)
                .ok_or_else(|| HausdorffError::ShellTooLarge {
                    n,
                    count: source.shell_pixel_estimate(n),
                    strategy: strategy.to_string(),
                })?;
            let (cost, _) = cover::exact_small_cover(&pixels, n, rho, cover::EXACT_SMALL_BUDGET)?;
            Ok(cost)
        }
    }
}

/// `mu_n` (exact integer count per the density formula).
pub fn mu_n(source: &impl ContentSource, n: u32, gamma: f64) -> Result<u64, HausdorffError> {
    source.mu_count(n, gamma)
}

/// Density-theorem lower bound with the unknown constant reported as C = 1:
/// `e^{-(2-gamma) n} mu_n`.
pub fn density_lower_bound(
    source: &impl ContentSource,
    n: u32,
    gamma: f64,
) -> Result<f64, HausdorffError> {
    let mu = mu_n(source, n, gamma)?;
    Ok((-(2.0 - gamma) * n as f64).exp() * mu as f64)
}

/// One row of a content table export.
#[derive(Debug, Clone, Serialize)]
pub struct ContentRow {
    pub n: u32,
    pub rho: f64,
    pub nu_hat: f64,
    pub strategy: String,
    pub mu: Option<u64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ContentTable {
    pub rows: Vec<ContentRow>,
}

impl ContentTable {
    pub fn to_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,rho,nu_hat,mu_n,strategy")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                r.rho,
                r.nu_hat,
                r.mu.map(|m| m.to_string()).unwrap_or_default(),
                r.strategy
            )?;
        }
        Ok(())
    }
}

/// Per-rho growth diagnostics for the dimension fit.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeDiag {
    pub rho: f64,
    /// Raw least-squares slope of `log nu_hat` against `n`.
    pub slope: f64,
    /// After isotonic (nonincreasing in rho) regression.
    pub slope_iso: f64,
    pub slope_stderr: f64,
    pub shells_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionEstimate {
    /// Estimated dimension in [0, 2]; `None` when every shell was empty.
    pub rho_star: Option<f64>,
    pub strategy: String,
    pub n_range: (u32, u32),
    pub source: String,
    pub diagnostics: Vec<SlopeDiag>,
    pub table: ContentTable,
}

/// Slope threshold separating "content holds steady" from "content decays":
/// the dimension is read off where the fitted growth rate of `log nu` drops
/// below `-SLOPE_MARGIN` (finite-shell fits fluctuate around zero on the
/// non-decaying side).
pub const SLOPE_MARGIN: f64 = 0.05;

/// Estimate the macroscopic Hausdorff dimension from content decay rates.
///
/// For each rho the slope `b(rho)` of `log nu_{n,rho}` vs `n` is fitted over
/// `n_range`, made nonincreasing in rho by isotonic regression, and the
/// dimension is the interpolated crossing of `b = -SLOPE_MARGIN` (content
/// transitions from bounded to geometric decay at the dimension).
pub fn dimension_estimate(
    source: &impl ContentSource,
    rho_grid: &[f64],
    n_range: std::ops::RangeInclusive<u32>,
    strategy: Strategy,
) -> Result<DimensionEstimate, HausdorffError> {
    let shells: Vec<u32> = n_range.clone().collect();
    if shells.len() < 4 {
        return Err(HausdorffError::TooFewShells {
            need: 4,
            got: shells.len(),
        });
    }
    if shells[0] < 1 {
        return Err(HausdorffError::BadShell(shells[0]));
    }
    if rho_grid.len() < 3
        || rho_grid.windows(2).any(|w| w[1] <= w[0])
        || rho_grid[0] > 1e-9
        || *rho_grid.last().unwrap() < 2.0 - 1e-9
    {
        return Err(HausdorffError::BadRhoGrid);
    }

    let mut table = ContentTable::default();
    // nu values per rho across shells.
    let mut nu: Vec<Vec<(u32, f64)>> = vec![Vec::new(); rho_grid.len()];
    for &n in &shells {
        match strategy {
            Strategy::SingleScale => {
                let counts = scale_counts(source, n);
                let empty = counts.iter().all(|(_, c)| *c == 0);
                for (ri, &rho) in rho_grid.iter().enumerate() {
                    let v = if empty {
                        0.0
                    } else {
                        single_scale_cost(&counts, n, rho)
                    };
                    nu[ri].push((n, v));
                    table.rows.push(ContentRow {
                        n,
                        rho,
                        nu_hat: v,
                        strategy: strategy.to_string(),
                        mu: None,
                        gamma: None,
                    });
                }
            }
            _ => {
                for (ri, &rho) in rho_grid.iter().enumerate() {
                    let v = nu_content(source, n, rho, strategy)?;
                    nu[ri].push((n, v));
                    table.rows.push(ContentRow {
                        n,
                        rho,
                        nu_hat: v,
                        strategy: strategy.to_string(),
                        mu: None,
                        gamma: None,
                    });
                }
            }
        }
    }

    let nonempty_shells = nu[0].iter().filter(|(_, v)| *v > 0.0).count();
    if nonempty_shells == 0 {
        return Ok(DimensionEstimate {
            rho_star: None,
            strategy: strategy.to_string(),
            n_range: (shells[0], *shells.last().unwrap()),
            source: source.label(),
            diagnostics: Vec::new(),
            table,
        });
    }
    if nonempty_shells < 3 {
        return Err(HausdorffError::TooFewShells {
            need: 3,
            got: nonempty_shells,
        });
    }

    let mut diags: Vec<SlopeDiag> = Vec::with_capacity(rho_grid.len());
    for (ri, &rho) in rho_grid.iter().enumerate() {
        let xs: Vec<f64> = nu[ri]
            .iter()
            .filter(|(_, v)| *v > 0.0)
            .map(|(n, _)| *n as f64)
            .collect();
        let ys: Vec<f64> = nu[ri]
            .iter()
            .filter(|(_, v)| *v > 0.0)
            .map(|(_, v)| v.ln())
            .collect();
        let fit = fit_line(&xs, &ys).expect(">= 3 shells checked above");
        diags.push(SlopeDiag {
            rho,
            slope: fit.slope,
            slope_iso: f64::NAN,
            slope_stderr: fit.slope_stderr,
            shells_used: xs.len(),
        });
    }
    let raw: Vec<f64> = diags.iter().map(|d| d.slope).collect();
    let iso = isotonic_nonincreasing(&raw);
    for (d, &s) in diags.iter_mut().zip(&iso) {
        d.slope_iso = s;
    }

    // Crossing of b(rho) = -SLOPE_MARGIN, scanning upward in rho.
    let level = -SLOPE_MARGIN;
    let rho_star = if iso[0] < level {
        rho_grid[0]
    } else {
        let mut star = *rho_grid.last().unwrap();
        for i in 0..iso.len() - 1 {
            if iso[i] >= level && iso[i + 1] < level {
                let frac = (iso[i] - level) / (iso[i] - iso[i + 1]);
                star = rho_grid[i] + frac * (rho_grid[i + 1] - rho_grid[i]);
                break;
            }
        }
        star
    };

    Ok(DimensionEstimate {
        rho_star: Some(rho_star.clamp(0.0, 2.0)),
        strategy: strategy.to_string(),
        n_range: (shells[0], *shells.last().unwrap()),
        source: source.label(),
        diagnostics: diags,
        table,
    })
}
