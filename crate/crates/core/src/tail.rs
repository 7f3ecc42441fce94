//! Monte Carlo tail probabilities, exponent fits, and distributional tests:
//! one-point and box tail events, rescaled-field sup/argsup/modulus events,
//! moment Lyapunov slopes, the convolution identity check, and the FKG
//! inequality check.
//!
//! Every estimator is a pure function of (config, master seed): trajectories
//! are generated per stream id, per-trajectory statistics are collected in
//! stream order, and reductions run sequentially over that ordered vector, so
//! results do not depend on the worker count or schedule.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridSpec, InitialData};
use crate::kpz::{cole_hopf, modulus_deviation, sup_parabola, upsilon, UpsilonField};
use crate::noise::NoiseStream;
use crate::sim::{solve, solve_with_observer, NoiseDrive, SimError, Trajectory};
use crate::stats::{
    fit_line, isotonic_nonincreasing, ks_statistic_two_sample, ks_two_sample_p_value, mean_var,
    wilson_interval, LineFit, Z_95,
};

#[derive(Debug, Error)]
pub enum TailError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Kpz(#[from] crate::kpz::KpzError),
    #[error("ensemble size must be >= {need}, got {got}")]
    EnsembleTooSmall { got: u64, need: u64 },
    #[error("sweep value list is empty")]
    EmptySweep,
    #[error("no snapshot at t = {0}; add it to snapshot_times")]
    SnapshotMissing(f64),
    #[error("parameter out of range: {0}")]
    BadParam(String),
    #[error("event needs dirac initial data (the rescaled field is defined for the narrow wedge)")]
    NeedsDirac,
    #[error("moment estimation needs flat initial data u0 = 1")]
    NeedsUnitFlat,
    #[error("moment order k must be in 1..=3, got {0} (higher moments have exploding MC variance)")]
    BadMomentOrder(u32),
    #[error("exponent fit needs >= {need} usable rows (hits >= 10, 0 < p < 1), got {got}")]
    InsufficientRows { got: usize, need: usize },
    #[error("interval degenerate: [{lo}, {hi}] holds fewer than 2 grid points")]
    DegenerateInterval { lo: f64, hi: f64 },
    #[error("intervals [{0}, {1}] and [{2}, {3}] are not disjoint")]
    IntervalsOverlap(f64, f64, f64, f64),
    #[error("window half-width {window} too small; need >= {need}")]
    WindowTooSmall { window: f64, need: f64 },
    #[error("domain too small for the convolution integral: truncation mass {frac:.4} > 0.01")]
    TruncationMass { frac: f64 },
    #[error("convolution test needs t >= 0.5, got {0}")]
    ConvTooEarly(f64),
    #[error("all rows were dropped (relative stderr > 50%)")]
    AllRowsDropped,
}

/// Ensemble description: one grid + initial datum, `n` trajectories driven by
/// streams `first_stream .. first_stream + n` under one master seed.
#[derive(Debug, Clone)]
pub struct EnsembleParams {
    pub grid: Arc<GridSpec>,
    pub init: InitialData,
    pub master_seed: u64,
    pub n: u64,
    pub first_stream: u64,
    pub workers: Option<usize>,
}

impl EnsembleParams {
    pub fn new(grid: Arc<GridSpec>, init: InitialData, master_seed: u64, n: u64) -> Self {
        EnsembleParams {
            grid,
            init,
            master_seed,
            n,
            first_stream: 0,
            workers: None,
        }
    }

    fn validate(&self, min_n: u64) -> Result<(), TailError> {
        self.grid.validate().map_err(SimError::from)?;
        if let Some(e) = self.init.issues(&self.grid).into_iter().next() {
            return Err(TailError::Sim(e.into()));
        }
        if self.n < min_n {
            return Err(TailError::EnsembleTooSmall {
                got: self.n,
                need: min_n,
            });
        }
        Ok(())
    }
}

pub fn with_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(w) if w > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

/// Per-trajectory map over the ensemble; `None` entries are diverged runs.
pub struct EnsembleOutcome<T> {
    pub per_traj: Vec<Option<T>>,
    pub censored: u64,
}

pub fn map_trajectories<T, F>(params: &EnsembleParams, eval: F) -> EnsembleOutcome<T>
where
    T: Send,
    F: Fn(&Trajectory) -> T + Sync,
{
    let per_traj: Vec<Option<T>> = with_pool(params.workers, || {
        (0..params.n)
            .into_par_iter()
            .map(|i| {
                let stream = NoiseStream::new(params.master_seed, params.first_stream + i);
                let drive = NoiseDrive::full(stream);
                let traj = solve(&params.grid, &params.init, Some(&drive))
                    .expect("params validated before ensemble run");
                if traj.diverged {
                    None
                } else {
                    Some(eval(&traj))
                }
            })
            .collect()
    });
    let censored = per_traj.iter().filter(|v| v.is_none()).count() as u64;
    EnsembleOutcome {
        per_traj,
        censored,
    }
}

/// Rare-event specifications. The swept parameter of each family is the one
/// its proposition sweeps: `gamma` for one-point events, `s` for
/// rescaled-field events, `M` for argsup localization, the time corner `a`
/// for box events.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    /// `u(t, x) <= e^{-gamma t}`
    OnePointLower { t: f64, x: f64, gamma: f64 },
    /// `u(t, x) > e^{-gamma t}`
    OnePointUpper { t: f64, x: f64, gamma: f64 },
    /// `Upsilon_t(x) + x^2/2 <= -s` (x in rescaled coordinates)
    UpsilonLower { t: f64, x: f64, s: f64 },
    /// `Upsilon_t(x) + x^2/2 >= s`
    UpsilonUpper { t: f64, x: f64, s: f64 },
    /// `sup_{|x| <= window} (Upsilon_t + nu x^2/2) >= s`
    SupParabolaUpper { t: f64, nu: f64, window: f64, s: f64 },
    /// `sup_{|x| <= window} (Upsilon_t + nu x^2/2) <= -s`
    SupParabolaLower { t: f64, nu: f64, window: f64, s: f64 },
    /// `argsup (Upsilon_t + nu x^2/2) outside [-m, m]`
    ArgsupOutside { t: f64, nu: f64, m: f64 },
    /// `sup_{[a, a + eps sqrt(s)/16]} |Upsilon_t(x) + x^2/2 - Upsilon_t(a) - a^2/2| >= sqrt(eps) s`
    ModulusExceed { t: f64, a: f64, eps: f64, s: f64 },
    /// `exists (t, x) in (a, a+l1] x (b, b+l2] with u(t, x) < e^{-gamma t}`
    BoxInf {
        gamma: f64,
        a: f64,
        b: f64,
        l1: f64,
        l2: f64,
    },
}

impl EventSpec {
    pub fn with_swept(&self, v: f64) -> EventSpec {
        let mut e = self.clone();
        match &mut e {
            EventSpec::OnePointLower { gamma, .. } | EventSpec::OnePointUpper { gamma, .. } => {
                *gamma = v
            }
            EventSpec::UpsilonLower { s, .. }
            | EventSpec::UpsilonUpper { s, .. }
            | EventSpec::SupParabolaUpper { s, .. }
            | EventSpec::SupParabolaLower { s, .. }
            | EventSpec::ModulusExceed { s, .. } => *s = v,
            EventSpec::ArgsupOutside { m, .. } => *m = v,
            EventSpec::BoxInf { a, .. } => *a = v,
        }
        e
    }

    pub fn sweep_name(&self) -> &'static str {
        match self {
            EventSpec::OnePointLower { .. } | EventSpec::OnePointUpper { .. } => "gamma",
            EventSpec::ArgsupOutside { .. } => "M",
            EventSpec::BoxInf { .. } => "a",
            _ => "s",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EventSpec::OnePointLower { .. } => "one_point_lower",
            EventSpec::OnePointUpper { .. } => "one_point_upper",
            EventSpec::UpsilonLower { .. } => "upsilon_lower",
            EventSpec::UpsilonUpper { .. } => "upsilon_upper",
            EventSpec::SupParabolaUpper { .. } => "sup_parabola_upper",
            EventSpec::SupParabolaLower { .. } => "sup_parabola_lower",
            EventSpec::ArgsupOutside { .. } => "argsup_outside",
            EventSpec::ModulusExceed { .. } => "modulus_exceed",
            EventSpec::BoxInf { .. } => "box_inf",
        }
    }

    fn needs_upsilon(&self) -> bool {
        matches!(
            self,
            EventSpec::UpsilonLower { .. }
                | EventSpec::UpsilonUpper { .. }
                | EventSpec::SupParabolaUpper { .. }
                | EventSpec::SupParabolaLower { .. }
                | EventSpec::ArgsupOutside { .. }
                | EventSpec::ModulusExceed { .. }
        )
    }

    fn time(&self) -> Option<f64> {
        match self {
            EventSpec::OnePointLower { t, .. }
            | EventSpec::OnePointUpper { t, .. }
            | EventSpec::UpsilonLower { t, .. }
            | EventSpec::UpsilonUpper { t, .. }
            | EventSpec::SupParabolaUpper { t, .. }
            | EventSpec::SupParabolaLower { t, .. }
            | EventSpec::ArgsupOutside { t, .. }
            | EventSpec::ModulusExceed { t, .. } => Some(*t),
            EventSpec::BoxInf { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub param: f64,
    pub hits: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Frequency estimates with Wilson 95% intervals over one swept parameter.
#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub event: String,
    pub param_name: String,
    pub rows: Vec<TailRow>,
    pub n_requested: u64,
    pub censored: u64,
    pub master_seed: u64,
}

impl TailCurve {
    pub fn from_counts(
        event: String,
        param_name: String,
        sweep: &[f64],
        hits: &[u64],
        n_effective: u64,
        n_requested: u64,
        censored: u64,
        master_seed: u64,
    ) -> TailCurve {
        let rows = sweep
            .iter()
            .zip(hits)
            .map(|(&param, &h)| {
                let (lo, hi) = wilson_interval(h, n_effective.max(1), Z_95);
                TailRow {
                    param,
                    hits: h,
                    n: n_effective,
                    p_hat: h as f64 / n_effective.max(1) as f64,
                    ci_low: lo,
                    ci_high: hi,
                }
            })
            .collect();
        TailCurve {
            event,
            param_name,
            rows,
            n_requested,
            censored,
            master_seed,
        }
    }

    pub fn to_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},hits,n,p_hat,ci_low,ci_high", self.param_name)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.param, r.hits, r.n, r.p_hat, r.ci_low, r.ci_high
            )?;
        }
        Ok(())
    }
}

/// Rescaled-grid view shared by the Upsilon-event evaluators: the physical
/// nodes mapped to rescaled coordinates (no interpolation error at nodes).
fn upsilon_on_native_grid(traj: &Trajectory, t: f64) -> Result<UpsilonField, TailError> {
    let snap = traj
        .snapshot_at(t)
        .ok_or(TailError::SnapshotMissing(t))?;
    let h = cole_hopf(snap)?;
    let scale = t.powf(2.0 / 3.0);
    let xt: Vec<f64> = (0..traj.grid.n_sites())
        .map(|i| traj.grid.site_x(i) / scale)
        .collect();
    Ok(upsilon(&h, &xt)?)
}

fn validate_event(params: &EnsembleParams, event: &EventSpec, sweep: &[f64]) -> Result<(), TailError> {
    if sweep.is_empty() {
        return Err(TailError::EmptySweep);
    }
    if event.needs_upsilon() && !matches!(params.init, InitialData::Dirac { .. }) {
        return Err(TailError::NeedsDirac);
    }
    if let Some(t) = event.time() {
        if params.grid.step_of_time(t).is_none()
            || !params
                .grid
                .snapshot_times
                .iter()
                .any(|&st| (st - t).abs() < 1e-9 * t.abs().max(1.0))
        {
            return Err(TailError::SnapshotMissing(t));
        }
    }
    match event {
        EventSpec::OnePointLower { x, gamma, .. } | EventSpec::OnePointUpper { x, gamma, .. } => {
            for &g in std::iter::once(gamma).chain(sweep) {
                if !(g > 0.0) {
                    return Err(TailError::BadParam(format!(
                        "gamma > 0 required, got {g}"
                    )));
                }
            }
            if params.grid.site_of_x(*x).is_none() {
                return Err(TailError::BadParam(format!("x = {x} not on the grid")));
            }
        }
        EventSpec::SupParabolaUpper { nu, window, t, .. }
        | EventSpec::SupParabolaLower { nu, window, t, .. } => {
            if !(*nu >= 0.0 && *nu < 1.0) {
                return Err(TailError::BadParam(format!("nu in [0,1) required, got {nu}")));
            }
            check_rescaled_reach(params, *t, *window)?;
        }
        EventSpec::ArgsupOutside { nu, .. } => {
            if !(*nu >= 0.0 && *nu < 1.0) {
                return Err(TailError::BadParam(format!("nu in [0,1) required, got {nu}")));
            }
        }
        EventSpec::UpsilonLower { x, t, .. } | EventSpec::UpsilonUpper { x, t, .. } => {
            check_rescaled_reach(params, *t, x.abs())?;
        }
        EventSpec::ModulusExceed { t, a, eps, .. } => {
            if !(*eps > 0.0) {
                return Err(TailError::BadParam(format!("eps > 0 required, got {eps}")));
            }
            let scale = t.powf(2.0 / 3.0);
            for &s in sweep {
                let len = eps * s.max(0.0).sqrt() / 16.0;
                // Degenerate when the physical interval spans < 2 grid nodes.
                if len * scale < params.grid.dx {
                    return Err(TailError::DegenerateInterval { lo: *a, hi: a + len });
                }
                check_rescaled_reach(params, *t, a.abs().max((a + len).abs()))?;
            }
        }
        EventSpec::BoxInf {
            gamma,
            a: _,
            b,
            l1,
            l2,
        } => {
            if !(*gamma > 1.0 / 24.0) {
                return Err(TailError::BadParam(format!(
                    "box events need gamma > 1/24, got {gamma}"
                )));
            }
            for &a in sweep {
                if !(a > 0.0) || a + l1 > params.grid.t_end * (1.0 + 1e-12) {
                    return Err(TailError::BadParam(format!(
                        "box time range ({a}, {}] outside (0, t_end]",
                        a + l1
                    )));
                }
            }
            if *b < params.grid.x_min || b + l2 > params.grid.x_max {
                return Err(TailError::BadParam(format!(
                    "box space range ({b}, {}] outside domain",
                    b + l2
                )));
            }
        }
    }
    Ok(())
}

fn rescaled_half_window(params: &EnsembleParams, t: f64) -> f64 {
    let scale = t.powf(2.0 / 3.0);
    (params.grid.x_max - params.grid.dx).min(-params.grid.x_min) / scale
}

fn check_rescaled_reach(params: &EnsembleParams, t: f64, xt_abs: f64) -> Result<(), TailError> {
    let half = rescaled_half_window(params, t);
    if xt_abs > half {
        return Err(TailError::BadParam(format!(
            "rescaled coordinate {xt_abs} beyond simulated window {half}"
        )));
    }
    Ok(())
}

/// Frequency estimates for `event` across `sweep`, one shared ensemble.
pub fn estimate_tail(
    params: &EnsembleParams,
    event: &EventSpec,
    sweep: &[f64],
) -> Result<TailCurve, TailError> {
    params.validate(100)?;
    validate_event(params, event, sweep)?;
    if let EventSpec::BoxInf { .. } = event {
        return box_inf_curve(params, event, sweep);
    }
    let outcome = map_trajectories(params, |traj| -> Vec<bool> {
        match event {
            EventSpec::OnePointLower { t, x, .. } | EventSpec::OnePointUpper { t, x, .. } => {
                let snap = traj.snapshot_at(*t).expect("validated");
                let u = snap.values[traj.grid.site_of_x(*x).expect("validated")];
                let upper = matches!(event, EventSpec::OnePointUpper { .. });
                sweep
                    .iter()
                    .map(|&g| {
                        let thr = (-g * t).exp();
                        if upper {
                            u > thr
                        } else {
                            u <= thr
                        }
                    })
                    .collect()
            }
            EventSpec::UpsilonLower { t, x, .. } | EventSpec::UpsilonUpper { t, x, .. } => {
                let ups = upsilon_on_native_grid(traj, *t).expect("validated");
                let v = ups.value_at(*x).expect("validated") + x * x / 2.0;
                let upper = matches!(event, EventSpec::UpsilonUpper { .. });
                sweep
                    .iter()
                    .map(|&s| if upper { v >= s } else { v <= -s })
                    .collect()
            }
            EventSpec::SupParabolaUpper { t, nu, window, .. }
            | EventSpec::SupParabolaLower { t, nu, window, .. } => {
                let ups = upsilon_on_native_grid(traj, *t).expect("validated");
                let (sup, _) = sup_parabola(&ups, *nu, *window).expect("validated");
                let upper = matches!(event, EventSpec::SupParabolaUpper { .. });
                sweep
                    .iter()
                    .map(|&s| if upper { sup >= s } else { sup <= -s })
                    .collect()
            }
            EventSpec::ArgsupOutside { t, nu, .. } => {
                let ups = upsilon_on_native_grid(traj, *t).expect("validated");
                let half = rescaled_half_window(params, *t);
                let (_, arg) = sup_parabola(&ups, *nu, half).expect("validated");
                sweep.iter().map(|&m| arg.abs() > m).collect()
            }
            EventSpec::ModulusExceed { t, a, eps, .. } => {
                let ups = upsilon_on_native_grid(traj, *t).expect("validated");
                sweep
                    .iter()
                    .map(|&s| {
                        let len = eps * s.sqrt() / 16.0;
                        let dev = modulus_deviation(&ups, *a, len).expect("validated");
                        dev >= eps.sqrt() * s
                    })
                    .collect()
            }
            EventSpec::BoxInf { .. } => unreachable!("handled above"),
        }
    });
    Ok(curve_from_outcome(params, event, sweep, outcome))
}

fn curve_from_outcome(
    params: &EnsembleParams,
    event: &EventSpec,
    sweep: &[f64],
    outcome: EnsembleOutcome<Vec<bool>>,
) -> TailCurve {
    let mut hits = vec![0u64; sweep.len()];
    let mut effective = 0u64;
    for row in outcome.per_traj.iter().flatten() {
        effective += 1;
        for (h, &b) in hits.iter_mut().zip(row) {
            *h += b as u64;
        }
    }
    TailCurve::from_counts(
        event.label().to_string(),
        event.sweep_name().to_string(),
        sweep,
        &hits,
        effective,
        params.n,
        outcome.censored,
        params.master_seed,
    )
}

/// Streaming evaluator for box events: scans every time step in the union of
/// the swept boxes without materializing snapshots.
fn box_inf_curve(
    params: &EnsembleParams,
    event: &EventSpec,
    sweep: &[f64],
) -> Result<TailCurve, TailError> {
    let EventSpec::BoxInf {
        gamma, b, l1, l2, ..
    } = event.clone()
    else {
        unreachable!()
    };
    let grid = &params.grid;
    // Site range of (b, b + l2]; a zero-width box means the single column at b.
    let sites: Vec<usize> = (0..grid.n_sites())
        .filter(|&i| {
            let x = grid.site_x(i);
            if l2 > 0.0 {
                x > b && x <= b + l2
            } else {
                (x - b).abs() < grid.dx / 2.0
            }
        })
        .collect();
    if sites.is_empty() {
        return Err(TailError::BadParam(format!(
            "no grid sites in ({b}, {}]",
            b + l2
        )));
    }
    let in_time = |a: f64, t: f64| -> bool {
        if l1 > 0.0 {
            t > a && t <= a + l1
        } else {
            (t - a).abs() < grid.dt / 2.0
        }
    };
    let per_traj: Vec<Option<Vec<bool>>> = with_pool(params.workers, || {
        (0..params.n)
            .into_par_iter()
            .map(|i| {
                let stream = NoiseStream::new(params.master_seed, params.first_stream + i);
                let drive = NoiseDrive::full(stream);
                let mut flags = vec![false; sweep.len()];
                let status = solve_with_observer(grid, &params.init, Some(&drive), |_, t, values| {
                    if t <= 0.0 {
                        return;
                    }
                    let relevant = sweep.iter().any(|&a| in_time(a, t));
                    if !relevant {
                        return;
                    }
                    let min = sites
                        .iter()
                        .map(|&i| values[i])
                        .fold(f64::INFINITY, f64::min);
                    if min < (-gamma * t).exp() {
                        for (flag, &a) in flags.iter_mut().zip(sweep) {
                            if in_time(a, t) {
                                *flag = true;
                            }
                        }
                    }
                })
                .expect("validated");
                if status.diverged {
                    None
                } else {
                    Some(flags)
                }
            })
            .collect()
    });
    let censored = per_traj.iter().filter(|v| v.is_none()).count() as u64;
    Ok(curve_from_outcome(
        params,
        event,
        sweep,
        EnsembleOutcome {
            per_traj,
            censored,
        },
    ))
}

/// Stretched-exponential fit `p(s) ~ exp(-c s^alpha)` via least squares of
/// `log(-log p)` on `log s`.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub alpha: f64,
    pub c: f64,
    pub alpha_stderr: f64,
    pub r_squared: f64,
    pub rows_used: usize,
    pub s_range: (f64, f64),
}

pub fn fit_exponent(curve: &TailCurve) -> Result<ExponentFit, TailError> {
    let usable: Vec<&TailRow> = curve
        .rows
        .iter()
        .filter(|r| r.hits >= 10 && r.p_hat > 0.0 && r.p_hat < 1.0 && r.param > 0.0)
        .collect();
    if usable.len() < 4 {
        return Err(TailError::InsufficientRows {
            got: usable.len(),
            need: 4,
        });
    }
    let xs: Vec<f64> = usable.iter().map(|r| r.param.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| (-r.p_hat.ln()).ln()).collect();
    let fit = fit_line(&xs, &ys).expect(">= 4 rows");
    Ok(ExponentFit {
        alpha: fit.slope,
        c: fit.intercept.exp(),
        alpha_stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
        rows_used: usable.len(),
        s_range: (usable[0].param, usable[usable.len() - 1].param),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub rel_stderr: f64,
    /// Effective-sample diagnostic `mean(u^{2k}) / mean(u^k)^2 / N`.
    pub ess_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub k: u32,
    pub rows: Vec<MomentRow>,
    pub dropped: Vec<f64>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub fit: Option<LineFitOut>,
    pub n: u64,
    pub censored: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineFitOut {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

impl From<LineFit> for LineFitOut {
    fn from(f: LineFit) -> Self {
        LineFitOut {
            slope: f.slope,
            intercept: f.intercept,
            slope_stderr: f.slope_stderr,
            r_squared: f.r_squared,
        }
    }
}

/// Regression slopes of `log E[u(t,0)^k]` against `t` with bootstrap CIs,
/// for several moment orders from one shared ensemble.
///
/// Rows whose relative standard error exceeds 50% are dropped (and listed);
/// their estimates would be meaningless at this ensemble size.
pub fn moment_lyapunov_multi(
    params: &EnsembleParams,
    ks: &[u32],
    t_grid: &[f64],
) -> Result<Vec<MomentReport>, TailError> {
    params.validate(100)?;
    for &k in ks {
        if !(1..=3).contains(&k) {
            return Err(TailError::BadMomentOrder(k));
        }
    }
    match params.init {
        InitialData::Flat { c } if (c - 1.0).abs() < 1e-12 => {}
        _ => return Err(TailError::NeedsUnitFlat),
    }
    for &t in t_grid {
        if !params
            .grid
            .snapshot_times
            .iter()
            .any(|&st| (st - t).abs() < 1e-9 * t.abs().max(1.0))
        {
            return Err(TailError::SnapshotMissing(t));
        }
    }
    let site = params.grid.site_of_x(0.0).ok_or_else(|| {
        TailError::BadParam("grid does not contain x = 0".into())
    })?;
    let outcome = map_trajectories(params, |traj| -> Vec<f64> {
        t_grid
            .iter()
            .map(|&t| traj.snapshot_at(t).expect("validated").values[site])
            .collect()
    });
    let samples: Vec<&Vec<f64>> = outcome.per_traj.iter().flatten().collect();
    let n_eff = samples.len() as f64;
    if samples.is_empty() {
        return Err(TailError::AllRowsDropped);
    }

    let mut reports = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut rows = Vec::new();
        let mut dropped = Vec::new();
        let mut fit_ts = Vec::new();
        let mut fit_logs = Vec::new();
        for (ti, &t) in t_grid.iter().enumerate() {
            let vals: Vec<f64> = samples.iter().map(|s| s[ti].powi(k as i32)).collect();
            let (mean, var) = mean_var(&vals);
            let stderr = (var / n_eff).sqrt();
            let rel = if mean > 0.0 { stderr / mean } else { f64::INFINITY };
            let m2k = vals.iter().map(|v| v * v).sum::<f64>() / n_eff;
            let ess = if mean > 0.0 {
                m2k / (mean * mean) / n_eff
            } else {
                f64::INFINITY
            };
            let row = MomentRow {
                t,
                mean,
                stderr,
                rel_stderr: rel,
                ess_ratio: ess,
            };
            if rel > 0.5 {
                dropped.push(t);
            } else {
                fit_ts.push(t);
                fit_logs.push(mean.ln());
            }
            rows.push(row);
        }
        if fit_ts.len() < 2 {
            return Err(TailError::AllRowsDropped);
        }
        let fit = fit_line(&fit_ts, &fit_logs);
        let slope = fit.map(|f| f.slope).unwrap_or(f64::NAN);

        // Bootstrap over trajectories (percentile CI, deterministic resampler).
        let boot_stream = NoiseStream::new(params.master_seed ^ 0xB007_57A7, k as u64);
        let n_boot = 200u64;
        let mut slopes = Vec::with_capacity(n_boot as usize);
        let kept_idx: Vec<usize> = t_grid
            .iter()
            .enumerate()
            .filter(|(_, t)| !dropped.contains(t))
            .map(|(i, _)| i)
            .collect();
        for bi in 0..n_boot {
            let mut sums = vec![0.0; kept_idx.len()];
            for draw in 0..samples.len() {
                let u = boot_stream.uniform(bi, draw as u64);
                let pick = ((u * n_eff) as usize).min(samples.len() - 1);
                for (si, &ti) in kept_idx.iter().enumerate() {
                    sums[si] += samples[pick][ti].powi(k as i32);
                }
            }
            let ts: Vec<f64> = kept_idx.iter().map(|&i| t_grid[i]).collect();
            let logs: Vec<f64> = sums
                .iter()
                .map(|s| (s / n_eff).max(f64::MIN_POSITIVE).ln())
                .collect();
            if let Some(f) = fit_line(&ts, &logs) {
                slopes.push(f.slope);
            }
        }
        slopes.sort_by(|a, b| a.total_cmp(b));
        let ci = if slopes.len() >= 40 {
            let lo = slopes[(slopes.len() as f64 * 0.025) as usize];
            let hi = slopes[((slopes.len() as f64 * 0.975) as usize).min(slopes.len() - 1)];
            (lo, hi)
        } else {
            (f64::NAN, f64::NAN)
        };

        reports.push(MomentReport {
            k,
            rows,
            dropped,
            slope,
            slope_ci: ci,
            fit: fit.map(Into::into),
            n: params.n,
            censored: outcome.censored,
        });
    }
    Ok(reports)
}

/// Single-order convenience wrapper around [`moment_lyapunov_multi`].
pub fn moment_lyapunov(
    params: &EnsembleParams,
    k: u32,
    t_grid: &[f64],
) -> Result<MomentReport, TailError> {
    Ok(moment_lyapunov_multi(params, &[k], t_grid)?.remove(0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionReport {
    pub t: f64,
    pub n: u64,
    pub ks_distance: f64,
    pub p_value: f64,
    pub truncation_mass: f64,
    pub direct_mean: f64,
    pub integral_mean: f64,
    pub censored: u64,
}

/// Two-sample check of the convolution identity: `log u(t, 0)` from direct
/// bounded-data solves against `log integral u0(-y) u_nw(t, y) dy` from
/// independent narrow-wedge solves.
pub fn convolution_test(
    grid: &Arc<GridSpec>,
    u0: &InitialData,
    t: f64,
    n: u64,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<ConvolutionReport, TailError> {
    if t < 0.5 {
        return Err(TailError::ConvTooEarly(t));
    }
    if matches!(u0, InitialData::Dirac { .. }) {
        return Err(TailError::BadParam(
            "convolution test needs bounded positive u0".into(),
        ));
    }
    let direct_params = EnsembleParams {
        grid: grid.clone(),
        init: u0.clone(),
        master_seed,
        n,
        first_stream: 0,
        workers,
    };
    direct_params.validate(100)?;
    let site0 = grid
        .site_of_x(0.0)
        .ok_or_else(|| TailError::BadParam("grid does not contain x = 0".into()))?;
    let direct = map_trajectories(&direct_params, |traj| {
        traj.snapshot_at(t).expect("validated").values[site0].ln()
    });

    // Narrow-wedge side on disjoint streams.
    let wedge_params = EnsembleParams {
        grid: grid.clone(),
        init: InitialData::Dirac { x0: 0.0 },
        master_seed,
        n,
        first_stream: n,
        workers,
    };
    let u0_values = u0.realize(grid).expect("validated");
    let n_sites = grid.n_sites();
    let outer_band = (n_sites as f64 * 0.05).ceil() as usize;
    let wedge = map_trajectories(&wedge_params, |traj| {
        let snap = traj.snapshot_at(t).expect("validated");
        let mut integral = 0.0;
        let mut mass = 0.0;
        let mut outer = 0.0;
        for (j, &u) in snap.values.iter().enumerate() {
            // u0(0 - y_j) with periodic index reflection.
            let refl = (n_sites - j) % n_sites;
            integral += u0_values[refl] * u;
            mass += u;
            if j < outer_band || j + outer_band >= n_sites {
                outer += u;
            }
        }
        ((integral * grid.dx).ln(), outer / mass.max(f64::MIN_POSITIVE))
    });

    let a: Vec<f64> = direct.per_traj.iter().flatten().copied().collect();
    let b: Vec<f64> = wedge.per_traj.iter().flatten().map(|v| v.0).collect();
    let fracs: Vec<f64> = wedge.per_traj.iter().flatten().map(|v| v.1).collect();
    let truncation = fracs.iter().sum::<f64>() / fracs.len().max(1) as f64;
    if truncation > 0.01 {
        return Err(TailError::TruncationMass { frac: truncation });
    }
    let d = ks_statistic_two_sample(&a, &b);
    let p = ks_two_sample_p_value(d, a.len(), b.len());
    Ok(ConvolutionReport {
        t,
        n,
        ks_distance: d,
        p_value: p,
        truncation_mass: truncation,
        direct_mean: mean_var(&a).0,
        integral_mean: mean_var(&b).0,
        censored: direct.censored + wedge.censored,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FkgReport {
    pub s_used: f64,
    pub p_joint: f64,
    pub p1: f64,
    pub p2: f64,
    pub product: f64,
    /// `p_joint - p1 p2`, the quantity the inequality bounds below by 0.
    pub difference: f64,
    pub stderr: f64,
    pub z: f64,
    pub conclusive: bool,
    pub n: u64,
    pub censored: u64,
}

/// FKG positive-association check: joint lower-tail sup probability over two
/// disjoint intervals against the product of marginals.
///
/// With `s = None` the threshold is tuned from the same ensemble (mean of the
/// two marginal medians) so the marginals land near one half.
pub fn fkg_test(
    params: &EnsembleParams,
    t: f64,
    interval1: (f64, f64),
    interval2: (f64, f64),
    nu: f64,
    s: Option<f64>,
) -> Result<FkgReport, TailError> {
    params.validate(100)?;
    if !matches!(params.init, InitialData::Dirac { .. }) {
        return Err(TailError::NeedsDirac);
    }
    if !(nu > 0.0 && nu < 1.0) {
        return Err(TailError::BadParam(format!("nu in (0,1) required, got {nu}")));
    }
    let (a, b) = interval1;
    let (c, d) = interval2;
    if !(a < b && c < d) {
        return Err(TailError::BadParam("intervals must be nondegenerate".into()));
    }
    if b > c && d > a {
        if !(b <= c || d <= a) {
            return Err(TailError::IntervalsOverlap(a, b, c, d));
        }
    }
    check_rescaled_reach(params, t, a.abs().max(b.abs()).max(c.abs()).max(d.abs()))?;

    let outcome = map_trajectories(params, |traj| {
        let ups = upsilon_on_native_grid(traj, t).expect("validated");
        let s1 = crate::kpz::sup_parabola_on(&ups, nu, a, b).expect("validated").0;
        let s2 = crate::kpz::sup_parabola_on(&ups, nu, c, d).expect("validated").0;
        (s1, s2)
    });
    let sups: Vec<(f64, f64)> = outcome.per_traj.iter().flatten().copied().collect();
    let n_eff = sups.len() as f64;
    if sups.is_empty() {
        return Err(TailError::AllRowsDropped);
    }
    let s_used = s.unwrap_or_else(|| {
        let median = |mut v: Vec<f64>| -> f64 {
            v.sort_by(|x, y| x.total_cmp(y));
            v[v.len() / 2]
        };
        let m1 = median(sups.iter().map(|p| p.0).collect());
        let m2 = median(sups.iter().map(|p| p.1).collect());
        0.5 * (m1 + m2)
    });
    let mut joint = 0u64;
    let mut h1 = 0u64;
    let mut h2 = 0u64;
    for &(s1, s2) in &sups {
        let e1 = s1 <= s_used;
        let e2 = s2 <= s_used;
        h1 += e1 as u64;
        h2 += e2 as u64;
        joint += (e1 && e2) as u64;
    }
    let (pj, p1, p2) = (joint as f64 / n_eff, h1 as f64 / n_eff, h2 as f64 / n_eff);
    let diff = pj - p1 * p2;
    // Delta method for theta = pJ - p1 p2 on indicator moments
    // (E[J A] = E[J B] = pJ since J = A and B).
    let var_j = pj * (1.0 - pj);
    let var_1 = p1 * (1.0 - p1);
    let var_2 = p2 * (1.0 - p2);
    let cov_j1 = pj - pj * p1;
    let cov_j2 = pj - pj * p2;
    let cov_12 = pj - p1 * p2;
    let var_theta = (var_j + p2 * p2 * var_1 + p1 * p1 * var_2 - 2.0 * p2 * cov_j1
        - 2.0 * p1 * cov_j2
        + 2.0 * p1 * p2 * cov_12)
        / n_eff;
    let stderr = var_theta.max(0.0).sqrt();
    let conclusive = p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0;
    Ok(FkgReport {
        s_used,
        p_joint: pj,
        p1,
        p2,
        product: p1 * p2,
        difference: diff,
        stderr,
        z: if stderr > 0.0 { diff / stderr } else { f64::NAN },
        conclusive,
        n: params.n,
        censored: outcome.censored,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ArgsupReport {
    pub curve: TailCurve,
    /// Isotonic-smoothed (nonincreasing) probabilities.
    pub p_smoothed: Vec<f64>,
    /// Fit of `log p` against `log M` over rows with p > 0; decay exponent
    /// is `-slope`.
    pub decay_exponent: Option<f64>,
    pub fit: Option<LineFitOut>,
}

pub fn argsup_localization(
    params: &EnsembleParams,
    t: f64,
    nu: f64,
    m_sweep: &[f64],
) -> Result<ArgsupReport, TailError> {
    let m_max = m_sweep.iter().cloned().fold(0.0f64, f64::max);
    let half = rescaled_half_window(params, t);
    if half < 4.0 * m_max {
        return Err(TailError::WindowTooSmall {
            window: half,
            need: 4.0 * m_max,
        });
    }
    let event = EventSpec::ArgsupOutside { t, nu, m: 0.0 };
    let curve = estimate_tail(params, &event, m_sweep)?;
    let p: Vec<f64> = curve.rows.iter().map(|r| r.p_hat).collect();
    let p_smoothed = isotonic_nonincreasing(&p);
    let xs: Vec<f64> = curve
        .rows
        .iter()
        .filter(|r| r.hits >= 10 && r.param > 0.0)
        .map(|r| r.param.ln())
        .collect();
    let ys: Vec<f64> = curve
        .rows
        .iter()
        .filter(|r| r.hits >= 10 && r.param > 0.0)
        .map(|r| r.p_hat.ln())
        .collect();
    let fit = if xs.len() >= 3 { fit_line(&xs, &ys) } else { None };
    Ok(ArgsupReport {
        curve,
        p_smoothed,
        decay_exponent: fit.map(|f| -f.slope),
        fit: fit.map(Into::into),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusReport {
    pub curve: TailCurve,
    pub fit: Option<ExponentFit>,
}

pub fn modulus_tail(
    params: &EnsembleParams,
    t: f64,
    a: f64,
    eps: f64,
    s_sweep: &[f64],
) -> Result<ModulusReport, TailError> {
    let event = EventSpec::ModulusExceed { t, a, eps, s: 0.0 };
    let curve = estimate_tail(params, &event, s_sweep)?;
    let fit = fit_exponent(&curve).ok();
    Ok(ModulusReport { curve, fit })
}

pub fn box_inf_tail(
    params: &EnsembleParams,
    gamma: f64,
    b: f64,
    l1: f64,
    l2: f64,
    a_sweep: &[f64],
) -> Result<TailCurve, TailError> {
    let event = EventSpec::BoxInf {
        gamma,
        a: 0.0,
        b,
        l1,
        l2,
    };
    estimate_tail(params, &event, a_sweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Scheme};
    use crate::stats::normal_cdf;
    use approx::assert_relative_eq;

    fn small_grid(dx: f64, dt: f64, half: f64, t_end: f64, snaps: Vec<f64>) -> Arc<GridSpec> {
        Arc::new(GridSpec {
            dx,
            dt,
            x_min: -half,
            x_max: half,
            boundary: Boundary::Periodic,
            scheme: Scheme::Splitting,
            t_end,
            snapshot_times: snaps,
        })
    }

    #[test]
    fn one_step_lognormal_oracle() {
        // One splitting step from u = 1: u(dt, x) = exp(sigma xi - sigma^2/2)
        // up to the (tiny) heat mixing, so P(u < m) = Phi((log m + s^2/2)/s).
        let dt = 0.01;
        let dx = 0.1;
        let g = small_grid(dx, dt, 1.0, dt, vec![dt]);
        let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 2021, 10_000);
        let m: f64 = 0.95;
        let gamma = -m.ln() / dt; // threshold e^{-gamma dt} = m
        let event = EventSpec::OnePointLower {
            t: dt,
            x: 0.0,
            gamma,
        };
        let curve = estimate_tail(&params, &event, &[gamma]).unwrap();
        let sigma = (dt / dx).sqrt();
        let expect = normal_cdf((m.ln() + sigma * sigma / 2.0) / sigma);
        let p = curve.rows[0].p_hat;
        let stderr = (expect * (1.0 - expect) / params.n as f64).sqrt();
        assert!(
            (p - expect).abs() < 3.0 * stderr,
            "p = {p}, expect = {expect}, stderr = {stderr}"
        );
    }

    #[test]
    fn impossible_and_certain_events() {
        let g = small_grid(0.1, 0.01, 1.0, 0.05, vec![0.05]);
        let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 3, 200);
        // gamma huge: threshold underflows to 0, u <= 0 impossible.
        let imp = estimate_tail(
            &params,
            &EventSpec::OnePointLower {
                t: 0.05,
                x: 0.0,
                gamma: 1e6,
            },
            &[1e6],
        )
        .unwrap();
        assert_eq!(imp.rows[0].hits, 0);
        assert_eq!(imp.rows[0].p_hat, 0.0);
        assert_eq!(imp.rows[0].ci_low, 0.0);
        assert!(imp.rows[0].ci_high > 0.0, "one-sided upper bound");
        // u > 0 is certain for the splitting scheme.
        let cert = estimate_tail(
            &params,
            &EventSpec::OnePointUpper {
                t: 0.05,
                x: 0.0,
                gamma: 1e6,
            },
            &[1e6],
        )
        .unwrap();
        assert_eq!(cert.rows[0].p_hat, 1.0);
    }

    #[test]
    fn complementarity_exact_per_sample() {
        let g = small_grid(0.1, 0.01, 1.0, 0.2, vec![0.2]);
        let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 17, 500);
        let sweep = [0.2, 0.5, 1.0];
        let lower = estimate_tail(
            &params,
            &EventSpec::OnePointLower { t: 0.2, x: 0.0, gamma: 1.0 },
            &sweep,
        )
        .unwrap();
        let upper = estimate_tail(
            &params,
            &EventSpec::OnePointUpper { t: 0.2, x: 0.0, gamma: 1.0 },
            &sweep,
        )
        .unwrap();
        for (lo, hi) in lower.rows.iter().zip(&upper.rows) {
            assert_eq!(lo.hits + hi.hits, lo.n);
        }
        // Monotone in gamma, exactly (event containment per sample).
        for w in lower.rows.windows(2) {
            assert!(w[1].hits <= w[0].hits);
        }
    }

    #[test]
    fn exponent_fit_round_trips_synthetic_curves() {
        let mk = |ps: &[(f64, f64)]| TailCurve {
            event: "synthetic".into(),
            param_name: "s".into(),
            rows: ps
                .iter()
                .map(|&(s, p)| TailRow {
                    param: s,
                    hits: 1000,
                    n: 100_000,
                    p_hat: p,
                    ci_low: p,
                    ci_high: p,
                })
                .collect(),
            n_requested: 100_000,
            censored: 0,
            master_seed: 0,
        };
        let pts1: Vec<(f64, f64)> = [1.0f64, 2.0, 3.0, 4.0]
            .iter()
            .map(|&s| (s, (-2.0 * s.powf(1.5)).exp()))
            .collect();
        let curve = mk(&pts1);
        let fit = fit_exponent(&curve).unwrap();
        assert_relative_eq!(fit.alpha, 1.5, epsilon = 1e-9);
        assert_relative_eq!(fit.c, 2.0, epsilon = 1e-9);
        let pts2: Vec<(f64, f64)> = [0.5f64, 1.0, 1.5, 2.0]
            .iter()
            .map(|&s| (s, (-s.powi(3)).exp()))
            .collect();
        let curve = mk(&pts2);
        let fit = fit_exponent(&curve).unwrap();
        assert_relative_eq!(fit.alpha, 3.0, epsilon = 1e-9);
        assert_relative_eq!(fit.c, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn exponent_fit_survives_binomial_noise() {
        // Binomial N = 1e6 sampling around p(s) = exp(-2 s^1.5).
        let stream = NoiseStream::new(555, 0);
        let n = 1_000_000u64;
        let s_grid: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
        let mut rows = Vec::new();
        for (si, &s) in s_grid.iter().enumerate() {
            let p = (-2.0 * s.powf(1.5)).exp();
            let mut hits = 0u64;
            for i in 0..n {
                if stream.uniform(si as u64, i) < p {
                    hits += 1;
                }
            }
            rows.push(TailRow {
                param: s,
                hits,
                n,
                p_hat: hits as f64 / n as f64,
                ci_low: 0.0,
                ci_high: 1.0,
            });
        }
        let curve = TailCurve {
            event: "synthetic".into(),
            param_name: "s".into(),
            rows,
            n_requested: n,
            censored: 0,
            master_seed: 555,
        };
        let fit = fit_exponent(&curve).unwrap();
        assert!(
            fit.alpha > 1.35 && fit.alpha < 1.65,
            "alpha = {}",
            fit.alpha
        );
    }

    #[test]
    fn fit_rejects_sparse_curves() {
        let curve = TailCurve {
            event: "x".into(),
            param_name: "s".into(),
            rows: vec![TailRow {
                param: 1.0,
                hits: 50,
                n: 100,
                p_hat: 0.5,
                ci_low: 0.4,
                ci_high: 0.6,
            }],
            n_requested: 100,
            censored: 0,
            master_seed: 0,
        };
        assert!(matches!(
            fit_exponent(&curve),
            Err(TailError::InsufficientRows { .. })
        ));
    }

    #[test]
    fn moment_k1_slope_is_zero() {
        // E[u(t, 0)] = 1 for all t (martingale mean).
        let g = small_grid(0.1, 0.01, 6.4, 4.0, vec![1.0, 2.0, 3.0, 4.0]);
        let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 31, 8_000);
        let report = moment_lyapunov(&params, 1, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(
            report.slope.abs() < 0.02,
            "k=1 slope {} should vanish",
            report.slope
        );
        assert!(report.dropped.is_empty());
        assert!(report.slope_ci.0 <= 0.0 && report.slope_ci.1 >= 0.0);
    }

    #[test]
    fn moment_guards() {
        let g = small_grid(0.1, 0.01, 1.0, 1.0, vec![1.0]);
        let params = EnsembleParams::new(g.clone(), InitialData::Flat { c: 2.0 }, 1, 200);
        assert!(matches!(
            moment_lyapunov(&params, 2, &[1.0]),
            Err(TailError::NeedsUnitFlat)
        ));
        let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 1, 200);
        assert!(matches!(
            moment_lyapunov(&params, 4, &[1.0]),
            Err(TailError::BadMomentOrder(4))
        ));
    }

    #[test]
    fn convolution_zero_noise_degenerate() {
        // Without noise both sides are exactly log 1 = 0 (mass conservation).
        let g = small_grid(0.05, 0.001, 3.2, 0.5, vec![0.5]);
        let direct = solve(&g, &InitialData::Flat { c: 1.0 }, None).unwrap();
        let site0 = g.site_of_x(0.0).unwrap();
        assert_relative_eq!(
            direct.snapshot_at(0.5).unwrap().values[site0].ln(),
            0.0,
            epsilon = 1e-12
        );
        let wedge = solve(&g, &InitialData::Dirac { x0: 0.0 }, None).unwrap();
        let mass: f64 = wedge.snapshot_at(0.5).unwrap().values.iter().sum::<f64>() * g.dx;
        assert_relative_eq!(mass.ln(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn convolution_scaling_equivariance() {
        // u0 = c shifts both sides by log c (linearity of the scheme).
        let g = small_grid(0.1, 0.005, 3.2, 0.5, vec![0.5]);
        let c = 5.0;
        let site0 = g.site_of_x(0.0).unwrap();
        for sid in 0..5 {
            let drive = NoiseDrive::full(NoiseStream::new(77, sid));
            let one = solve(&g, &InitialData::Flat { c: 1.0 }, Some(&drive)).unwrap();
            let cc = solve(&g, &InitialData::Flat { c }, Some(&drive)).unwrap();
            let l1 = one.snapshot_at(0.5).unwrap().values[site0].ln();
            let lc = cc.snapshot_at(0.5).unwrap().values[site0].ln();
            assert_relative_eq!(lc, l1 + c.ln(), epsilon = 1e-10);
        }
    }

    #[test]
    fn convolution_rejects_early_time_and_dirac() {
        let g = small_grid(0.1, 0.005, 3.2, 0.5, vec![0.5]);
        assert!(matches!(
            convolution_test(&g, &InitialData::Flat { c: 1.0 }, 0.2, 200, 1, None),
            Err(TailError::ConvTooEarly(_))
        ));
        assert!(matches!(
            convolution_test(&g, &InitialData::Dirac { x0: 0.0 }, 0.5, 200, 1, None),
            Err(TailError::BadParam(_))
        ));
    }

    #[test]
    fn fkg_trivial_thresholds() {
        let g = small_grid(0.1, 0.005, 4.0, 1.0, vec![1.0]);
        let params = EnsembleParams::new(g, InitialData::Dirac { x0: 0.0 }, 5, 300);
        // s so large both marginals are certain.
        let r = fkg_test(&params, 1.0, (-1.5, -0.5), (0.5, 1.5), 0.5, Some(100.0)).unwrap();
        assert_eq!(r.p_joint, 1.0);
        assert_eq!(r.product, 1.0);
        assert!(!r.conclusive);
        // Overlapping intervals are rejected.
        assert!(matches!(
            fkg_test(&params, 1.0, (-1.0, 0.5), (0.0, 1.0), 0.5, None),
            Err(TailError::IntervalsOverlap(..))
        ));
    }

    #[test]
    fn argsup_containment_is_exact() {
        let g = small_grid(0.1, 0.005, 4.0, 1.0, vec![1.0]);
        let params = EnsembleParams::new(g, InitialData::Dirac { x0: 0.0 }, 9, 400);
        let report = argsup_localization(&params, 1.0, 0.5, &[0.25, 0.5, 0.75, 0.95]).unwrap();
        for w in report.curve.rows.windows(2) {
            assert!(w[1].hits <= w[0].hits, "containment violated");
        }
        for (s, r) in report.p_smoothed.iter().zip(&report.curve.rows) {
            assert_relative_eq!(*s, r.p_hat, epsilon = 1e-12);
        }
        // M = window half-width: the argsup cannot leave the window, so the
        // raw event probability is zero by construction.
        let half = 4.0 - 0.1;
        let curve = estimate_tail(
            &params,
            &EventSpec::ArgsupOutside { t: 1.0, nu: 0.5, m: half },
            &[half],
        )
        .unwrap();
        assert_eq!(curve.rows[0].hits, 0);
        // The sweep operation itself enforces the 4x window margin.
        assert!(matches!(
            argsup_localization(&params, 1.0, 0.5, &[half]),
            Err(TailError::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn modulus_event_monotone_within_noise() {
        let g = small_grid(0.05, 0.0025, 4.0, 1.0, vec![1.0]);
        let params = EnsembleParams::new(g, InitialData::Dirac { x0: 0.0 }, 13, 2_000);
        let sweep = [1.0, 1.5, 2.0, 2.5];
        let report = modulus_tail(&params, 1.0, 0.0, 1.0, &sweep).unwrap();
        for w in report.curve.rows.windows(2) {
            let slack = 3.0 * (w[0].p_hat * (1.0 - w[0].p_hat) / w[0].n as f64).sqrt();
            assert!(
                w[1].p_hat <= w[0].p_hat + slack,
                "p rose beyond noise: {} -> {}",
                w[0].p_hat,
                w[1].p_hat
            );
        }
    }

    #[test]
    fn modulus_degenerate_interval_rejected() {
        let g = small_grid(0.1, 0.005, 4.0, 1.0, vec![1.0]);
        let params = EnsembleParams::new(g, InitialData::Dirac { x0: 0.0 }, 13, 200);
        // eps sqrt(s)/16 far below dx.
        assert!(matches!(
            modulus_tail(&params, 1.0, 0.0, 0.01, &[1.0]),
            Err(TailError::DegenerateInterval { .. })
        ));
    }

    #[test]
    fn box_event_reduces_to_point_and_grows_with_box() {
        let g = small_grid(0.1, 0.01, 2.0, 0.5, vec![0.5]);
        let params = EnsembleParams::new(g.clone(), InitialData::Flat { c: 1.0 }, 23, 400);
        let gamma = 0.5;
        // Degenerate box = one grid node; compare with the one-point event.
        let point_curve = estimate_tail(
            &params,
            &EventSpec::OnePointLower { t: 0.5, x: 0.0, gamma },
            &[gamma],
        )
        .unwrap();
        let box_curve = box_inf_tail(&params, gamma, 0.0, 0.0, 0.0, &[0.5]).unwrap();
        // Same trajectories (same seed/streams) so the counts agree exactly
        // up to the strict-vs-nonstrict threshold, which has measure zero.
        assert_eq!(box_curve.rows[0].hits, point_curve.rows[0].hits);
        // Doubling l2 never loses hits (containment on the same streams).
        let narrow = box_inf_tail(&params, gamma, 0.0, 0.2, 0.4, &[0.2]).unwrap();
        let wide = box_inf_tail(&params, gamma, 0.0, 0.2, 0.8, &[0.2]).unwrap();
        assert!(wide.rows[0].hits >= narrow.rows[0].hits);
        // Wider time extent never loses hits either.
        let longer = box_inf_tail(&params, gamma, 0.0, 0.3, 0.4, &[0.2]).unwrap();
        assert!(longer.rows[0].hits >= narrow.rows[0].hits);
    }

    #[test]
    fn box_event_guards() {
        let g = small_grid(0.1, 0.01, 2.0, 0.5, vec![0.5]);
        let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 23, 200);
        assert!(matches!(
            box_inf_tail(&params, 0.01, 0.0, 0.1, 0.4, &[0.2]),
            Err(TailError::BadParam(_))
        ));
        assert!(matches!(
            box_inf_tail(&params, 0.5, 0.0, 0.1, 0.4, &[0.6]),
            Err(TailError::BadParam(_))
        ));
    }

    #[test]
    fn seed_determinism_across_worker_counts() {
        let g = small_grid(0.1, 0.01, 2.0, 0.5, vec![0.5]);
        let mut p1 = EnsembleParams::new(g.clone(), InitialData::Flat { c: 1.0 }, 99, 300);
        p1.workers = Some(1);
        let mut p4 = p1.clone();
        p4.workers = Some(4);
        let e = EventSpec::OnePointLower { t: 0.5, x: 0.0, gamma: 0.7 };
        let c1 = estimate_tail(&p1, &e, &[0.5, 0.7, 0.9]).unwrap();
        let c4 = estimate_tail(&p4, &e, &[0.5, 0.7, 0.9]).unwrap();
        for (a, b) in c1.rows.iter().zip(&c4.rows) {
            assert_eq!(a.hits, b.hits);
        }
    }

    #[test]
    fn ensemble_size_guard() {
        let g = small_grid(0.1, 0.01, 1.0, 0.1, vec![0.1]);
        let params = EnsembleParams::new(g, InitialData::Flat { c: 1.0 }, 1, 50);
        assert!(matches!(
            estimate_tail(
                &params,
                &EventSpec::OnePointLower { t: 0.1, x: 0.0, gamma: 1.0 },
                &[1.0]
            ),
            Err(TailError::EnsembleTooSmall { .. })
        ));
    }
}
