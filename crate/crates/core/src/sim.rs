//! Time-stepping solvers for the stochastic heat equation with multiplicative
//! space-time white noise on a finite lattice.
//!
//! Two schemes are provided. `splitting` (the default) composes the exact
//! semigroup of the discrete Laplacian (spectral under periodic boundary,
//! Crank-Nicolson under absorbing boundary) with the lognormal multiplicative
//! update `u <- u * exp(sigma xi - sigma^2/2)`, `sigma = sqrt(dt/dx)`; it is
//! unconditionally stable and keeps positive data strictly positive under the
//! periodic/spectral heat step. `explicit_euler` is the forward Ito
//! discretization `u <- u + dt/(2 dx^2) lap(u) + u xi sqrt(dt/dx)`, kept as a
//! cross-check; it requires `dt <= dx^2` and may diverge.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::grid::{Boundary, GridSpec, GridError, InitialData, Scheme};
use crate::noise::NoiseStream;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("noise window [{lo}, {hi}] extends outside domain [{x_min}, {x_max})")]
    WindowOutsideDomain {
        lo: f64,
        hi: f64,
        x_min: f64,
        x_max: f64,
    },
    #[error("noise window narrower than 2 dx (half_width = {half_width}, dx = {dx})")]
    WindowTooNarrow { half_width: f64, dx: f64 },
    #[error("snapshot time {0} is not reachable with dt = {1}")]
    UnreachableSnapshot(f64, f64),
}

/// The discretized solution at one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub t: f64,
    pub values: Vec<f64>,
    pub grid: Arc<GridSpec>,
}

impl LatticeField {
    pub fn x(&self, i: usize) -> f64 {
        self.grid.site_x(i)
    }
}

/// Noise coupling for a run: full-plane, windowed, or switched off.
#[derive(Debug, Clone)]
pub struct NoiseDrive {
    pub stream: NoiseStream,
    /// Half-open site range that receives noise; sites outside evolve by the
    /// bare heat flow. `None` drives every site.
    pub window: Option<std::ops::Range<usize>>,
}

impl NoiseDrive {
    pub fn full(stream: NoiseStream) -> Self {
        NoiseDrive {
            stream,
            window: None,
        }
    }
}

/// Site range receiving noise for a window `[center - half_width, center + half_width]`.
pub fn window_site_range(
    grid: &GridSpec,
    center: f64,
    half_width: f64,
) -> Result<std::ops::Range<usize>, SimError> {
    if half_width < grid.dx {
        return Err(SimError::WindowTooNarrow {
            half_width,
            dx: grid.dx,
        });
    }
    let (lo, hi) = (center - half_width, center + half_width);
    if lo < grid.x_min || hi > grid.x_max {
        return Err(SimError::WindowOutsideDomain {
            lo,
            hi,
            x_min: grid.x_min,
            x_max: grid.x_max,
        });
    }
    let n = grid.n_sites();
    let mut first = n;
    let mut last = 0usize;
    for i in 0..n {
        let x = grid.site_x(i);
        if x >= lo && x <= hi {
            first = first.min(i);
            last = last.max(i);
        }
    }
    Ok(first..last + 1)
}

/// Ordered snapshots of one trajectory plus its provenance.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<LatticeField>,
    pub grid: Arc<GridSpec>,
    pub init: InitialData,
    pub master_seed: u64,
    pub stream_id: u64,
    /// Site range that received noise (for localized solves).
    pub noise_window: Option<(usize, usize)>,
    pub diverged: bool,
    pub diverged_at_step: Option<u64>,
}

impl Trajectory {
    pub fn snapshot_at(&self, t: f64) -> Option<&LatticeField> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

enum HeatOp {
    Spectral {
        fft: Arc<dyn Fft<f64>>,
        ifft: Arc<dyn Fft<f64>>,
        /// Semigroup multiplier with the 1/N inverse-transform normalization
        /// folded in.
        multiplier: Vec<f64>,
        buf: Vec<Complex<f64>>,
        scratch: Vec<Complex<f64>>,
    },
    CrankNicolson {
        /// Off-diagonal weight dt/(4 dx^2).
        a: f64,
        work: Vec<f64>,
        cprime: Vec<f64>,
    },
    Explicit,
}

/// Reusable stepping engine for one grid. Not shared across threads; clones
/// are cheap because the FFT plans are reference counted.
pub struct Stepper {
    grid: Arc<GridSpec>,
    heat: HeatOp,
    sigma: f64,
    xi: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: Arc<GridSpec>) -> Self {
        let n = grid.n_sites();
        let heat = match grid.scheme {
            Scheme::ExplicitEuler => HeatOp::Explicit,
            Scheme::Splitting => match grid.boundary {
                Boundary::Periodic => {
                    let mut planner = FftPlanner::new();
                    let fft = planner.plan_fft_forward(n);
                    let ifft = planner.plan_fft_inverse(n);
                    let scratch_len = fft
                        .get_inplace_scratch_len()
                        .max(ifft.get_inplace_scratch_len());
                    // Discrete Laplacian eigenvalue -4 sin^2(pi k / N)/dx^2;
                    // exact semigroup of u_t = u_xx/2 over one step.
                    let multiplier = (0..n)
                        .map(|k| {
                            let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
                            (-2.0 * grid.dt * s * s / (grid.dx * grid.dx)).exp() / n as f64
                        })
                        .collect();
                    HeatOp::Spectral {
                        fft,
                        ifft,
                        multiplier,
                        buf: vec![Complex::default(); n],
                        scratch: vec![Complex::default(); scratch_len],
                    }
                }
                Boundary::Absorbing => HeatOp::CrankNicolson {
                    a: grid.dt / (4.0 * grid.dx * grid.dx),
                    work: vec![0.0; n],
                    cprime: vec![0.0; n],
                },
            },
        };
        let sigma = (grid.dt / grid.dx).sqrt();
        Stepper {
            grid,
            heat,
            sigma,
            xi: Vec::with_capacity(n),
        }
    }

    /// Advance `values` from step `n` to `n + 1`. Returns false when a value
    /// became non-finite (explicit scheme divergence).
    pub fn step(&mut self, values: &mut [f64], step_index: u64, drive: Option<&NoiseDrive>) -> bool {
        match self.grid.scheme {
            Scheme::Splitting => {
                self.heat_substep(values);
                if let Some(d) = drive {
                    let range = d.window.clone().unwrap_or(0..values.len());
                    self.xi.clear();
                    d.stream
                        .fill_plane(step_index, range.start as u64..range.end as u64, &mut self.xi);
                    apply_noise_substep(
                        &mut values[range.start..range.end],
                        &self.xi,
                        self.sigma,
                    );
                }
                values.iter().all(|v| v.is_finite())
            }
            Scheme::ExplicitEuler => {
                let range = match drive {
                    Some(d) => d.window.clone().unwrap_or(0..values.len()),
                    None => 0..0,
                };
                self.xi.clear();
                if let Some(d) = drive {
                    d.stream
                        .fill_plane(step_index, range.start as u64..range.end as u64, &mut self.xi);
                }
                explicit_step(
                    values,
                    &self.xi,
                    range.start,
                    self.grid.dt,
                    self.grid.dx,
                    self.grid.boundary,
                )
            }
        }
    }

    fn heat_substep(&mut self, values: &mut [f64]) {
        match &mut self.heat {
            HeatOp::Spectral {
                fft,
                ifft,
                multiplier,
                buf,
                scratch,
            } => {
                for (b, &v) in buf.iter_mut().zip(values.iter()) {
                    *b = Complex::new(v, 0.0);
                }
                fft.process_with_scratch(buf, scratch);
                for (b, &m) in buf.iter_mut().zip(multiplier.iter()) {
                    *b *= m;
                }
                ifft.process_with_scratch(buf, scratch);
                for (v, b) in values.iter_mut().zip(buf.iter()) {
                    *v = b.re;
                }
            }
            HeatOp::CrankNicolson { a, work, cprime } => {
                crank_nicolson_dirichlet(values, *a, work, cprime);
            }
            HeatOp::Explicit => unreachable!("explicit scheme has no separate heat substep"),
        }
    }
}

/// Multiplicative noise substep: `u_i <- u_i exp(sigma xi_i - sigma^2/2)`.
///
/// The Ito correction `-sigma^2/2` makes the conditional mean of the substep
/// equal to its input.
#[inline]
pub fn apply_noise_substep(values: &mut [f64], xi: &[f64], sigma: f64) {
    let half_var = 0.5 * sigma * sigma;
    for (v, &z) in values.iter_mut().zip(xi) {
        *v *= (sigma * z - half_var).exp();
    }
}

/// One forward-Euler/Ito step. `xi` holds Gaussians for sites
/// `xi_offset..xi_offset + xi.len()`; other sites get zero noise. Returns
/// false when the update produced a non-finite value.
pub fn explicit_step(
    values: &mut [f64],
    xi: &[f64],
    xi_offset: usize,
    dt: f64,
    dx: f64,
    boundary: Boundary,
) -> bool {
    let n = values.len();
    let r = dt / (2.0 * dx * dx);
    let amp = (dt / dx).sqrt();
    let prev: Vec<f64> = values.to_vec();
    let mut finite = true;
    for i in 0..n {
        let (left, right) = match boundary {
            Boundary::Periodic => (prev[(i + n - 1) % n], prev[(i + 1) % n]),
            Boundary::Absorbing => (
                if i == 0 { 0.0 } else { prev[i - 1] },
                if i + 1 == n { 0.0 } else { prev[i + 1] },
            ),
        };
        let noise = if i >= xi_offset && i - xi_offset < xi.len() {
            prev[i] * xi[i - xi_offset] * amp
        } else {
            0.0
        };
        let v = prev[i] + r * (left - 2.0 * prev[i] + right) + noise;
        finite &= v.is_finite();
        values[i] = v;
    }
    finite
}

/// Crank-Nicolson step for `u_t = u_xx / 2` with zero Dirichlet ends:
/// `(I - a T) u' = (I + a T) u`, `T = tridiag(1, -2, 1)`, `a = dt/(4 dx^2)`.
fn crank_nicolson_dirichlet(values: &mut [f64], a: f64, rhs: &mut [f64], cprime: &mut [f64]) {
    let n = values.len();
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { values[i - 1] };
        let right = if i + 1 == n { 0.0 } else { values[i + 1] };
        rhs[i] = values[i] + a * (left - 2.0 * values[i] + right);
    }
    // Thomas algorithm, diag = 1 + 2a, off = -a.
    let diag = 1.0 + 2.0 * a;
    cprime[0] = -a / diag;
    rhs[0] /= diag;
    for i in 1..n {
        let m = diag + a * cprime[i - 1];
        cprime[i] = -a / m;
        rhs[i] = (rhs[i] + a * rhs[i - 1]) / m;
    }
    values[n - 1] = rhs[n - 1];
    for i in (0..n - 1).rev() {
        values[i] = rhs[i] - cprime[i] * values[i + 1];
    }
}

/// Outcome of a full run; the field state lives in whatever the observer kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStatus {
    pub diverged: bool,
    pub diverged_at_step: Option<u64>,
}

/// Drive the solver, handing every time slice (including `t = 0`) to
/// `observe(step_index, t, values)`. Stops early on divergence.
pub fn solve_with_observer<F>(
    grid: &Arc<GridSpec>,
    init: &InitialData,
    drive: Option<&NoiseDrive>,
    mut observe: F,
) -> Result<SolveStatus, SimError>
where
    F: FnMut(u64, f64, &[f64]),
{
    grid.validate()?;
    let mut values = init.realize(grid)?;
    let mut stepper = Stepper::new(grid.clone());
    observe(0, 0.0, &values);
    let n_steps = grid.n_steps();
    for step in 0..n_steps {
        let ok = stepper.step(&mut values, step, drive);
        let t = (step + 1) as f64 * grid.dt;
        if !ok {
            return Ok(SolveStatus {
                diverged: true,
                diverged_at_step: Some(step + 1),
            });
        }
        observe(step + 1, t, &values);
    }
    Ok(SolveStatus {
        diverged: false,
        diverged_at_step: None,
    })
}

/// Full solve collecting the snapshots requested by the grid.
pub fn solve(
    grid: &Arc<GridSpec>,
    init: &InitialData,
    drive: Option<&NoiseDrive>,
) -> Result<Trajectory, SimError> {
    let snapshot_steps: Vec<u64> = grid
        .snapshot_times
        .iter()
        .map(|&t| {
            grid.step_of_time(t)
                .ok_or(SimError::UnreachableSnapshot(t, grid.dt))
        })
        .collect::<Result<_, _>>()?;
    let mut snapshots = Vec::with_capacity(snapshot_steps.len());
    let status = solve_with_observer(grid, init, drive, |step, t, values| {
        if snapshot_steps.binary_search(&step).is_ok() {
            snapshots.push(LatticeField {
                t,
                values: values.to_vec(),
                grid: grid.clone(),
            });
        }
    })?;
    let (master_seed, stream_id) = match drive {
        Some(d) => (d.stream.master_seed(), d.stream.stream_id()),
        None => (0, 0),
    };
    Ok(Trajectory {
        snapshots,
        grid: grid.clone(),
        init: init.clone(),
        master_seed,
        stream_id,
        noise_window: drive
            .and_then(|d| d.window.clone())
            .map(|r| (r.start, r.end - 1)),
        diverged: status.diverged,
        diverged_at_step: status.diverged_at_step,
    })
}

/// Solve driven only by noise inside `[center - half_width, center + half_width]`.
///
/// The run consumes exactly the noise coordinates of that window, so two
/// localized solves with disjoint windows under one master seed are
/// independent by construction.
pub fn localized_solve(
    grid: &Arc<GridSpec>,
    init: &InitialData,
    stream: NoiseStream,
    center: f64,
    half_width: f64,
) -> Result<Trajectory, SimError> {
    let range = window_site_range(grid, center, half_width)?;
    let drive = NoiseDrive {
        stream,
        window: Some(range),
    };
    solve(grid, init, Some(&drive))
}
