//! Simulation and analysis toolkit for the (1+1)-dimensional parabolic
//! Anderson equation `du = 1/2 u_xx dt + u dW` with space-time white noise:
//! lattice solvers, Cole-Hopf / KPZ rescaled fields, valley level sets,
//! Barlow-Taylor macroscopic Hausdorff dimension machinery, and Monte Carlo
//! tail statistics, all reproducible from a single master seed.

pub mod config;
pub mod cover;
pub mod grid;
pub mod hausdorff;
pub mod level_sets;
pub mod kpz;
pub mod noise;
pub mod runner;
pub mod sim;
pub mod snapshot;
pub mod stats;
pub mod tail;

pub use grid::{Boundary, GridSpec, InitialData, Scheme};
pub use kpz::{cole_hopf, upsilon, HeightField, UpsilonField};
pub use noise::NoiseStream;
pub use sim::{localized_solve, solve, LatticeField, NoiseDrive, Trajectory};
