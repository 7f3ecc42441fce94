//! Experiment configuration: a sectioned key = value file (TOML) or the same
//! schema as JSON, validated up front with every violation reported against
//! its key.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Boundary, GridSpec, InitialData, Scheme};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("validation failed:\n{}", issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid { issues: Vec<Issue> },
}

/// One validation finding, keyed to the offending config entry.
#[derive(Debug, Clone, Serialize)]
pub struct Issue {
    pub key: String,
    pub rule: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Simulate,
    Valleys,
    Stretch,
    Dim,
    Tails,
    Moments,
    Convtest,
    Fkg,
    Proxy,
    XiGen,
    Validate,
}

impl std::fmt::Display for RunKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunKind::Simulate => "simulate",
            RunKind::Valleys => "valleys",
            RunKind::Stretch => "stretch",
            RunKind::Dim => "dim",
            RunKind::Tails => "tails",
            RunKind::Moments => "moments",
            RunKind::Convtest => "convtest",
            RunKind::Fkg => "fkg",
            RunKind::Proxy => "proxy",
            RunKind::XiGen => "xi-gen",
            RunKind::Validate => "validate",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    pub kind: RunKind,
    pub master_seed: u64,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub sweep_param: Option<String>,
    #[serde(default)]
    pub sweep_values: Option<Vec<f64>>,
}

fn default_ensemble() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    pub dx: f64,
    pub dt: f64,
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

fn default_boundary() -> Boundary {
    Boundary::Periodic
}
fn default_scheme() -> Scheme {
    Scheme::Splitting
}

impl GridSection {
    pub fn to_grid(&self) -> GridSpec {
        GridSpec {
            dx: self.dx,
            dt: self.dt,
            x_min: self.x_min,
            x_max: self.x_max,
            boundary: self.boundary,
            scheme: self.scheme,
            t_end: self.t_end,
            snapshot_times: self.snapshot_times.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSection {
    Flat { c: f64 },
    Sampled { values: Vec<f64> },
    Dirac { x0: f64 },
}

impl InitSection {
    pub fn to_init(&self) -> InitialData {
        match self {
            InitSection::Flat { c } => InitialData::Flat { c: *c },
            InitSection::Sampled { values } => InitialData::Sampled {
                values: values.clone(),
            },
            InitSection::Dirac { x0 } => InitialData::Dirac { x0: *x0 },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValleySection {
    pub gamma: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub pixelate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StretchSection {
    pub input: String,
    pub beta: f64,
    #[serde(default)]
    pub pixelate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimSection {
    /// "xi" | "quadrant" | "hline" | "file"
    pub source: String,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub file: Option<String>,
    pub n_min: u32,
    pub n_max: u32,
    #[serde(default = "default_rho_step")]
    pub rho_step: f64,
    #[serde(default = "default_strategy")]
    pub strategy: String,
}

fn default_rho_step() -> f64 {
    0.05
}
fn default_strategy() -> String {
    "single_scale".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailsSection {
    /// Event kind label, matching the event family names.
    pub event: String,
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub l1: Option<f64>,
    #[serde(default)]
    pub l2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsSection {
    pub k_list: Vec<u32>,
    pub t_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvtestSection {
    pub t: f64,
    pub n_per_side: u64,
    #[serde(default = "default_reps")]
    pub repetitions: u64,
}

fn default_reps() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkgSection {
    pub t: f64,
    pub nu: f64,
    pub interval1: (f64, f64),
    pub interval2: (f64, f64),
    #[serde(default)]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxySection {
    pub t: f64,
    pub center: f64,
    pub half_widths: Vec<f64>,
    pub pairs: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiSection {
    pub q: f64,
    pub n_max: u32,
    #[serde(default)]
    pub budget: Option<u64>,
}

/// Full experiment description. Unused sections are permitted (a sweep file
/// can carry several analyses), missing required sections are validation
/// errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run: RunSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub init: Option<InitSection>,
    #[serde(default)]
    pub valleys: Option<ValleySection>,
    #[serde(default)]
    pub stretch: Option<StretchSection>,
    #[serde(default)]
    pub dim: Option<DimSection>,
    #[serde(default)]
    pub tails: Option<TailsSection>,
    #[serde(default)]
    pub moments: Option<MomentsSection>,
    #[serde(default)]
    pub convtest: Option<ConvtestSection>,
    #[serde(default)]
    pub fkg: Option<FkgSection>,
    #[serde(default)]
    pub proxy: Option<ProxySection>,
    #[serde(default)]
    pub xi: Option<XiSection>,
}

impl ExperimentConfig {
    /// Parse TOML (key = value with sections) or JSON, chosen by content.
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            Ok(toml::from_str(text)?)
        }
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn grid_arc(&self) -> Option<Arc<GridSpec>> {
        self.grid.as_ref().map(|g| Arc::new(g.to_grid()))
    }

    /// Validate everything this config's kind needs. Errors block the run;
    /// warnings (domain-size rule and similar) are returned separately.
    pub fn validate(&self) -> (Vec<Issue>, Vec<String>) {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let kind = self.run.kind;

        let needs_grid = matches!(
            kind,
            RunKind::Simulate
                | RunKind::Valleys
                | RunKind::Tails
                | RunKind::Moments
                | RunKind::Convtest
                | RunKind::Fkg
                | RunKind::Proxy
        );
        let needs_init = matches!(
            kind,
            RunKind::Simulate
                | RunKind::Valleys
                | RunKind::Tails
                | RunKind::Moments
                | RunKind::Convtest
                | RunKind::Fkg
                | RunKind::Proxy
        );

        if let Some(g) = &self.grid {
            let grid = g.to_grid();
            for e in grid.issues() {
                errors.push(Issue {
                    key: "grid".into(),
                    rule: e.to_string(),
                });
            }
            if errors.is_empty() {
                if let Some(w) = grid.domain_size_warning(0.0) {
                    warnings.push(format!("grid: {w}"));
                }
                if grid.boundary == Boundary::Absorbing
                    && grid.scheme == Scheme::Splitting
                    && grid.dt > 2.0 * grid.dx * grid.dx
                {
                    warnings.push(
                        "grid: Crank-Nicolson positivity is only guaranteed for dt <= 2 dx^2"
                            .into(),
                    );
                }
                if let Some(init) = &self.init {
                    for e in init.to_init().issues(&grid) {
                        errors.push(Issue {
                            key: "init".into(),
                            rule: e.to_string(),
                        });
                    }
                }
            }
        } else if needs_grid {
            errors.push(Issue {
                key: "grid".into(),
                rule: format!("section required for kind = {kind}"),
            });
        }
        if needs_init && self.init.is_none() {
            errors.push(Issue {
                key: "init".into(),
                rule: format!("section required for kind = {kind}"),
            });
        }

        match kind {
            RunKind::Valleys => {
                if let Some(v) = &self.valleys {
                    if !(v.gamma > 0.0) {
                        errors.push(Issue {
                            key: "valleys.gamma".into(),
                            rule: "gamma > 0 required".into(),
                        });
                    }
                    if let Some(beta) = v.beta {
                        if !(beta > 0.0) {
                            errors.push(Issue {
                                key: "valleys.beta".into(),
                                rule: "beta > 0 required".into(),
                            });
                        }
                    }
                } else {
                    errors.push(Issue {
                        key: "valleys".into(),
                        rule: "section required".into(),
                    });
                }
            }
            RunKind::Stretch => match &self.stretch {
                Some(s) if !(s.beta > 0.0) => errors.push(Issue {
                    key: "stretch.beta".into(),
                    rule: "beta > 0 required".into(),
                }),
                Some(_) => {}
                None => errors.push(Issue {
                    key: "stretch".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::Dim => match &self.dim {
                Some(d) => {
                    if !["xi", "quadrant", "hline", "file"].contains(&d.source.as_str()) {
                        errors.push(Issue {
                            key: "dim.source".into(),
                            rule: "must be one of xi|quadrant|hline|file".into(),
                        });
                    }
                    if d.source == "xi" && d.q.map(|q| !(q > 0.0)).unwrap_or(true) {
                        errors.push(Issue {
                            key: "dim.q".into(),
                            rule: "q > 0 required for source = xi".into(),
                        });
                    }
                    if d.source == "file" && d.file.is_none() {
                        errors.push(Issue {
                            key: "dim.file".into(),
                            rule: "file path required for source = file".into(),
                        });
                    }
                    if d.n_max < d.n_min + 3 {
                        errors.push(Issue {
                            key: "dim.n_max".into(),
                            rule: "need >= 4 shells (n_max >= n_min + 3)".into(),
                        });
                    }
                    if !(d.rho_step > 0.0 && d.rho_step <= 0.5) {
                        errors.push(Issue {
                            key: "dim.rho_step".into(),
                            rule: "rho_step in (0, 0.5] required".into(),
                        });
                    }
                    if !["exact_small", "single_scale", "greedy_multiscale"]
                        .contains(&d.strategy.as_str())
                    {
                        errors.push(Issue {
                            key: "dim.strategy".into(),
                            rule: "unknown strategy".into(),
                        });
                    }
                }
                None => errors.push(Issue {
                    key: "dim".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::Tails => match &self.tails {
                Some(t) => {
                    let known = [
                        "one_point_lower",
                        "one_point_upper",
                        "upsilon_lower",
                        "upsilon_upper",
                        "sup_parabola_upper",
                        "sup_parabola_lower",
                        "argsup_outside",
                        "modulus_exceed",
                        "box_inf",
                    ];
                    if !known.contains(&t.event.as_str()) {
                        errors.push(Issue {
                            key: "tails.event".into(),
                            rule: format!("unknown event '{}'", t.event),
                        });
                    }
                    if t.sweep.is_empty() {
                        errors.push(Issue {
                            key: "tails.sweep".into(),
                            rule: "sweep values required".into(),
                        });
                    }
                    if t.event.starts_with("one_point") {
                        if let Some(g) = t.gamma {
                            if !(g > 0.0) {
                                errors.push(Issue {
                                    key: "tails.gamma".into(),
                                    rule: "gamma > 0 required".into(),
                                });
                            }
                        }
                        if t.sweep.iter().any(|&g| !(g > 0.0)) {
                            errors.push(Issue {
                                key: "tails.sweep".into(),
                                rule: "gamma > 0 required".into(),
                            });
                        }
                    }
                }
                None => errors.push(Issue {
                    key: "tails".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::Moments => match &self.moments {
                Some(m) => {
                    if m.k_list.iter().any(|&k| !(1..=3).contains(&k)) {
                        errors.push(Issue {
                            key: "moments.k_list".into(),
                            rule: "k in 1..=3 required".into(),
                        });
                    }
                    if m.t_grid.len() < 2 {
                        errors.push(Issue {
                            key: "moments.t_grid".into(),
                            rule: "need >= 2 times".into(),
                        });
                    }
                }
                None => errors.push(Issue {
                    key: "moments".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::Convtest => match &self.convtest {
                Some(c) => {
                    if c.t < 0.5 {
                        errors.push(Issue {
                            key: "convtest.t".into(),
                            rule: "t >= 0.5 required".into(),
                        });
                    }
                    if c.n_per_side < 100 {
                        errors.push(Issue {
                            key: "convtest.n_per_side".into(),
                            rule: "need >= 100 per side".into(),
                        });
                    }
                }
                None => errors.push(Issue {
                    key: "convtest".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::Fkg => match &self.fkg {
                Some(f) => {
                    if !(f.nu > 0.0 && f.nu < 1.0) {
                        errors.push(Issue {
                            key: "fkg.nu".into(),
                            rule: "nu in (0,1) required".into(),
                        });
                    }
                    let (a, b) = f.interval1;
                    let (c, d) = f.interval2;
                    if !(a < b && c < d && (b <= c || d <= a)) {
                        errors.push(Issue {
                            key: "fkg.interval2".into(),
                            rule: "intervals must be nondegenerate and disjoint".into(),
                        });
                    }
                }
                None => errors.push(Issue {
                    key: "fkg".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::Proxy => match &self.proxy {
                Some(p) => {
                    if p.half_widths.is_empty() {
                        errors.push(Issue {
                            key: "proxy.half_widths".into(),
                            rule: "at least one half width required".into(),
                        });
                    }
                    if p.pairs == 0 {
                        errors.push(Issue {
                            key: "proxy.pairs".into(),
                            rule: "pairs > 0 required".into(),
                        });
                    }
                }
                None => errors.push(Issue {
                    key: "proxy".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::XiGen => match &self.xi {
                Some(x) => {
                    if !(x.q > 0.0) {
                        errors.push(Issue {
                            key: "xi.q".into(),
                            rule: "q > 0 required".into(),
                        });
                    }
                    if x.n_max < 1 {
                        errors.push(Issue {
                            key: "xi.n_max".into(),
                            rule: "n_max >= 1 required".into(),
                        });
                    }
                }
                None => errors.push(Issue {
                    key: "xi".into(),
                    rule: "section required".into(),
                }),
            },
            RunKind::Simulate | RunKind::Validate => {}
        }

        if matches!(
            kind,
            RunKind::Simulate
                | RunKind::Valleys
                | RunKind::Tails
                | RunKind::Moments
                | RunKind::Fkg
                | RunKind::Proxy
        ) && self.run.ensemble_size == 0
        {
            errors.push(Issue {
                key: "run.ensemble_size".into(),
                rule: "N > 0 required".into(),
            });
        }

        // Sweep plumbing.
        match (&self.run.sweep_param, &self.run.sweep_values) {
            (Some(p), Some(vs)) => {
                if vs.is_empty() {
                    errors.push(Issue {
                        key: "run.sweep_values".into(),
                        rule: "empty value list".into(),
                    });
                }
                if sweep_stage(kind, p).is_none() {
                    errors.push(Issue {
                        key: "run.sweep_param".into(),
                        rule: format!("parameter '{p}' is not sweepable for kind = {kind}"),
                    });
                }
            }
            (Some(_), None) => errors.push(Issue {
                key: "run.sweep_values".into(),
                rule: "sweep_param given without sweep_values".into(),
            }),
            (None, Some(_)) => errors.push(Issue {
                key: "run.sweep_param".into(),
                rule: "sweep_values given without sweep_param".into(),
            }),
            (None, None) => {}
        }

        (errors, warnings)
    }

    pub fn validated(&self) -> Result<(), ConfigError> {
        let (errors, _) = self.validate();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid { issues: errors })
        }
    }
}

/// Whether a parameter needs fresh simulations per value (`Simulation`) or
/// reuses the parent ensemble's seed (`Analysis`, so per-sample containment
/// properties hold exactly across the sweep).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStage {
    Analysis,
    Simulation,
}

pub fn sweep_stage(kind: RunKind, param: &str) -> Option<SweepStage> {
    match (kind, param) {
        (RunKind::Valleys, "gamma") | (RunKind::Valleys, "beta") => Some(SweepStage::Analysis),
        (RunKind::Fkg, "s") | (RunKind::Fkg, "nu") => Some(SweepStage::Analysis),
        (RunKind::Tails, "t") => Some(SweepStage::Simulation),
        (RunKind::Convtest, "t") => Some(SweepStage::Simulation),
        _ => None,
    }
}
