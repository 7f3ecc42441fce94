//! Experiment execution: dispatch by kind, atomic output files, and the run
//! manifest. A run writes every data file via temp-file + rename, keeps a
//! `RUNNING.incomplete` marker while working, and writes `manifest.json`
//! (with checksums of every output) last, so an interrupted run can never be
//! mistaken for a complete one.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{
    sweep_stage, ConfigError, ExperimentConfig, RunKind, SweepStage,
};
use crate::hausdorff::{dimension_estimate, Strategy};
use crate::level_sets::{pixelate, stretch, valley_set, xi_q, RegionSet, SpaceTimeSet};
use crate::noise::{derive_seed, NoiseStream};
use crate::sim::{localized_solve, solve, NoiseDrive};
use crate::snapshot;
use crate::stats::mean_var;
use crate::tail::{
    argsup_localization, box_inf_tail, convolution_test, estimate_tail, fit_exponent, fkg_test,
    modulus_tail, moment_lyapunov_multi, with_pool, EnsembleParams, EventSpec, TailCurve,
    TailError,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("runtime failure before outputs: {0}")]
    Setup(String),
    #[error("runtime failure mid-run (incomplete marker left in {out_dir}): {message}")]
    Aborted { out_dir: PathBuf, message: String },
}

pub const INCOMPLETE_MARKER: &str = "RUNNING.incomplete";

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub kind: String,
    pub master_seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub trajectories_ok: u64,
    pub trajectories_diverged: u64,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.canonical_json().as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Collects output files during a run; everything lands atomically.
pub struct OutputSink {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl OutputSink {
    fn new(dir: PathBuf) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(OutputSink {
            dir,
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp-partial");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path)?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.records.push(OutputRecord {
            path: name.to_string(),
            sha256: hex_string(&hasher.finalize()),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable");
        self.write(name, text.as_bytes())
    }
}

struct RunTotals {
    ok: u64,
    diverged: u64,
}

/// Execute a validated config. The `kind` comes from the CLI subcommand and
/// must match the config's kind.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest, RunError> {
    let (errors, warnings) = config.validate();
    if !errors.is_empty() {
        return Err(ConfigError::Invalid { issues: errors }.into());
    }
    let started = now_ms();
    let mut sink = OutputSink::new(out_dir.to_path_buf())
        .map_err(|e| RunError::Setup(format!("cannot create {}: {e}", out_dir.display())))?;
    let marker = out_dir.join(INCOMPLETE_MARKER);
    std::fs::write(&marker, b"run in progress\n")
        .map_err(|e| RunError::Setup(format!("cannot write marker: {e}")))?;

    let mut totals = RunTotals { ok: 0, diverged: 0 };
    let result = dispatch(config, &mut sink, &mut totals);
    match result {
        Ok(()) => {}
        Err(message) => {
            return Err(RunError::Aborted {
                out_dir: out_dir.to_path_buf(),
                message,
            });
        }
    }

    let manifest = RunManifest {
        config_hash: config_hash(config),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: config.run.kind.to_string(),
        master_seed: config.run.master_seed,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        trajectories_ok: totals.ok,
        trajectories_diverged: totals.diverged,
        warnings,
        outputs: sink.records.clone(),
    };
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let tmp = out_dir.join("manifest.json.tmp-partial");
    std::fs::write(&tmp, manifest_text.as_bytes())
        .and_then(|_| std::fs::rename(&tmp, out_dir.join("manifest.json")))
        .map_err(|e| RunError::Aborted {
            out_dir: out_dir.to_path_buf(),
            message: format!("cannot write manifest: {e}"),
        })?;
    let _ = std::fs::remove_file(&marker);
    Ok(manifest)
}

fn dispatch(
    config: &ExperimentConfig,
    sink: &mut OutputSink,
    totals: &mut RunTotals,
) -> Result<(), String> {
    if let (Some(param), Some(values)) = (&config.run.sweep_param, &config.run.sweep_values) {
        return run_sweep(config, param, values, sink, totals);
    }
    run_single(config, sink, totals, "").map(|_| ())
}

fn run_sweep(
    config: &ExperimentConfig,
    param: &str,
    values: &[f64],
    sink: &mut OutputSink,
    totals: &mut RunTotals,
) -> Result<(), String> {
    let stage = sweep_stage(config.run.kind, param)
        .ok_or_else(|| format!("parameter '{param}' is not sweepable"))?;
    let mut agg = String::from("index,value,seed,summary\n");
    for (idx, &value) in values.iter().enumerate() {
        let mut sub = config.clone();
        sub.run.sweep_param = None;
        sub.run.sweep_values = None;
        if stage == SweepStage::Simulation {
            sub.run.master_seed = derive_seed(config.run.master_seed, idx as u64);
        }
        apply_sweep_value(&mut sub, param, value)?;
        let prefix = format!("sweep_{param}_{idx}/");
        let summary = run_single(&sub, sink, totals, &prefix)?;
        agg.push_str(&format!(
            "{idx},{value},{},{}\n",
            sub.run.master_seed, summary
        ));
    }
    sink.write("sweep.csv", agg.as_bytes())
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn apply_sweep_value(config: &mut ExperimentConfig, param: &str, value: f64) -> Result<(), String> {
    match (config.run.kind, param) {
        (RunKind::Valleys, "gamma") => {
            config.valleys.as_mut().ok_or("missing valleys section")?.gamma = value
        }
        (RunKind::Valleys, "beta") => {
            config.valleys.as_mut().ok_or("missing valleys section")?.beta = Some(value)
        }
        (RunKind::Fkg, "s") => config.fkg.as_mut().ok_or("missing fkg section")?.s = Some(value),
        (RunKind::Fkg, "nu") => config.fkg.as_mut().ok_or("missing fkg section")?.nu = value,
        (RunKind::Tails, "t") => {
            config.tails.as_mut().ok_or("missing tails section")?.t = Some(value)
        }
        (RunKind::Convtest, "t") => {
            config.convtest.as_mut().ok_or("missing convtest section")?.t = value
        }
        _ => return Err(format!("parameter '{param}' is not sweepable")),
    }
    Ok(())
}

fn ensemble_params(config: &ExperimentConfig) -> EnsembleParams {
    EnsembleParams {
        grid: config.grid_arc().expect("validated"),
        init: config.init.as_ref().expect("validated").to_init(),
        master_seed: config.run.master_seed,
        n: config.run.ensemble_size,
        first_stream: 0,
        workers: config.run.workers,
    }
}

/// Returns a one-field summary string for sweep aggregation.
fn run_single(
    config: &ExperimentConfig,
    sink: &mut OutputSink,
    totals: &mut RunTotals,
    prefix: &str,
) -> Result<String, String> {
    let seed = config.run.master_seed;
    match config.run.kind {
        RunKind::Validate => Ok("valid".into()),
        RunKind::Simulate => {
            let grid = config.grid_arc().expect("validated");
            let init = config.init.as_ref().expect("validated").to_init();
            let n = config.run.ensemble_size;
            for sid in 0..n {
                let drive = NoiseDrive::full(NoiseStream::new(seed, sid));
                let traj = solve(&grid, &init, Some(&drive)).map_err(|e| e.to_string())?;
                if traj.diverged {
                    totals.diverged += 1;
                } else {
                    totals.ok += 1;
                }
                sink.write(
                    &format!("{prefix}traj_{sid:05}.pamf"),
                    &snapshot::checkpoint(&traj),
                )
                .map_err(|e| e.to_string())?;
                let mut csv = Vec::new();
                snapshot::trajectory_to_csv(&traj, &mut csv).map_err(|e| e.to_string())?;
                sink.write(&format!("{prefix}traj_{sid:05}.csv"), &csv)
                    .map_err(|e| e.to_string())?;
            }
            Ok(format!("{n} trajectories"))
        }
        RunKind::Valleys => {
            let grid = config.grid_arc().expect("validated");
            let init = config.init.as_ref().expect("validated").to_init();
            let section = config.valleys.as_ref().expect("validated");
            let n = config.run.ensemble_size;
            let mut summary = String::from("stream_id,count\n");
            let mut total = 0usize;
            for sid in 0..n {
                let drive = NoiseDrive::full(NoiseStream::new(seed, sid));
                let traj = solve(&grid, &init, Some(&drive)).map_err(|e| e.to_string())?;
                if traj.diverged {
                    totals.diverged += 1;
                    continue;
                }
                totals.ok += 1;
                let mut set = valley_set(&traj, section.gamma);
                if let Some(beta) = section.beta {
                    set = stretch(&set, beta);
                }
                if section.pixelate {
                    set = pixelate(&set);
                }
                total += set.len();
                write_set(sink, &format!("{prefix}valley_{sid:05}"), &set)?;
                summary.push_str(&format!("{sid},{}\n", set.len()));
            }
            sink.write(&format!("{prefix}occupancy.csv"), summary.as_bytes())
                .map_err(|e| e.to_string())?;
            Ok(format!("occupancy={total}"))
        }
        RunKind::Stretch => {
            let section = config.stretch.as_ref().expect("validated");
            let text =
                std::fs::read_to_string(&section.input).map_err(|e| format!("input: {e}"))?;
            let set = SpaceTimeSet::from_csv(&text).map_err(|e| e.to_string())?;
            let mut out = stretch(&set, section.beta);
            if section.pixelate {
                out = pixelate(&out);
            }
            write_set(sink, &format!("{prefix}stretched"), &out)?;
            Ok(format!("points={}", out.len()))
        }
        RunKind::Dim => {
            let section = config.dim.as_ref().expect("validated");
            let strategy = match section.strategy.as_str() {
                "exact_small" => Strategy::ExactSmall,
                "greedy_multiscale" => Strategy::GreedyMultiscale,
                _ => Strategy::SingleScale,
            };
            let steps = (2.0 / section.rho_step).round() as usize;
            let rho_grid: Vec<f64> = (0..=steps).map(|i| i as f64 * 2.0 / steps as f64).collect();
            let range = section.n_min..=section.n_max;
            let est = match section.source.as_str() {
                "xi" => dimension_estimate(
                    &RegionSet::XiQ {
                        q: section.q.expect("validated"),
                    },
                    &rho_grid,
                    range,
                    strategy,
                ),
                "quadrant" => dimension_estimate(&RegionSet::Quadrant, &rho_grid, range, strategy),
                "hline" => {
                    dimension_estimate(&RegionSet::HorizontalLine, &rho_grid, range, strategy)
                }
                "file" => {
                    let path = section.file.as_ref().expect("validated");
                    let text =
                        std::fs::read_to_string(path).map_err(|e| format!("set file: {e}"))?;
                    let set = SpaceTimeSet::from_csv(&text).map_err(|e| e.to_string())?;
                    dimension_estimate(&set, &rho_grid, range, strategy)
                }
                other => return Err(format!("unknown dim source '{other}'")),
            }
            .map_err(|e| e.to_string())?;
            let mut csv = Vec::new();
            est.table.to_csv(&mut csv).map_err(|e| e.to_string())?;
            sink.write(&format!("{prefix}content.csv"), &csv)
                .map_err(|e| e.to_string())?;
            sink.write_json(&format!("{prefix}dimension.json"), &est)
                .map_err(|e| e.to_string())?;
            Ok(format!("rho_star={:?}", est.rho_star))
        }
        RunKind::Tails => {
            let section = config.tails.as_ref().expect("validated");
            let params = ensemble_params(config);
            let report = tails_run(&params, section).map_err(|e| e.to_string())?;
            totals.ok += params.n - report.curve.censored;
            totals.diverged += report.curve.censored;
            let mut csv = Vec::new();
            report.curve.to_csv(&mut csv).map_err(|e| e.to_string())?;
            sink.write(&format!("{prefix}tails.csv"), &csv)
                .map_err(|e| e.to_string())?;
            sink.write_json(&format!("{prefix}tails.json"), &report)
                .map_err(|e| e.to_string())?;
            Ok(format!("rows={}", report.curve.rows.len()))
        }
        RunKind::Moments => {
            let section = config.moments.as_ref().expect("validated");
            let params = ensemble_params(config);
            let reports = moment_lyapunov_multi(&params, &section.k_list, &section.t_grid)
                .map_err(|e| e.to_string())?;
            for rep in &reports {
                totals.ok += params.n - rep.censored;
                totals.diverged += rep.censored;
                let mut csv = String::from("t,mean,stderr,rel_stderr,ess_ratio\n");
                for row in &rep.rows {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        row.t, row.mean, row.stderr, row.rel_stderr, row.ess_ratio
                    ));
                }
                sink.write(&format!("{prefix}moments_k{}.csv", rep.k), csv.as_bytes())
                    .map_err(|e| e.to_string())?;
            }
            sink.write_json(&format!("{prefix}moments.json"), &reports)
                .map_err(|e| e.to_string())?;
            let slopes: Vec<String> = reports
                .iter()
                .map(|r| format!("k{}:{:.4}", r.k, r.slope))
                .collect();
            Ok(slopes.join(" "))
        }
        RunKind::Convtest => {
            let section = config.convtest.as_ref().expect("validated");
            let grid = config.grid_arc().expect("validated");
            let init = config.init.as_ref().expect("validated").to_init();
            let mut rows = Vec::new();
            for rep in 0..section.repetitions {
                let rep_seed = derive_seed(seed, rep);
                let report = convolution_test(
                    &grid,
                    &init,
                    section.t,
                    section.n_per_side,
                    rep_seed,
                    config.run.workers,
                )
                .map_err(|e| e.to_string())?;
                totals.ok += 2 * section.n_per_side - report.censored;
                totals.diverged += report.censored;
                rows.push(report);
            }
            let mut csv = String::from("rep,ks_distance,p_value,truncation_mass\n");
            for (i, r) in rows.iter().enumerate() {
                csv.push_str(&format!(
                    "{i},{},{},{}\n",
                    r.ks_distance, r.p_value, r.truncation_mass
                ));
            }
            sink.write(&format!("{prefix}convtest.csv"), csv.as_bytes())
                .map_err(|e| e.to_string())?;
            sink.write_json(&format!("{prefix}convtest.json"), &rows)
                .map_err(|e| e.to_string())?;
            let passing = rows.iter().filter(|r| r.p_value > 0.01).count();
            Ok(format!("p>0.01 in {passing}/{}", rows.len()))
        }
        RunKind::Fkg => {
            let section = config.fkg.as_ref().expect("validated");
            let params = ensemble_params(config);
            let report = fkg_test(
                &params,
                section.t,
                section.interval1,
                section.interval2,
                section.nu,
                section.s,
            )
            .map_err(|e| e.to_string())?;
            totals.ok += params.n - report.censored;
            totals.diverged += report.censored;
            sink.write_json(&format!("{prefix}fkg.json"), &report)
                .map_err(|e| e.to_string())?;
            Ok(format!("diff={:.5} z={:.2}", report.difference, report.z))
        }
        RunKind::Proxy => {
            let section = config.proxy.as_ref().expect("validated");
            let grid = config.grid_arc().expect("validated");
            let init = config.init.as_ref().expect("validated").to_init();
            let site = grid
                .site_of_x(section.center)
                .ok_or("proxy center not on grid")?;
            let mut csv = String::from("half_width,mean_abs_err,stderr,pairs\n");
            let mut report = Vec::new();
            for &hw in &section.half_widths {
                let diffs: Vec<f64> = with_pool(config.run.workers, || {
                    use rayon::prelude::*;
                    (0..section.pairs)
                        .into_par_iter()
                        .map(|sid| {
                            let stream = NoiseStream::new(seed, sid);
                            let full = solve(&grid, &init, Some(&NoiseDrive::full(stream)))
                                .expect("validated");
                            let local =
                                localized_solve(&grid, &init, stream, section.center, hw)
                                    .expect("validated");
                            let a = full.snapshot_at(section.t).expect("snapshot").values[site];
                            let b = local.snapshot_at(section.t).expect("snapshot").values[site];
                            (a - b).abs()
                        })
                        .collect()
                });
                totals.ok += section.pairs;
                let (mean, var) = mean_var(&diffs);
                let stderr = (var / diffs.len() as f64).sqrt();
                csv.push_str(&format!("{hw},{mean},{stderr},{}\n", diffs.len()));
                report.push(serde_json::json!({
                    "half_width": hw,
                    "mean_abs_err": mean,
                    "stderr": stderr,
                    "pairs": diffs.len(),
                }));
            }
            sink.write(&format!("{prefix}proxy.csv"), csv.as_bytes())
                .map_err(|e| e.to_string())?;
            sink.write_json(&format!("{prefix}proxy.json"), &report)
                .map_err(|e| e.to_string())?;
            Ok(format!("{} half-widths", section.half_widths.len()))
        }
        RunKind::XiGen => {
            let section = config.xi.as_ref().expect("validated");
            let set =
                xi_q(section.q, section.n_max, section.budget).map_err(|e| e.to_string())?;
            write_set(sink, &format!("{prefix}xi"), &set)?;
            Ok(format!("pixels={}", set.len()))
        }
    }
}

/// Tails dispatch including the event-specific report wrappers.
#[derive(Debug, Serialize)]
pub struct TailsReport {
    pub curve: TailCurve,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_fit: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

fn tails_run(
    params: &EnsembleParams,
    section: &crate::config::TailsSection,
) -> Result<TailsReport, TailError> {
    let t = section.t.unwrap_or(params.grid.t_end);
    let x = section.x.unwrap_or(0.0);
    let nu = section.nu.unwrap_or(0.5);
    let window = section.window.unwrap_or(1.0);
    let first = *section.sweep.first().expect("validated nonempty");
    match section.event.as_str() {
        "argsup_outside" => {
            let report = argsup_localization(params, t, nu, &section.sweep)?;
            Ok(TailsReport {
                exponent_fit: report
                    .decay_exponent
                    .map(|d| serde_json::json!({ "decay_exponent": d })),
                extra: Some(serde_json::json!({ "p_smoothed": report.p_smoothed })),
                curve: report.curve,
            })
        }
        "modulus_exceed" => {
            let a = section.a.unwrap_or(0.0);
            let eps = section.eps.unwrap_or(0.25);
            let report = modulus_tail(params, t, a, eps, &section.sweep)?;
            Ok(TailsReport {
                exponent_fit: report
                    .fit
                    .as_ref()
                    .map(|f| serde_json::to_value(f).unwrap()),
                extra: None,
                curve: report.curve,
            })
        }
        "box_inf" => {
            let gamma = section.gamma.unwrap_or(1.0 / 12.0);
            let b = section.b.unwrap_or(0.0);
            let l1 = section.l1.unwrap_or(1.0);
            let l2 = section.l2.unwrap_or(1.0);
            let curve = box_inf_tail(params, gamma, b, l1, l2, &section.sweep)?;
            Ok(TailsReport {
                curve,
                exponent_fit: None,
                extra: None,
            })
        }
        name => {
            let event = match name {
                "one_point_lower" => EventSpec::OnePointLower { t, x, gamma: first },
                "one_point_upper" => EventSpec::OnePointUpper { t, x, gamma: first },
                "upsilon_lower" => EventSpec::UpsilonLower { t, x, s: first },
                "upsilon_upper" => EventSpec::UpsilonUpper { t, x, s: first },
                "sup_parabola_upper" => EventSpec::SupParabolaUpper {
                    t,
                    nu,
                    window,
                    s: first,
                },
                "sup_parabola_lower" => EventSpec::SupParabolaLower {
                    t,
                    nu,
                    window,
                    s: first,
                },
                other => {
                    return Err(TailError::BadParam(format!("unknown event '{other}'")));
                }
            };
            let curve = estimate_tail(params, &event, &section.sweep)?;
            let fit = fit_exponent(&curve).ok();
            Ok(TailsReport {
                exponent_fit: fit.map(|f| serde_json::to_value(&f).unwrap()),
                extra: None,
                curve,
            })
        }
    }
}

fn write_set(sink: &mut OutputSink, stem: &str, set: &SpaceTimeSet) -> Result<(), String> {
    let mut csv = Vec::new();
    set.to_csv(&mut csv).map_err(|e| e.to_string())?;
    sink.write(&format!("{stem}.csv"), &csv)
        .map_err(|e| e.to_string())?;
    let sidecar = serde_json::json!({
        "meta": set.meta,
        "count": set.len(),
        "kind": if set.is_pixel() { "pixel" } else { "real" },
    });
    sink.write_json(&format!("{stem}.json"), &sidecar)
        .map_err(|e| e.to_string())
}
