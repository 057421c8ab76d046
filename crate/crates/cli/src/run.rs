//! One scenario run: simulate, then write CSVs, report, plots and manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use diffusion_esc::analysis::{fit_decay, late_residuals, target_residuals, Report};
use diffusion_esc::controller::{default_gain_tol, DEFAULT_KAPPA_MAX};
use diffusion_esc::{
    check_gain, run_average_system, run_esc, run_standard_esc, simulate_average_system,
    AverageSettings, AverageTrajectory, BacksteppingKernel, ScenarioConfig, TrajectoryRecord,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{FileConfig, Kind};
use crate::plot::{heatmap, LineChart, Series};

pub const FAILED_MARKER: &str = ".failed";
pub const MANIFEST: &str = "manifest.json";

/// Late-time residuals of a finished run, used by sweeps.
#[derive(Debug, Clone, Copy)]
pub struct RunSummary {
    pub y_residual: f64,
    pub theta_residual: f64,
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub kind: &'static str,
    pub config_path: String,
    pub output_dir: String,
    pub determinism: &'static str,
    pub files: Vec<ManifestEntry>,
}

/// Files produced so far in one output directory.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<F>(&mut self, name: &str, fill: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>,
    {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("cannot format {name}"))?;
        self.write(name, &buf)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Checks a scenario without running it, so bad configs fail before any file
/// is written.
pub fn preflight(cfg: &FileConfig) -> anyhow::Result<ScenarioConfig> {
    let scenario = cfg.scenario()?;
    match cfg.kind {
        Kind::Esc => {
            scenario.validate()?;
        }
        Kind::Average => {
            if cfg.average.unchecked_gain {
                BacksteppingKernel::new(cfg.k_bar()?, scenario.length())?;
            } else {
                scenario.validate()?;
                if scenario.k == 0.0 {
                    bail!("the average system needs K > 0");
                }
            }
        }
        Kind::Standard => {
            if !(scenario.k >= 0.0) {
                bail!("adaptation gain K must be >= 0");
            }
        }
    }
    Ok(scenario)
}

/// Runs `cfg` into `out`. On failure after the directory exists, a
/// `.failed` marker with the error text is left behind.
pub fn execute(cfg: &FileConfig, name: &str, config_path: &Path, out: &Path) -> anyhow::Result<RunSummary> {
    let scenario = preflight(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let result = produce(cfg, &scenario, name, config_path, out);
    if let Err(e) = &result {
        let _ = fs::write(&marker, format!("{e:#}\n"));
    }
    result
}

fn produce(
    cfg: &FileConfig,
    scenario: &ScenarioConfig,
    name: &str,
    config_path: &Path,
    out: &Path,
) -> anyhow::Result<RunSummary> {
    let mut outputs = Outputs {
        dir: out.to_path_buf(),
        files: Vec::new(),
    };
    let mut report = Report::new();
    report.push("scenario", name);
    report.push("kind", cfg.kind.as_str());

    let summary = match cfg.kind {
        Kind::Esc => {
            let record = run_esc(scenario)?;
            esc_outputs(cfg, scenario, &record, &mut outputs, &mut report)?
        }
        Kind::Standard => {
            let record = run_standard_esc(
                &scenario.map,
                &scenario.dither,
                scenario.k,
                scenario.t_final,
                scenario.solver.dt,
                scenario.record_every,
            )?;
            standard_outputs(cfg, scenario, &record, &mut outputs, &mut report)?
        }
        Kind::Average => average_outputs(cfg, scenario, &mut outputs, &mut report)?,
    };
    outputs.write("report.txt", report.to_string().as_bytes())?;

    let mut files = Vec::new();
    for file in &outputs.files {
        let bytes = fs::read(out.join(file))?;
        files.push(ManifestEntry {
            file: file.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = RunManifest {
        scenario: name.to_string(),
        kind: cfg.kind.as_str(),
        config_path: config_path.display().to_string(),
        output_dir: out.display().to_string(),
        determinism: "no random inputs: the same config reproduces every listed checksum",
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out.join(MANIFEST), json + "\n")?;
    Ok(summary)
}

fn residual_start(cfg: &FileConfig, scenario: &ScenarioConfig) -> f64 {
    scenario.t_final * (1.0 - cfg.output.residual_window)
}

fn series<'a, F: Fn(&diffusion_esc::TrajectorySample) -> f64>(
    name: &'a str,
    record: &TrajectoryRecord,
    f: F,
) -> Series<'a> {
    Series {
        name,
        points: record.samples.iter().map(|s| (s.t, f(s))).collect(),
    }
}

fn chart(outputs: &mut Outputs, file: &str, title: &str, y_label: &str, series: Vec<Series>) -> anyhow::Result<()> {
    let svg = LineChart {
        title,
        x_label: "t [s]",
        y_label,
        series,
        log_y: false,
    }
    .render();
    outputs.write(file, svg.as_bytes())
}

fn esc_outputs(
    cfg: &FileConfig,
    scenario: &ScenarioConfig,
    record: &TrajectoryRecord,
    outputs: &mut Outputs,
    report: &mut Report,
) -> anyhow::Result<RunSummary> {
    let design = scenario.design();
    let from = residual_start(cfg, scenario);
    let (y_res, theta_res) = late_residuals(record, &scenario.map, from);
    let theta_star = scenario.map.theta_star();
    let envelope = design.s_envelope();
    let theta_dev = record.max_since(from, |s| (s.theta - theta_star).abs());
    let k_bar = scenario.k_bar();
    report.push("A", format!("{:.10}", design.amplitude()));
    report.push("phi", format!("{:.10}", design.phase()));
    report.push("B", format!("{:.10}", design.b()));
    report.push("psi", format!("{:.10}", design.psi()));
    report.push("K", scenario.k);
    report.push("K_bar", k_bar);
    if k_bar < 0.0 {
        if let Ok(status) = check_gain(k_bar, scenario.length(), DEFAULT_KAPPA_MAX, default_gain_tol(scenario.length())) {
            report.push("gain_margin", format!("{:.6e}", status.margin));
            report.push("near_singular", status.near_singular);
        }
    }
    report.push("samples", record.samples.len());
    report.push("residual_from", from);
    report.push("y_residual", format!("{y_res:.6e}"));
    report.push("Theta_residual", format!("{theta_res:.6e}"));
    report.push("theta_max_deviation", format!("{theta_dev:.6e}"));
    report.push("S_envelope", format!("{envelope:.6e}"));
    report.push("theta_envelope_ratio", format!("{:.6}", theta_dev / envelope));
    report.push("H_hat_late_mean", format!("{:.6}", record.mean_since(from, |s| s.h_hat)));
    if let Some(last) = record.last() {
        report.push("final_theta_hat", format!("{:.6}", last.theta - last.s));
        report.push("final_y", format!("{:.6}", last.y));
    }

    outputs.csv("trajectory.csv", |b| record.write_csv(b))?;
    if !record.snapshots.is_empty() {
        outputs.csv("field.csv", |b| record.write_snapshots_csv(b))?;
    }
    if cfg.output.plots {
        chart(outputs, "y.svg", "Map output", "y", vec![series("y", record, |s| s.y)])?;
        chart(outputs, "control.svg", "Control input", "U", vec![series("U", record, |s| s.u)])?;
        chart(
            outputs,
            "theta.svg",
            "Boundary input and integrated input",
            "value",
            vec![
                series("theta", record, |s| s.theta),
                series("Theta", record, |s| s.big_theta),
            ],
        )?;
        chart(outputs, "dither.svg", "Boundary dither", "S", vec![series("S", record, |s| s.s)])?;
        if !record.snapshots.is_empty() {
            let times: Vec<f64> = record.snapshots.iter().map(|s| s.t).collect();
            let rows: Vec<Vec<f64>> = record.snapshots.iter().map(|s| s.alpha.clone()).collect();
            outputs.write("field.svg", heatmap("alpha(x, t)", &times, &record.nodes, &rows).as_bytes())?;
        }
    }
    Ok(RunSummary {
        y_residual: y_res,
        theta_residual: theta_res,
    })
}

fn standard_outputs(
    cfg: &FileConfig,
    scenario: &ScenarioConfig,
    record: &TrajectoryRecord,
    outputs: &mut Outputs,
    report: &mut Report,
) -> anyhow::Result<RunSummary> {
    let from = residual_start(cfg, scenario);
    let (y_res, theta_res) = late_residuals(record, &scenario.map, from);
    report.push("K", scenario.k);
    report.push("samples", record.samples.len());
    report.push("residual_from", from);
    report.push("y_residual", format!("{y_res:.6e}"));
    report.push("Theta_residual", format!("{theta_res:.6e}"));
    if let Some(last) = record.last() {
        report.push("final_theta_hat", format!("{:.6}", last.vartheta + scenario.map.theta_star()));
    }
    outputs.csv("trajectory.csv", |b| record.write_csv(b))?;
    if cfg.output.plots {
        chart(outputs, "y.svg", "Map output", "y", vec![series("y", record, |s| s.y)])?;
        chart(outputs, "theta.svg", "Map input", "Theta", vec![series("Theta", record, |s| s.big_theta)])?;
    }
    Ok(RunSummary {
        y_residual: y_res,
        theta_residual: theta_res,
    })
}

fn write_average_csv(traj: &AverageTrajectory, buf: &mut Vec<u8>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["t", "vartheta", "Z", "U_av", "u_norm", "Omega"])?;
    for s in &traj.samples {
        w.write_record(
            [s.t, s.vartheta, s.z, s.u_av, s.u_norm, s.omega].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_profiles_csv(traj: &AverageTrajectory, every: usize, buf: &mut Vec<u8>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["t", "x", "u"])?;
    let nodes = traj.grid.nodes();
    for (s, p) in traj.samples.iter().zip(&traj.profiles).step_by(every) {
        for (x, u) in nodes.iter().zip(p) {
            w.write_record([s.t.to_string(), x.to_string(), u.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn average_outputs(
    cfg: &FileConfig,
    scenario: &ScenarioConfig,
    outputs: &mut Outputs,
    report: &mut Report,
) -> anyhow::Result<RunSummary> {
    let u0 = vec![cfg.average.initial_u; scenario.grid.len()];
    let vartheta0 = cfg.average.initial_vartheta;
    let k_bar = cfg.k_bar()?;
    let kernel = BacksteppingKernel::new(k_bar, scenario.length())?;
    let traj = if cfg.average.unchecked_gain {
        // any K with K·H_eff = K̄ gives the same average dynamics
        let k = if scenario.k > 0.0 { scenario.k } else { 1.0 };
        let settings = AverageSettings {
            grid: scenario.grid,
            solver: scenario.solver,
            t_final: scenario.t_final,
            record_every: scenario.record_every,
        };
        simulate_average_system(&kernel, k, k_bar / k, settings, vartheta0, &u0)?
    } else {
        run_average_system(scenario, vartheta0, &u0)?
    };

    report.push("K_bar", k_bar);
    report.push("A_cl", kernel.a_cl());
    report.push("kernel_normalization", format!("{:.6e}", kernel.normalization()));
    report.push("gate_bypassed", cfg.average.unchecked_gain);
    report.push("samples", traj.samples.len());
    let fit = fit_decay(&traj.times(), &traj.omegas(), cfg.average.decay_window)?;
    report.extend(fit.to_report());
    let residuals = target_residuals(&traj, &kernel, cfg.average.residual_skip);
    report.extend(residuals.to_report());

    outputs.csv("trajectory.csv", |b| write_average_csv(&traj, b))?;
    outputs.csv("decay_fit.csv", |b| fit.write_residuals_csv(b))?;
    if let Some(every) = cfg.output.snapshot_every {
        if every == 0 {
            bail!("output.snapshot_every must be at least 1");
        }
        outputs.csv("field.csv", |b| write_profiles_csv(&traj, every, b))?;
    }
    if cfg.output.plots {
        let pts = |f: fn(&diffusion_esc::AverageSample) -> f64| -> Vec<(f64, f64)> {
            traj.samples.iter().map(|s| (s.t, f(s))).collect()
        };
        let omega_svg = LineChart {
            title: "Composite norm",
            x_label: "t [s]",
            y_label: "Omega",
            series: vec![Series {
                name: "Omega",
                points: pts(|s| s.omega),
            }],
            log_y: true,
        }
        .render();
        outputs.write("omega.svg", omega_svg.as_bytes())?;
        chart(
            outputs,
            "vartheta.svg",
            "Average estimation error",
            "value",
            vec![
                Series {
                    name: "vartheta",
                    points: pts(|s| s.vartheta),
                },
                Series {
                    name: "Z",
                    points: pts(|s| s.z),
                },
            ],
        )?;
        let times = traj.times();
        outputs.write(
            "field.svg",
            heatmap("u(x, t)", &times, &traj.grid.nodes(), &traj.profiles).as_bytes(),
        )?;
    }
    let last = traj.samples.last().map_or(f64::NAN, |s| s.omega);
    Ok(RunSummary {
        y_residual: last,
        theta_residual: traj.samples.last().map_or(f64::NAN, |s| s.vartheta.abs()),
    })
}
