//! Parameter sweeps: one run per value in its own directory, fanned out over
//! worker threads, then an aggregate scaling report.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{bail, Context};
use diffusion_esc::analysis::{residual_scaling, Report, ScalingRun};

use crate::config::{FileConfig, Kind, SweepParam};
use crate::run::{execute, RunSummary};

pub const THREADS_ENV: &str = "ESC_THREADS";

#[derive(Debug)]
pub struct SweepOutcome {
    pub value: f64,
    pub dir: PathBuf,
    pub result: Result<RunSummary, String>,
}

/// Worker count: `ESC_THREADS` if set and positive, else the machine's
/// parallelism, never more than the number of jobs.
pub fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

fn run_dir(out: &Path, param: SweepParam, value: f64) -> PathBuf {
    out.join(format!("{}_{value}", param.as_str()))
}

pub fn sweep(
    base: &FileConfig,
    name: &str,
    config_path: &Path,
    param: SweepParam,
    values: &[f64],
    out: &Path,
) -> anyhow::Result<Vec<SweepOutcome>> {
    if base.kind == Kind::Average {
        bail!("sweeps need an esc or standard scenario");
    }
    if values.is_empty() {
        bail!("no sweep values given");
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SweepOutcome>>> = Mutex::new((0..values.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..worker_count(values.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&value) = values.get(i) else { break };
                let cfg = base.with_param(param, value);
                let dir = run_dir(out, param, value);
                let run_name = format!("{name}/{}={value}", param.as_str());
                let result = panic::catch_unwind(AssertUnwindSafe(|| execute(&cfg, &run_name, config_path, &dir)))
                    .map_err(|_| "run panicked".to_string())
                    .and_then(|r| r.map_err(|e| format!("{e:#}")));
                match &result {
                    Ok(_) => log::info!("{run_name}: done"),
                    Err(e) => log::warn!("{run_name}: {e}"),
                }
                slots.lock().expect("sweep slots")[i] = Some(SweepOutcome { value, dir, result });
            });
        }
    });
    let outcomes: Vec<SweepOutcome> = slots
        .into_inner()
        .expect("sweep slots")
        .into_iter()
        .map(|o| o.expect("every job finished"))
        .collect();

    let summary = summarize(base, param, &outcomes);
    fs::write(out.join("summary.txt"), summary.to_string())?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record(["value", "status", "y_residual", "Theta_residual"])?;
    for o in &outcomes {
        let (status, y, th) = match &o.result {
            Ok(s) => ("ok", s.y_residual.to_string(), s.theta_residual.to_string()),
            Err(_) => ("failed", String::new(), String::new()),
        };
        w.write_record([o.value.to_string(), status.to_string(), y, th])?;
    }
    w.flush()?;
    Ok(outcomes)
}

fn summarize(base: &FileConfig, param: SweepParam, outcomes: &[SweepOutcome]) -> Report {
    let mut report = Report::new();
    report.push("param", param.as_str());
    report.push("runs", outcomes.len());
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    report.push("failed", failed);
    for o in outcomes {
        let key = format!("run.{}={}", param.as_str(), o.value);
        match &o.result {
            Ok(s) => report.push(
                key,
                format!("ok y_residual={:.6e} Theta_residual={:.6e}", s.y_residual, s.theta_residual),
            ),
            Err(e) => report.push(key, format!("FAILED {e}")),
        }
    }
    let runs: Vec<ScalingRun> = outcomes
        .iter()
        .filter_map(|o| {
            let s = o.result.as_ref().ok()?;
            let cfg = base.with_param(param, o.value);
            Some(ScalingRun {
                amplitude: cfg.dither.a,
                omega: cfg.dither.omega,
                y_residual: s.y_residual,
                theta_residual: s.theta_residual,
            })
        })
        .collect();
    match param {
        SweepParam::Amplitude | SweepParam::Omega => report.extend(residual_scaling(&runs).to_report()),
        SweepParam::Gain => report.push("scaling", "not applicable to a gain sweep"),
    }
    report
}
