mod config;
mod plot;
mod run;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diffusion_esc::dither::{one_period_samples, verify_integral_identity};
use diffusion_esc::quadrature::GaussLegendre;
use diffusion_esc::{design_dither_with, DitherFormula, DitherParams};

use config::{FileConfig, LoadError, SweepParam};

#[derive(Parser)]
#[command(name = "esc-pde", version, about = "Extremum seeking through a diffusion actuator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write CSVs, report, plots and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the boundary dither constants and a one-period table.
    #[command(allow_negative_numbers = true)]
    DesignDither {
        #[arg(long, value_parser = positive)]
        a: f64,
        #[arg(long, value_parser = positive)]
        omega: f64,
        #[arg(long = "L", visible_alias = "length", value_parser = positive)]
        length: f64,
        /// `exact` or `published`.
        #[arg(long, default_value = "exact")]
        formula: String,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Repeat a scenario over values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// a, omega or K; defaults to the config's [sweep] section.
        #[arg(long)]
        param: Option<SweepParam>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be a positive number"))
    }
}

enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn load(path: &Path) -> Result<FileConfig, Failure> {
    FileConfig::load(path).map_err(|e| match e {
        LoadError::Empty => Failure::Usage(format!(
            "{} is empty; a scenario config needs at least one key (see configs/)",
            path.display()
        )),
        LoadError::Invalid(e) => Failure::Run(e),
    })
}

fn cmd_run(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    let name = cfg.name_or(config);
    run::execute(&cfg, &name, config, out)?;
    println!("{name}: wrote {}", out.display());
    Ok(())
}

fn cmd_design_dither(a: f64, omega: f64, length: f64, formula: &str, samples: usize) -> Result<(), Failure> {
    let formula = match formula {
        "exact" => DitherFormula::Exact,
        "published" => DitherFormula::Published,
        other => return Err(Failure::Usage(format!("unknown formula `{other}`"))),
    };
    let params = DitherParams::new(a, omega, length).map_err(|e| Failure::Usage(e.to_string()))?;
    let d = design_dither_with(params, formula);
    let times = one_period_samples(&params, samples.max(1));
    let identity = match verify_integral_identity(&d, &times, 1e-6) {
        Ok(r) => r.max_residual,
        Err(diffusion_esc::EscError::IdentityViolated { max_residual, .. }) => max_residual,
        Err(e) => return Err(Failure::Run(e.into())),
    };
    println!("a: {a}");
    println!("omega: {omega}");
    println!("L: {length}");
    println!("formula: {}", if formula == DitherFormula::Exact { "exact" } else { "published" });
    println!("A: {:.10}", d.amplitude());
    println!("phi: {:.10}", d.phase());
    println!("B: {:.10}", d.b());
    println!("psi: {:.10}", d.psi());
    println!("identity_max_residual: {identity:.3e}");
    println!();
    println!("t,S,a_sin_wt,integral_beta");
    let rule = GaussLegendre::new(64);
    for t in times {
        let integral = rule.integrate_composite(0.0, length, 4, |x| d.beta(x, t));
        println!("{t:.6},{:.10},{:.10},{integral:.10}", d.s(t), params.target(t));
    }
    Ok(())
}

fn cmd_sweep(config: &Path, param: Option<SweepParam>, values: Option<Vec<f64>>, out: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    let from_file = cfg.sweep.clone();
    let param = match (param, &from_file) {
        (Some(p), _) => p,
        (None, Some(s)) => s.param.parse().map_err(Failure::Usage)?,
        (None, None) => return Err(Failure::Usage("--param is required (no [sweep] section in config)".into())),
    };
    let values = match (values, from_file) {
        (Some(v), _) => v,
        (None, Some(s)) => s.values,
        (None, None) => return Err(Failure::Usage("--values is required (no [sweep] section in config)".into())),
    };
    if values.is_empty() {
        return Err(Failure::Usage("--values is empty".into()));
    }
    let name = cfg.name_or(config);
    let outcomes = sweep::sweep(&cfg, &name, config, param, &values, out)?;
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    for o in &outcomes {
        match &o.result {
            Ok(_) => println!("{}={}: ok ({})", param.as_str(), o.value, o.dir.display()),
            Err(e) => println!("{}={}: FAILED {e}", param.as_str(), o.value),
        }
    }
    println!("summary: {}", out.join("summary.txt").display());
    if failed == outcomes.len() {
        return Err(Failure::Run(anyhow::anyhow!("all {failed} sweep runs failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::DesignDither {
            a,
            omega,
            length,
            formula,
            samples,
        } => cmd_design_dither(a, omega, length, &formula, samples),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => cmd_sweep(&config, param, values, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
