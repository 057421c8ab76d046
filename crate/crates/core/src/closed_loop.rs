//! Closed-loop simulations: the full ESC loop through the diffusion actuator,
//! the average error system under the average control law, and the classic
//! ESC loop without actuator dynamics.

use std::io::Write;

use crate::controller::{
    average_control, integrate_theta_hat, realtime_control, BacksteppingKernel, ControllerState,
    GainConfig,
};
use crate::dither::{demod_m, design_dither_with, DitherDesign, DitherFormula, DitherParams};
use crate::error::{EscError, Result};
use crate::filters::{Estimators, MIN_DEMOD_AMPLITUDE};
use crate::heat_solver::{ActuatorField, Grid, Scheme, SolverConfig};

/// Locally quadratic map `Q(Θ) = y* + (H/2)(Θ - Θ*)²` with `H < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticMap {
    y_star: f64,
    theta_star: f64,
    hessian: f64,
}

impl StaticMap {
    pub fn new(y_star: f64, theta_star: f64, hessian: f64) -> Result<Self> {
        if !(y_star.is_finite() && theta_star.is_finite()) {
            return Err(EscError::invalid("map optimum must be finite"));
        }
        if !(hessian.is_finite() && hessian < 0.0) {
            return Err(EscError::invalid("map Hessian must be finite and < 0 (maximisation)"));
        }
        Ok(Self {
            y_star,
            theta_star,
            hessian,
        })
    }

    pub fn y_star(&self) -> f64 {
        self.y_star
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    pub fn hessian(&self) -> f64 {
        self.hessian
    }

    pub fn evaluate(&self, big_theta: f64) -> f64 {
        let d = big_theta - self.theta_star;
        self.y_star + 0.5 * self.hessian * d * d
    }
}

pub fn evaluate_map(map: &StaticMap, big_theta: f64) -> f64 {
    map.evaluate(big_theta)
}

/// Everything needed to run one scenario.
///
/// Defaults follow the published experiment (`y* = 5`, `Θ* = 2`, `H = -2`,
/// `L = 1`, `K = 0.2`, `c = 10`, `a = 0.2`, `ω = 10`). Not given there and
/// chosen here: `θ̂(0) = 0`, `α(x,0) = 0`, `dt = 1e-3`, 101 nodes, washout and
/// Hessian corners of 1 rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub map: StaticMap,
    pub dither: DitherParams,
    pub dither_formula: DitherFormula,
    /// Adaptation gain `K`; `0` disables adaptation.
    pub k: f64,
    /// Corner of the output low-pass `T`.
    pub corner: f64,
    pub washout_corner: f64,
    pub hessian_corner: f64,
    pub solver: SolverConfig,
    pub grid: Grid,
    pub diffusion: f64,
    pub t_final: f64,
    pub initial_theta_hat: f64,
    /// Initial actuator state; `None` means `α(x,0) ≡ 0`.
    pub initial_alpha: Option<Vec<f64>>,
    /// Solver steps between recorded samples.
    pub record_every: usize,
    /// Solver steps between field snapshots; `None` disables them.
    pub snapshot_every: Option<usize>,
}

impl ScenarioConfig {
    pub fn paper() -> Self {
        Self {
            map: StaticMap::new(5.0, 2.0, -2.0).expect("valid map"),
            dither: DitherParams::new(0.2, 10.0, 1.0).expect("valid dither"),
            dither_formula: DitherFormula::Exact,
            k: 0.2,
            corner: 10.0,
            washout_corner: 1.0,
            hessian_corner: 1.0,
            solver: SolverConfig::new(1e-3, Scheme::CrankNicolson),
            grid: Grid::new(1.0, 101).expect("valid grid"),
            diffusion: 1.0,
            t_final: 100.0,
            initial_theta_hat: 0.0,
            initial_alpha: None,
            record_every: 10,
            snapshot_every: None,
        }
    }

    pub fn length(&self) -> f64 {
        self.grid.length()
    }

    /// Nominal `K̄ = K·H`.
    pub fn k_bar(&self) -> f64 {
        self.k * self.map.hessian
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.solver.dt).round() as usize
    }

    pub fn design(&self) -> DitherDesign {
        design_dither_with(self.dither, self.dither_formula)
    }

    /// Checks consistency and returns the controller gains.
    pub fn validate(&self) -> Result<GainConfig> {
        if self.diffusion != 1.0 {
            return Err(EscError::invalid(format!(
                "diffusion coefficient must be 1 for ESC scenarios (got {}); the dither design assumes unit diffusion",
                self.diffusion
            )));
        }
        if (self.dither.length() - self.grid.length()).abs() > 1e-12 * self.grid.length() {
            return Err(EscError::invalid("dither length and grid length differ"));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(EscError::invalid("final time must be finite and > 0"));
        }
        if self.record_every == 0 {
            return Err(EscError::invalid("record_every must be at least 1"));
        }
        if self.snapshot_every == Some(0) {
            return Err(EscError::invalid("snapshot_every must be at least 1"));
        }
        if let Some(alpha) = &self.initial_alpha {
            if alpha.len() != self.grid.len() {
                return Err(EscError::invalid("initial_alpha does not match the grid"));
            }
        }
        self.solver.validate(&self.grid, self.diffusion)?;
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(EscError::invalid("adaptation gain K must be finite and >= 0"));
        }
        if self.k == 0.0 {
            log::warn!("K = 0: adaptation disabled");
            return GainConfig::disabled(self.corner);
        }
        GainConfig::nominal(self.k, self.map.hessian, self.corner, self.length())
    }
}

/// One recorded instant of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    /// Boundary input `θ(t) = α(L,t)`.
    pub theta: f64,
    /// Map input `Θ(t)`.
    pub big_theta: f64,
    pub y: f64,
    pub u: f64,
    pub g_hat: f64,
    pub h_hat: f64,
    pub s: f64,
    /// `Θ - a sin(ωt) - Θ*`.
    pub vartheta: f64,
}

/// Field values at one instant, for surface plots.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub alpha: Vec<f64>,
}

pub const TRAJECTORY_HEADER: [&str; 9] = ["t", "theta", "Theta", "y", "U", "G_hat", "H_hat", "S", "vartheta"];
pub const SNAPSHOT_HEADER: [&str; 3] = ["t", "x", "alpha"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
    pub snapshots: Vec<FieldSnapshot>,
    /// Node positions for the snapshots.
    pub nodes: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn final_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Samples with `t >= from`.
    pub fn since(&self, from: f64) -> impl Iterator<Item = &TrajectorySample> {
        self.samples.iter().filter(move |s| s.t >= from)
    }

    /// Time-mean of `f` over samples with `t >= from`.
    pub fn mean_since<F: Fn(&TrajectorySample) -> f64>(&self, from: f64, f: F) -> f64 {
        let (sum, n) = self
            .since(from)
            .fold((0.0, 0usize), |(s, n), x| (s + f(x), n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    pub fn max_since<F: Fn(&TrajectorySample) -> f64>(&self, from: f64, f: F) -> f64 {
        self.since(from).map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `t,theta,Theta,y,U,G_hat,H_hat,S,vartheta`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRAJECTORY_HEADER)?;
        for s in &self.samples {
            w.write_record(
                [s.t, s.theta, s.big_theta, s.y, s.u, s.g_hat, s.h_hat, s.s, s.vartheta]
                    .iter()
                    .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `t,x,alpha` triples for every snapshot.
    pub fn write_snapshots_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SNAPSHOT_HEADER)?;
        for snap in &self.snapshots {
            for (x, a) in self.nodes.iter().zip(&snap.alpha) {
                w.write_record([snap.t.to_string(), x.to_string(), a.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn ensure_finite(
    signal: &'static str,
    value: f64,
    step: usize,
    t: f64,
    record: &TrajectoryRecord,
) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(EscError::NonFiniteSignal {
            signal,
            step,
            t,
            last_t: record.last().map(|s| s.t),
        })
    }
}

/// Runs the full loop: measure `Θ`, evaluate the map, estimate `Ĝ, Ĥ`,
/// compute the filtered control, integrate `θ̂`, apply `θ = θ̂ + S` at the
/// boundary and advance the PDE.
pub fn run_esc(config: &ScenarioConfig) -> Result<TrajectoryRecord> {
    let gains = config.validate()?;
    if config.dither.amplitude() < MIN_DEMOD_AMPLITUDE {
        log::warn!("dither amplitude {} gives no excitation", config.dither.amplitude());
        return Err(EscError::AmplitudeTooSmall(config.dither.amplitude()));
    }
    let design = config.design();
    let params = config.dither;
    let dt = config.solver.dt;
    let grid = config.grid;
    let map = config.map;

    let alpha0 = config
        .initial_alpha
        .clone()
        .unwrap_or_else(|| vec![0.0; grid.len()]);
    let mut field = ActuatorField::new(grid, alpha0, 0.0, config.diffusion)?;
    field.set_boundary_value(config.initial_theta_hat + design.s(0.0));

    let mut controller = ControllerState::new(gains, grid.length(), config.initial_theta_hat, dt)?;
    let mut estimators = Estimators::new(params, config.washout_corner, config.hessian_corner, dt)?;
    estimators.prime(map.evaluate(field.spatial_integral()));

    let steps = config.steps();
    let mut record = TrajectoryRecord {
        samples: Vec::with_capacity(steps / config.record_every + 1),
        snapshots: Vec::new(),
        nodes: grid.nodes(),
    };

    for step in 0..=steps {
        let t = step as f64 * dt;
        let big_theta = field.spatial_integral();
        let y = map.evaluate(big_theta);
        let est = estimators.update(y, t);
        let u = realtime_control(&mut controller, est.g_hat, est.h_hat, big_theta, t, &params);
        ensure_finite("U", u, step, t, &record)?;
        ensure_finite("G_hat", est.g_hat, step, t, &record)?;
        ensure_finite("H_hat", est.h_hat, step, t, &record)?;

        if step % config.record_every == 0 {
            record.samples.push(TrajectorySample {
                t,
                theta: field.boundary_value(),
                big_theta,
                y,
                u,
                g_hat: est.g_hat,
                h_hat: est.h_hat,
                s: design.s(t),
                vartheta: big_theta - params.target(t) - map.theta_star,
            });
        }
        if let Some(every) = config.snapshot_every {
            if step % every == 0 {
                record.snapshots.push(FieldSnapshot {
                    t,
                    alpha: field.alpha().to_vec(),
                });
            }
        }
        if step == steps {
            break;
        }

        let theta_hat = integrate_theta_hat(&mut controller, u, dt);
        let boundary = theta_hat + design.s(t + dt);
        ensure_finite("theta", boundary, step, t, &record)?;
        field.step(boundary, &config.solver)?;
    }
    Ok(record)
}

/// One recorded instant of the average system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageSample {
    pub t: f64,
    pub vartheta: f64,
    /// `Z = ϑ + ∫g·u`.
    pub z: f64,
    /// Applied boundary value `u(L,t) = U_av(t)`.
    pub u_av: f64,
    /// `‖u‖_{L²}`.
    pub u_norm: f64,
    /// `Ω = ϑ² + ‖u‖²`.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageTrajectory {
    pub grid: Grid,
    pub k_bar: f64,
    pub samples: Vec<AverageSample>,
    /// `u(·, t)` at every recorded sample.
    pub profiles: Vec<Vec<f64>>,
}

impl AverageTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.omega).collect()
    }
}

/// Numerical settings for [`simulate_average_system`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageSettings {
    pub grid: Grid,
    pub solver: SolverConfig,
    pub t_final: f64,
    pub record_every: usize,
}

/// Runs the average system with the compensator gain `K̄ = K·H` after the
/// admissibility gate.
pub fn run_average_system(
    config: &ScenarioConfig,
    initial_vartheta: f64,
    initial_u: &[f64],
) -> Result<AverageTrajectory> {
    let gains = config.validate()?;
    if config.k == 0.0 {
        return Err(EscError::invalid("the average system needs K > 0"));
    }
    let kernel = BacksteppingKernel::new(gains.k_bar(), config.length())?;
    simulate_average_system(
        &kernel,
        config.k,
        config.map.hessian(),
        AverageSettings {
            grid: config.grid,
            solver: config.solver,
            t_final: config.t_final,
            record_every: config.record_every,
        },
        initial_vartheta,
        initial_u,
    )
}

/// Simulates `ϑ̇ = ∫u`, `u_t = u_xx`, `u_x(0) = 0`, `u(L) = U_av` with
/// `U_av` from the average control law evaluated at the new time level.
///
/// No admissibility gate: a positive `K̄` can be used to probe instability.
/// The boundary value is solved exactly from the affine dependence of the
/// implicit step on it, so `u(L,t) = K̄·Z(t)` holds to rounding at every
/// sample. `ϑ` uses the trapezoidal rule in time.
pub fn simulate_average_system(
    kernel: &BacksteppingKernel,
    k: f64,
    hessian: f64,
    settings: AverageSettings,
    initial_vartheta: f64,
    initial_u: &[f64],
) -> Result<AverageTrajectory> {
    let grid = settings.grid;
    if (k * hessian - kernel.k_bar()).abs() > 1e-12 * kernel.k_bar().abs().max(1.0) {
        return Err(EscError::invalid(format!(
            "K*H = {} does not match the kernel gain {}",
            k * hessian,
            kernel.k_bar()
        )));
    }
    if settings.record_every == 0 {
        return Err(EscError::invalid("record_every must be at least 1"));
    }
    if settings.solver.scheme == Scheme::ExplicitEuler {
        return Err(EscError::invalid("the average system needs an implicit scheme"));
    }
    let mut field = ActuatorField::new(grid, initial_u.to_vec(), 0.0, 1.0)?;
    let mut vartheta = initial_vartheta;
    // g(L) = 0, so Z does not depend on the boundary node
    let u0 = kernel.k_bar() * kernel.z(vartheta, field.alpha(), &grid);
    field.set_boundary_value(u0);

    let control = |vartheta: f64, profile: &[f64]| {
        average_control(kernel, hessian * vartheta, hessian, profile, k, &grid)
    };
    let sample = |t: f64, vartheta: f64, profile: &[f64]| {
        let sq: Vec<f64> = profile.iter().map(|v| v * v).collect();
        let norm2 = grid.integrate(&sq);
        AverageSample {
            t,
            vartheta,
            z: kernel.z(vartheta, profile, &grid),
            u_av: profile[profile.len() - 1],
            u_norm: norm2.sqrt(),
            omega: vartheta * vartheta + norm2,
        }
    };

    let dt = settings.solver.dt;
    let steps = (settings.t_final / dt).round() as usize;
    let mut samples = vec![sample(0.0, vartheta, field.alpha())];
    let mut profiles = vec![field.alpha().to_vec()];

    for step in 1..=steps {
        let t = step as f64 * dt;
        let int_old = field.spatial_integral();
        let mut zero = field.clone();
        zero.step(0.0, &settings.solver)?;
        let mut unit = field.clone();
        unit.step(1.0, &settings.solver)?;
        let response: Vec<f64> = unit
            .alpha()
            .iter()
            .zip(zero.alpha())
            .map(|(a, b)| a - b)
            .collect();

        // ϑ⁺ and Z⁺ are affine in the new boundary value b
        let int0 = zero.spatial_integral();
        let int1 = grid.integrate(&response);
        let theta0 = vartheta + 0.5 * dt * (int_old + int0);
        let theta1 = 0.5 * dt * int1;
        let z0 = kernel.z(theta0, zero.alpha(), &grid);
        let z1 = kernel.z(theta1, &response, &grid);
        let denom = 1.0 - kernel.k_bar() * z1;
        let b = kernel.k_bar() * z0 / denom;

        let next: Vec<f64> = zero
            .alpha()
            .iter()
            .zip(&response)
            .map(|(z, r)| z + b * r)
            .collect();
        vartheta = theta0 + b * theta1;
        let mut next = next;
        let last = next.len() - 1;
        next[last] = control(vartheta, &next);
        if !vartheta.is_finite() {
            return Err(EscError::NonFiniteSignal {
                signal: "vartheta",
                step,
                t,
                last_t: samples.last().map(|s| s.t),
            });
        }
        field = ActuatorField::new(grid, next, t, 1.0)?;

        if step % settings.record_every == 0 {
            samples.push(sample(t, vartheta, field.alpha()));
            profiles.push(field.alpha().to_vec());
        }
    }
    Ok(AverageTrajectory {
        grid,
        k_bar: kernel.k_bar(),
        samples,
        profiles,
    })
}

/// ESC without actuator dynamics: `Θ = θ̂ + a sin(ωt)`, `θ̂̇ = K·M(t)·y`.
///
/// Forward Euler in time. Recorded `theta` and `Theta` both hold the map
/// input; `H_hat` is not estimated and recorded as zero.
pub fn run_standard_esc(
    map: &StaticMap,
    dither: &DitherParams,
    k: f64,
    t_final: f64,
    dt: f64,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(EscError::invalid("adaptation gain K must be finite and >= 0"));
    }
    if dither.amplitude() < MIN_DEMOD_AMPLITUDE {
        return Err(EscError::AmplitudeTooSmall(dither.amplitude()));
    }
    if !(dt > 0.0 && t_final > 0.0) || record_every == 0 {
        return Err(EscError::invalid("need dt > 0, t_final > 0 and record_every >= 1"));
    }
    let steps = (t_final / dt).round() as usize;
    let mut theta_hat = 0.0;
    let mut record = TrajectoryRecord::default();
    for step in 0..=steps {
        let t = step as f64 * dt;
        let s = dither.target(t);
        let big_theta = theta_hat + s;
        let y = map.evaluate(big_theta);
        let g_hat = demod_m(dither, t) * y;
        let u = k * g_hat;
        ensure_finite("U", u, step, t, &record)?;
        if step % record_every == 0 {
            record.samples.push(TrajectorySample {
                t,
                theta: big_theta,
                big_theta,
                y,
                u,
                g_hat,
                h_hat: 0.0,
                s,
                vartheta: theta_hat - map.theta_star,
            });
        }
        theta_hat += dt * u;
    }
    Ok(record)
}
