//! Post-processing checks: the backstepping change of variables, exponential
//! decay fits and the amplitude scaling of late-time residuals.

use std::fmt;
use std::io::Write;

use crate::closed_loop::{AverageTrajectory, StaticMap, TrajectoryRecord};
use crate::controller::{check_gain, default_gain_tol, BacksteppingKernel, GainStatus, DEFAULT_KAPPA_MAX};
use crate::error::{EscError, Result};
use crate::fit::{line_fit, LineFit};
use crate::heat_solver::Grid;

/// Transformed state `(Z, w)` with `w(x) = u(x) - γ(x)Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub z: f64,
    pub w: Vec<f64>,
}

/// How `∫₀ᴸ g·γ` is evaluated in [`from_target_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelIntegral {
    /// Same grid quadrature as [`to_target`]; the two maps are inverse to rounding.
    #[default]
    Grid,
    /// Closed form; the round trip then exposes the quadrature error.
    Exact,
}

pub fn to_target(kernel: &BacksteppingKernel, vartheta: f64, u_profile: &[f64], grid: &Grid) -> TargetState {
    let z = kernel.z(vartheta, u_profile, grid);
    let w = u_profile
        .iter()
        .enumerate()
        .map(|(i, u)| u - kernel.gamma(grid.x(i)) * z)
        .collect();
    TargetState { z, w }
}

/// Inverse of [`to_target`] with the grid quadrature.
pub fn from_target(kernel: &BacksteppingKernel, target: &TargetState, grid: &Grid) -> (f64, Vec<f64>) {
    from_target_with(kernel, target, grid, KernelIntegral::Grid)
}

/// `u = w + γZ`, `ϑ = (1 - ∫g·γ)Z - ∫g·w`.
pub fn from_target_with(
    kernel: &BacksteppingKernel,
    target: &TargetState,
    grid: &Grid,
    integral: KernelIntegral,
) -> (f64, Vec<f64>) {
    let gamma = kernel.gamma_on(grid);
    let g = kernel.g_on(grid);
    let g_gamma = match integral {
        KernelIntegral::Grid => {
            let prod: Vec<f64> = g.iter().zip(&gamma).map(|(a, b)| a * b).collect();
            grid.integrate(&prod)
        }
        KernelIntegral::Exact => kernel.g_gamma_integral(),
    };
    let gw: Vec<f64> = g.iter().zip(&target.w).map(|(a, b)| a * b).collect();
    let vartheta = (1.0 - g_gamma) * target.z - grid.integrate(&gw);
    let u = target.w.iter().zip(&gamma).map(|(w, c)| w + c * target.z).collect();
    (vartheta, u)
}

/// Largest deviation of `from_target_with(to_target(ϑ, u))` from `(ϑ, u)`.
pub fn round_trip_error(
    kernel: &BacksteppingKernel,
    vartheta: f64,
    u_profile: &[f64],
    grid: &Grid,
    integral: KernelIntegral,
) -> f64 {
    let target = to_target(kernel, vartheta, u_profile, grid);
    let (v2, u2) = from_target_with(kernel, &target, grid, integral);
    u_profile
        .iter()
        .zip(&u2)
        .map(|(a, b)| (a - b).abs())
        .fold((vartheta - v2).abs(), f64::max)
}

/// Residuals of the target system along an average-system trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetResiduals {
    /// `max |Ż - A_cl Z|` with `Ż` from central differences.
    pub z_residual: f64,
    pub max_w_boundary: f64,
    /// `max |w_t - w_xx|` over interior nodes.
    pub heat_residual: f64,
    /// Samples used after the skipped start.
    pub samples_used: usize,
    pub conditioning: Option<GainStatus>,
    /// Recorded spacing too coarse for differencing, or too few samples.
    pub inconclusive: bool,
    pub notes: Vec<String>,
}

/// Checks `Ż = A_cl Z`, `w(L) = 0` and `w_t = w_xx` on recorded samples with
/// `t ≥ skip`. Interior time points use central differences, so the first and
/// last kept samples only enter as neighbours.
pub fn target_residuals(
    trajectory: &AverageTrajectory,
    kernel: &BacksteppingKernel,
    skip: f64,
) -> TargetResiduals {
    let grid = &trajectory.grid;
    let mut notes = Vec::new();
    let conditioning = check_gain(
        kernel.k_bar(),
        kernel.length(),
        DEFAULT_KAPPA_MAX,
        default_gain_tol(kernel.length()),
    )
    .ok();
    if let Some(status) = conditioning {
        if status.near_singular {
            notes.push(format!(
                "K_bar within {:e} of a forbidden value; kernel normalisation {:e}",
                status.margin,
                kernel.normalization()
            ));
        }
    }

    let targets: Vec<(f64, TargetState)> = trajectory
        .samples
        .iter()
        .zip(&trajectory.profiles)
        .map(|(s, p)| (s.t, to_target(kernel, s.vartheta, p, grid)))
        .collect();
    let max_w_boundary = targets
        .iter()
        .filter(|(t, _)| *t >= skip)
        .map(|(_, tg)| tg.w[tg.w.len() - 1].abs())
        .fold(0.0, f64::max);

    let mut inconclusive = false;
    let decay = kernel.a_cl().abs().max(1.0);
    if let [a, b, ..] = targets.as_slice() {
        let spacing = b.0 - a.0;
        // central differences need several samples per time constant
        if spacing * decay > 0.1 {
            inconclusive = true;
            notes.push(format!("sample spacing {spacing} too coarse for differencing"));
        }
    }

    let dx2 = grid.dx() * grid.dx();
    let (mut z_residual, mut heat_residual, mut used) = (0.0f64, 0.0f64, 0usize);
    for win in targets.windows(3) {
        let ((t0, prev), (_, cur), (t2, next)) = (&win[0], &win[1], &win[2]);
        if *t0 < skip {
            continue;
        }
        used += 1;
        let h = t2 - t0;
        let z_dot = (next.z - prev.z) / h;
        z_residual = z_residual.max((z_dot - kernel.a_cl() * cur.z).abs());
        let w = &cur.w;
        for i in 1..w.len() - 1 {
            let wt = (next.w[i] - prev.w[i]) / h;
            let wxx = (w[i + 1] - 2.0 * w[i] + w[i - 1]) / dx2;
            heat_residual = heat_residual.max((wt - wxx).abs());
        }
    }
    if used == 0 {
        inconclusive = true;
        notes.push("fewer than three samples after the skipped start".into());
    }
    TargetResiduals {
        z_residual,
        max_w_boundary,
        heat_residual,
        samples_used: used,
        conditioning,
        inconclusive,
        notes,
    }
}

/// Values of `Ω` at or below this fraction of `Ω(0)` are treated as rounding noise.
pub const DECAY_FLOOR: f64 = 1e-26;

/// Default trailing window for [`fit_decay`].
pub const DEFAULT_DECAY_WINDOW: f64 = 0.5;

/// `Ω(t) ≈ η̂·Ω(0)·e^{-ν̂t}` fitted on a trailing window.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub eta_hat: f64,
    pub nu_hat: f64,
    pub r_squared: f64,
    pub omega0: f64,
    /// `[t_start, t_end]` of the fitted window.
    pub window: (f64, f64),
    pub points: usize,
    /// Non-positive samples dropped from the window.
    pub excluded: usize,
    /// Some window samples sit on the rounding floor.
    pub degenerate: bool,
    /// `(t, log Ω - fitted line)` for every fitted point.
    pub residuals: Vec<(f64, f64)>,
}

impl DecayFit {
    pub fn write_residuals_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "log_residual"])?;
        for (t, r) in &self.residuals {
            w.write_record([t.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares line through `log Ω` over the trailing `window` fraction
/// of the time span; `ν̂` is minus the slope.
pub fn fit_decay(times: &[f64], omega: &[f64], window: f64) -> Result<DecayFit> {
    if times.len() != omega.len() {
        return Err(EscError::invalid("time and Omega series differ in length"));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(EscError::invalid("decay window must lie in (0, 1]"));
    }
    let (Some(&t0), Some(&t_end)) = (times.first(), times.last()) else {
        return Err(EscError::invalid("empty Omega series"));
    };
    let omega0 = omega[0];
    let start = t_end - window * (t_end - t0);
    let floor = DECAY_FLOOR * omega0.abs();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut excluded, mut degenerate) = (0, false);
    for (&t, &o) in times.iter().zip(omega) {
        if t < start {
            continue;
        }
        if !(o > 0.0) {
            excluded += 1;
            continue;
        }
        if o <= floor || o < f64::MIN_POSITIVE * 1e3 {
            degenerate = true;
        }
        xs.push(t);
        ys.push(o.ln());
    }
    let fit = line_fit(&xs, &ys)
        .ok_or_else(|| EscError::invalid("fewer than two usable points in the decay window"))?;
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(&t, &y)| (t, y - (fit.intercept + fit.slope * t)))
        .collect();
    Ok(DecayFit {
        eta_hat: fit.intercept.exp() / omega0,
        nu_hat: -fit.slope,
        r_squared: fit.r_squared,
        omega0,
        window: (start, t_end),
        points: xs.len(),
        excluded,
        degenerate,
        residuals,
    })
}

/// Late-time residuals of one closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRun {
    pub amplitude: f64,
    pub omega: f64,
    pub y_residual: f64,
    pub theta_residual: f64,
}

/// Time-means of `|y - y*|` and `|Θ - Θ*|` for `t ≥ from`.
pub fn late_residuals(record: &TrajectoryRecord, map: &StaticMap, from: f64) -> (f64, f64) {
    (
        record.mean_since(from, |s| (s.y - map.y_star()).abs()),
        record.mean_since(from, |s| (s.big_theta - map.theta_star()).abs()),
    )
}

/// Residuals at or below this are indistinguishable from solver error.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

/// Minimum number of amplitudes for an exponent fit.
pub const MIN_SCALING_POINTS: usize = 3;

/// A doubled frequency may raise a residual by at most this factor.
pub const OMEGA_SLACK: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    /// Frequency at which the amplitude fit was made.
    pub omega: Option<f64>,
    pub points: usize,
    /// Slope of `log |y - y*|` against `log a`.
    pub y_fit: Option<LineFit>,
    /// Slope of `log |Θ - Θ*|` against `log a`.
    pub theta_fit: Option<LineFit>,
    /// `None` when no amplitude was run at two frequencies.
    pub omega_monotone: Option<bool>,
    pub inconclusive: bool,
    pub notes: Vec<String>,
}

impl ScalingReport {
    pub fn y_exponent(&self) -> Option<f64> {
        self.y_fit.map(|f| f.slope)
    }

    pub fn theta_exponent(&self) -> Option<f64> {
        self.theta_fit.map(|f| f.slope)
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        r.push("scaling_omega", opt(self.omega));
        r.push("scaling_points", self.points);
        r.push("y_exponent", opt(self.y_exponent()));
        r.push("y_r_squared", opt(self.y_fit.map(|f| f.r_squared)));
        r.push("theta_exponent", opt(self.theta_exponent()));
        r.push("theta_r_squared", opt(self.theta_fit.map(|f| f.r_squared)));
        r.push(
            "omega_monotone",
            self.omega_monotone.map_or("n/a".to_string(), |m| m.to_string()),
        );
        r.push("inconclusive", self.inconclusive);
        for note in &self.notes {
            r.push("note", note);
        }
        r
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Fits residual exponents in the dither amplitude at the frequency with the
/// most distinct amplitudes (the largest such frequency on ties), and checks
/// that doubling `ω` at fixed `a` does not raise either residual.
pub fn residual_scaling(runs: &[ScalingRun]) -> ScalingReport {
    let mut notes = Vec::new();
    let mut omegas: Vec<f64> = Vec::new();
    for r in runs {
        if !omegas.iter().any(|&w| same(w, r.omega)) {
            omegas.push(r.omega);
        }
    }
    let group = |w: f64| -> Vec<&ScalingRun> {
        let mut g: Vec<&ScalingRun> = Vec::new();
        for r in runs.iter().filter(|r| same(r.omega, w)) {
            if !g.iter().any(|q| same(q.amplitude, r.amplitude)) {
                g.push(r);
            }
        }
        g
    };
    let omega = omegas
        .iter()
        .copied()
        .max_by(|a, b| group(*a).len().cmp(&group(*b).len()).then(a.total_cmp(b)));

    let mut inconclusive = false;
    let (mut y_fit, mut theta_fit, mut points) = (None, None, 0);
    if let Some(w) = omega {
        let g = group(w);
        points = g.len();
        if g.iter().any(|r| r.y_residual <= RESIDUAL_FLOOR || r.theta_residual <= RESIDUAL_FLOOR) {
            inconclusive = true;
            notes.push(format!("a residual is at or below the floor {RESIDUAL_FLOOR:e}"));
        }
        let la: Vec<f64> = g.iter().map(|r| r.amplitude.ln()).collect();
        let ly: Vec<f64> = g.iter().map(|r| r.y_residual.max(f64::MIN_POSITIVE).ln()).collect();
        let lt: Vec<f64> = g.iter().map(|r| r.theta_residual.max(f64::MIN_POSITIVE).ln()).collect();
        y_fit = line_fit(&la, &ly);
        theta_fit = line_fit(&la, &lt);
    }
    if points < MIN_SCALING_POINTS {
        inconclusive = true;
        notes.push(format!(
            "{points} distinct amplitude(s); an exponent needs at least {MIN_SCALING_POINTS}"
        ));
    }

    let mut omega_monotone = None;
    for r in runs {
        for q in runs {
            if same(r.amplitude, q.amplitude) && q.omega > r.omega && !same(q.omega, r.omega) {
                let ok = q.y_residual <= OMEGA_SLACK * r.y_residual
                    && q.theta_residual <= OMEGA_SLACK * r.theta_residual;
                if !ok {
                    notes.push(format!(
                        "a = {}: residuals rise from omega = {} to omega = {}",
                        r.amplitude, r.omega, q.omega
                    ));
                }
                omega_monotone = Some(omega_monotone.unwrap_or(true) && ok);
            }
        }
    }
    ScalingReport {
        omega,
        points,
        y_fit,
        theta_fit,
        omega_monotone,
        inconclusive,
        notes,
    }
}

/// Ordered `key: value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

impl DecayFit {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.push("nu_hat", format!("{:.6e}", self.nu_hat));
        r.push("eta_hat", format!("{:.6e}", self.eta_hat));
        r.push("decay_r_squared", format!("{:.6}", self.r_squared));
        r.push("decay_window", format!("{:.3}..{:.3}", self.window.0, self.window.1));
        r.push("decay_points", self.points);
        r.push("decay_excluded", self.excluded);
        r.push("decay_degenerate", self.degenerate);
        r
    }
}

impl TargetResiduals {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.push("z_residual", format!("{:.6e}", self.z_residual));
        r.push("w_boundary_max", format!("{:.6e}", self.max_w_boundary));
        r.push("heat_residual", format!("{:.6e}", self.heat_residual));
        r.push("residual_samples", self.samples_used);
        if let Some(c) = self.conditioning {
            r.push("gain_margin", format!("{:.6e}", c.margin));
            r.push("near_singular", c.near_singular);
        }
        r.push("inconclusive", self.inconclusive);
        for note in &self.notes {
            r.push("note", note);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_loop::{simulate_average_system, AverageSettings};
    use crate::controller::forbidden_gain;
    use crate::heat_solver::{Scheme, SolverConfig};
    use crate::quadrature::GaussLegendre;
    use proptest::prelude::*;

    fn kernel() -> BacksteppingKernel {
        BacksteppingKernel::new(-0.4, 1.0).unwrap()
    }

    #[test]
    fn zero_profile_maps_to_minus_gamma() {
        let k = kernel();
        let grid = Grid::new(1.0, 51).unwrap();
        let t = to_target(&k, 1.0, &vec![0.0; 51], &grid);
        assert_eq!(t.z, 1.0);
        for (i, w) in t.w.iter().enumerate() {
            assert!((w + k.gamma(grid.x(i))).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_target_maps_to_zero() {
        let grid = Grid::new(1.0, 21).unwrap();
        let (v, u) = from_target(&kernel(), &TargetState { z: 0.0, w: vec![0.0; 21] }, &grid);
        assert_eq!(v, 0.0);
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pure_kernel_profile_has_zero_w() {
        let k = kernel();
        let grid = Grid::new(1.0, 101).unwrap();
        let target = TargetState { z: 0.7, w: vec![0.0; 101] };
        let (v, u) = from_target(&k, &target, &grid);
        for (i, ui) in u.iter().enumerate() {
            assert!((ui - 0.7 * k.gamma(grid.x(i))).abs() < 1e-15);
        }
        let back = to_target(&k, v, &u, &grid);
        assert!((back.z - 0.7).abs() < 1e-10);
        assert!(back.w.iter().all(|w| w.abs() < 1e-10));
    }

    #[test]
    fn unit_z_vartheta_matches_quadrature_oracle() {
        let k = kernel();
        let gl = GaussLegendre::new(64);
        let oracle = 1.0 - gl.integrate(0.0, 1.0, |y| k.g(y) * k.gamma(y));
        let grid = Grid::new(1.0, 101).unwrap();
        let (v, _) = from_target_with(&k, &TargetState { z: 1.0, w: vec![0.0; 101] }, &grid, KernelIntegral::Exact);
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
        let (vg, _) = from_target(&k, &TargetState { z: 1.0, w: vec![0.0; 101] }, &grid);
        assert!((vg - oracle).abs() < 1e-8);
    }

    #[test]
    fn exact_integral_round_trip_is_second_order_bounded() {
        let k = kernel();
        let mut prev = f64::INFINITY;
        for n in [26, 51, 101] {
            let grid = Grid::new(1.0, n).unwrap();
            let u = grid.sample(|x| (2.0 * x).sin() + 0.3 * x * x);
            let err = round_trip_error(&k, 0.8, &u, &grid, KernelIntegral::Exact);
            let dx2 = grid.dx() * grid.dx();
            assert!(err <= 0.1 * dx2, "n={n}: {err}");
            assert!(err < prev);
            prev = err;
        }
    }

    proptest! {
        #[test]
        fn grid_round_trip_is_identity(
            v in -3.0f64..3.0,
            c in prop::collection::vec(-1.0f64..1.0, 3),
            k_bar in -2.0f64..-0.01,
        ) {
            let k = BacksteppingKernel::new(k_bar, 1.0).unwrap();
            let grid = Grid::new(1.0, 41).unwrap();
            let u = grid.sample(|x| c[0] + c[1] * (3.0 * x).cos() + c[2] * x * x * x);
            prop_assert!(round_trip_error(&k, v, &u, &grid, KernelIntegral::Grid) < 1e-10);
        }
    }

    #[test]
    fn synthetic_exponential_fit() {
        let t: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let o: Vec<f64> = t.iter().map(|t| 3.0 * (-0.5 * t).exp()).collect();
        let fit = fit_decay(&t, &o, 0.5).unwrap();
        assert!((fit.nu_hat - 0.5).abs() < 1e-6);
        assert!((fit.eta_hat * fit.omega0 - 3.0).abs() < 1e-6);
        assert!(fit.r_squared > 0.999999);
        assert!(!fit.degenerate);
        assert_eq!(fit.window, (5.0, 10.0));
    }

    #[test]
    fn fit_excludes_zeros_and_flags_floor() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let o = [1.0, 0.5, 0.0, 1e-30, 1e-31];
        let fit = fit_decay(&t, &o, 1.0).unwrap();
        assert_eq!(fit.excluded, 1);
        assert!(fit.degenerate);
        assert!(fit_decay(&t[..1], &o[..1], 0.5).is_err());
        assert!(fit_decay(&t, &o, 0.0).is_err());
    }

    #[test]
    fn fit_residuals_csv() {
        let t = [0.0, 1.0, 2.0];
        let o = [1.0, 0.5, 0.25];
        let mut buf = Vec::new();
        fit_decay(&t, &o, 1.0).unwrap().write_residuals_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,log_residual\n"));
        assert_eq!(text.lines().count(), 4);
    }

    fn synthetic_runs(omegas: &[f64]) -> Vec<ScalingRun> {
        let mut runs = Vec::new();
        for &w in omegas {
            for a in [0.2, 0.1, 0.05] {
                runs.push(ScalingRun {
                    amplitude: a,
                    omega: w,
                    y_residual: 0.5 * a * a + 0.01 / (w * w),
                    theta_residual: 0.6 * a + 0.01 / w,
                });
            }
        }
        runs
    }

    #[test]
    fn scaling_exponents_of_synthetic_laws() {
        let rep = residual_scaling(&synthetic_runs(&[10.0, 20.0]));
        assert_eq!(rep.omega, Some(20.0));
        assert_eq!(rep.points, 3);
        assert!(!rep.inconclusive);
        assert!((rep.y_exponent().unwrap() - 2.0).abs() < 0.05);
        assert!((rep.theta_exponent().unwrap() - 1.0).abs() < 0.05);
        assert_eq!(rep.omega_monotone, Some(true));
    }

    #[test]
    fn single_point_is_inconclusive() {
        let runs = &synthetic_runs(&[10.0])[..1];
        let rep = residual_scaling(runs);
        assert!(rep.inconclusive);
        assert_eq!(rep.omega_monotone, None);
        assert!(rep.to_report().to_string().contains("inconclusive: true"));
    }

    #[test]
    fn rising_residual_breaks_monotonicity() {
        let mut runs = synthetic_runs(&[10.0, 20.0]);
        runs[3].y_residual *= 10.0;
        assert_eq!(residual_scaling(&runs).omega_monotone, Some(false));
    }

    fn average_run(k_bar: f64, dt: f64, n: usize, t_final: f64) -> (AverageTrajectory, BacksteppingKernel) {
        let kernel = BacksteppingKernel::new(k_bar, 1.0).unwrap();
        let grid = Grid::new(1.0, n).unwrap();
        let settings = AverageSettings {
            grid,
            solver: SolverConfig::new(dt, Scheme::CrankNicolson),
            t_final,
            record_every: 1,
        };
        let traj = simulate_average_system(&kernel, 0.2, k_bar / 0.2, settings, 1.0, &vec![0.0; n]).unwrap();
        (traj, kernel)
    }

    #[test]
    fn boundary_of_w_vanishes_along_average_run() {
        let (traj, kernel) = average_run(-0.4, 1e-3, 51, 2.0);
        let res = target_residuals(&traj, &kernel, 0.5);
        assert!(res.max_w_boundary < 1e-12, "{}", res.max_w_boundary);
        assert!(!res.inconclusive);
        assert!(res.z_residual < 1e-4, "{}", res.z_residual);
        assert!(res.heat_residual < 1e-4, "{}", res.heat_residual);
    }

    #[test]
    fn coarse_sampling_is_inconclusive() {
        let kernel = kernel();
        let grid = Grid::new(1.0, 21).unwrap();
        let settings = AverageSettings {
            grid,
            solver: SolverConfig::new(1e-2, Scheme::CrankNicolson),
            t_final: 5.0,
            record_every: 100,
        };
        let traj = simulate_average_system(&kernel, 0.2, -2.0, settings, 1.0, &vec![0.0; 21]).unwrap();
        assert!(target_residuals(&traj, &kernel, 0.0).inconclusive);
    }

    #[test]
    fn near_forbidden_gain_is_flagged() {
        let tol = default_gain_tol(1.0);
        let k_bar = forbidden_gain(0, 1.0) + 5.0 * tol;
        let (traj, kernel) = average_run(k_bar, 1e-3, 21, 0.05);
        let res = target_residuals(&traj, &kernel, 0.0);
        assert!(res.conditioning.unwrap().near_singular);
        assert!(!res.notes.is_empty());
        assert!(kernel.normalization().abs() < 1e-4);
    }
}
