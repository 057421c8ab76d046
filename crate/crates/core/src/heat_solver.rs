//! Finite-difference solver for the actuator PDE
//! `∂ₜα = ε∂ₓₓα` on `[0, L]` with `∂ₓα(0,t) = 0` and `α(L,t) = θ(t)`.
//!
//! The insulated end uses a mirror ghost node (`α₋₁ = α₁`), so all schemes
//! are second order in space. Interior systems are tridiagonal and solved
//! with the Thomas algorithm.

use crate::error::{EscError, Result};
use crate::fit::line_fit;
use crate::quadrature::grid_integral;

/// Uniform grid on `[0, L]` including both boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    length: f64,
    n: usize,
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(EscError::invalid("grid length must be finite and > 0"));
        }
        if n < 3 {
            return Err(EscError::invalid(format!("grid needs at least 3 nodes, got {n}")));
        }
        Ok(Self { length, n })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.n - 1) as f64
    }

    /// Position of node `i`; the last node sits exactly at `L`.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.length
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }

    /// Integral of nodal values on this grid (Simpson for odd `n`, trapezoid otherwise).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        grid_integral(values, self.dx())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    CrankNicolson,
    ImplicitEuler,
    ExplicitEuler,
}

impl std::str::FromStr for Scheme {
    type Err = EscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crank_nicolson" => Ok(Self::CrankNicolson),
            "implicit_euler" => Ok(Self::ImplicitEuler),
            "explicit_euler" => Ok(Self::ExplicitEuler),
            other => Err(EscError::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::CrankNicolson => "crank_nicolson",
            Self::ImplicitEuler => "implicit_euler",
            Self::ExplicitEuler => "explicit_euler",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            scheme: Scheme::CrankNicolson,
        }
    }
}

impl SolverConfig {
    pub fn new(dt: f64, scheme: Scheme) -> Self {
        Self { dt, scheme }
    }

    /// Checks `dt > 0` and, for the explicit scheme, `dt ≤ dx²/(2ε)`.
    pub fn validate(&self, grid: &Grid, diffusion: f64) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EscError::invalid("time step must be finite and > 0"));
        }
        if self.scheme == Scheme::ExplicitEuler {
            let limit = grid.dx() * grid.dx() / (2.0 * diffusion);
            if self.dt > limit {
                return Err(EscError::UnstableTimeStep { dt: self.dt, limit });
            }
        }
        Ok(())
    }
}

/// Discretised actuator state `α(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorField {
    grid: Grid,
    alpha: Vec<f64>,
    t: f64,
    diffusion: f64,
}

impl ActuatorField {
    pub fn new(grid: Grid, alpha: Vec<f64>, t: f64, diffusion: f64) -> Result<Self> {
        if alpha.len() != grid.len() {
            return Err(EscError::invalid(format!(
                "state has {} entries but the grid has {} nodes",
                alpha.len(),
                grid.len()
            )));
        }
        if !(diffusion.is_finite() && diffusion > 0.0) {
            return Err(EscError::invalid("diffusion coefficient must be finite and > 0"));
        }
        let field = Self {
            grid,
            alpha,
            t,
            diffusion,
        };
        field.check_finite()?;
        Ok(field)
    }

    /// Zero state with unit diffusion.
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            alpha: vec![0.0; grid.len()],
            t: 0.0,
            diffusion: 1.0,
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Grid, t: f64, diffusion: f64, f: F) -> Result<Self> {
        Self::new(grid, grid.sample(f), t, diffusion)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    /// Current Dirichlet value `α(L, t)`.
    pub fn boundary_value(&self) -> f64 {
        self.alpha[self.alpha.len() - 1]
    }

    /// Overrides the Dirichlet node, e.g. to make the initial state consistent
    /// with the first applied boundary value.
    pub fn set_boundary_value(&mut self, value: f64) {
        let last = self.alpha.len() - 1;
        self.alpha[last] = value;
    }

    /// `Θ(t) = ∫₀ᴸ α(x,t) dx`.
    pub fn spatial_integral(&self) -> f64 {
        self.grid.integrate(&self.alpha)
    }

    fn check_finite(&self) -> Result<()> {
        match self.alpha.iter().position(|v| !v.is_finite()) {
            Some(node) => Err(EscError::NonFiniteState {
                node,
                t: self.t,
                value: self.alpha[node],
            }),
            None => Ok(()),
        }
    }

    /// Advances the state by one step of `config.dt`, with `α(L) = boundary_theta`
    /// at the new time level. Crank–Nicolson averages the old and new boundary
    /// values; the old one is the current last node.
    pub fn step(&mut self, boundary_theta: f64, config: &SolverConfig) -> Result<()> {
        config.validate(&self.grid, self.diffusion)?;
        if !boundary_theta.is_finite() {
            return Err(EscError::NonFiniteState {
                node: self.grid.len() - 1,
                t: self.t + config.dt,
                value: boundary_theta,
            });
        }
        let dx = self.grid.dx();
        let r = self.diffusion * config.dt / (dx * dx);
        let n = self.alpha.len();
        let m = n - 1; // unknowns 0..m-1, node m is Dirichlet

        match config.scheme {
            Scheme::ExplicitEuler => {
                let old = self.alpha.clone();
                self.alpha[0] = old[0] + 2.0 * r * (old[1] - old[0]);
                for i in 1..m {
                    self.alpha[i] = old[i] + r * (old[i - 1] - 2.0 * old[i] + old[i + 1]);
                }
            }
            Scheme::ImplicitEuler | Scheme::CrankNicolson => {
                // theta-method: (I - θ r D) new = (I + (1-θ) r D) old + boundary terms
                let weight = if config.scheme == Scheme::CrankNicolson {
                    0.5
                } else {
                    1.0
                };
                let (ri, re) = (weight * r, (1.0 - weight) * r);
                let mut sub = vec![-ri; m];
                let diag = vec![1.0 + 2.0 * ri; m];
                let mut sup = vec![-ri; m];
                sub[0] = 0.0;
                sup[m - 1] = 0.0;
                // mirror ghost node doubles the coupling to node 1
                sup[0] = -2.0 * ri;
                let old = &self.alpha;
                let mut rhs = vec![0.0; m];
                rhs[0] = old[0] + re * 2.0 * (old[1] - old[0]);
                for i in 1..m {
                    rhs[i] = old[i] + re * (old[i - 1] - 2.0 * old[i] + old[i + 1]);
                }
                // old[m] entered the explicit part already; add the implicit part
                rhs[m - 1] += ri * boundary_theta;
                let solved = solve_tridiagonal(&sub, &diag, &sup, &rhs);
                self.alpha[..m].copy_from_slice(&solved);
            }
        }
        self.alpha[m] = boundary_theta;
        self.t += config.dt;
        self.check_finite()
    }
}

/// Thomas algorithm for `sub[i]·x[i-1] + diag[i]·x[i] + sup[i]·x[i+1] = rhs[i]`.
///
/// `sub[0]` and `sup[n-1]` are ignored. Assumes a non-singular, diagonally
/// dominant system (no pivoting).
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    assert!(n > 0 && sub.len() == n && diag.len() == n && sup.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Which discretisation parameter a refinement study regresses against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementAxis {
    Space,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    /// Least-squares slope of `log(error)` against `log(h)`.
    pub order: f64,
    /// `(h, max-norm error)` per level.
    pub errors: Vec<(f64, f64)>,
    /// Set when the errors sit at the rounding floor and no order can be read off.
    pub inconclusive: bool,
}

/// Errors below this are treated as rounding noise.
const ROUNDING_FLOOR: f64 = 1e-13;

/// Estimates the convergence order of `scheme` against an exact solution
/// `exact(x, t)` of the unit-diffusion problem.
///
/// Each level `(n, dt)` starts from `exact(·, 0)`, drives the boundary with
/// `exact(L, t)` and compares with `exact(·, t_final)` in the max norm.
pub fn convergence_order<F: Fn(f64, f64) -> f64>(
    exact: F,
    length: f64,
    refinements: &[(usize, f64)],
    scheme: Scheme,
    t_final: f64,
    axis: RefinementAxis,
) -> Result<OrderEstimate> {
    if refinements.len() < 3 {
        return Err(EscError::invalid("convergence study needs at least 3 refinement levels"));
    }
    let mut errors = Vec::with_capacity(refinements.len());
    for &(n, dt) in refinements {
        let grid = Grid::new(length, n)?;
        let config = SolverConfig::new(dt, scheme);
        let steps = (t_final / dt).round().max(1.0) as usize;
        let mut field = ActuatorField::from_fn(grid, 0.0, 1.0, |x| exact(x, 0.0))?;
        for k in 1..=steps {
            field.step(exact(length, k as f64 * dt), &config)?;
        }
        let t_end = steps as f64 * dt;
        let err = field
            .alpha()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - exact(grid.x(i), t_end)).abs())
            .fold(0.0, f64::max);
        let h = match axis {
            RefinementAxis::Space => grid.dx(),
            RefinementAxis::Time => dt,
        };
        errors.push((h, err));
    }
    let inconclusive = errors.iter().all(|&(_, e)| e < ROUNDING_FLOOR);
    let order = if inconclusive {
        f64::NAN
    } else {
        let xs: Vec<f64> = errors.iter().map(|(h, _)| h.ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|(_, e)| e.max(f64::MIN_POSITIVE).ln()).collect();
        line_fit(&xs, &ys).map_or(f64::NAN, |f| f.slope)
    };
    Ok(OrderEstimate {
        order,
        errors,
        inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dither::{design_dither, DitherParams};

    fn unit_grid(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 2).is_err());
        assert!(Grid::new(0.0, 11).is_err());
        let g = unit_grid(101);
        assert!((g.dx() - 0.01).abs() < 1e-15);
        assert_eq!(g.x(100), 1.0);
    }

    #[test]
    fn thomas_matches_dense_solution() {
        let sub = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let sup = [-1.0, -1.0, -1.0, 0.0];
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut v = diag[i] * x_true[i];
                if i > 0 {
                    v += sub[i] * x_true[i - 1];
                }
                if i < 3 {
                    v += sup[i] * x_true[i + 1];
                }
                v
            })
            .collect();
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn explicit_scheme_rejects_large_step() {
        let g = unit_grid(101);
        let mut f = ActuatorField::zeros(g);
        let err = f
            .step(0.0, &SolverConfig::new(1e-3, Scheme::ExplicitEuler))
            .unwrap_err();
        assert!(matches!(err, EscError::UnstableTimeStep { .. }));
        assert!(f.step(0.0, &SolverConfig::new(5e-5, Scheme::ExplicitEuler)).is_ok());
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let g = unit_grid(11);
        let mut f = ActuatorField::zeros(g);
        assert!(matches!(
            f.step(f64::NAN, &SolverConfig::default()),
            Err(EscError::NonFiniteState { node: 10, .. })
        ));
        let mut alpha = vec![0.0; 11];
        alpha[4] = f64::INFINITY;
        assert!(matches!(
            ActuatorField::new(g, alpha, 0.0, 1.0),
            Err(EscError::NonFiniteState { node: 4, .. })
        ));
    }

    #[test]
    fn zero_stays_zero() {
        for scheme in [Scheme::CrankNicolson, Scheme::ImplicitEuler] {
            let mut f = ActuatorField::zeros(unit_grid(21));
            for _ in 0..100 {
                f.step(0.0, &SolverConfig::new(1e-2, scheme)).unwrap();
            }
            assert!(f.alpha().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn relaxes_to_constant_boundary() {
        let g = unit_grid(51);
        let mut f = ActuatorField::from_fn(g, 0.0, 1.0, |x| (3.0 * x).sin()).unwrap();
        let cfg = SolverConfig::new(1e-2, Scheme::ImplicitEuler);
        for _ in 0..1500 {
            f.step(1.7, &cfg).unwrap();
        }
        let dev = f.alpha().iter().map(|v| (v - 1.7).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn tracks_reference_field() {
        let d = design_dither(DitherParams::new(0.2, 10.0, 1.0).unwrap());
        let g = unit_grid(101);
        let cfg = SolverConfig::new(1e-3, Scheme::CrankNicolson);
        let mut f = ActuatorField::from_fn(g, 0.0, 1.0, |x| d.beta(x, 0.0)).unwrap();
        for k in 1..=1000 {
            f.step(d.s(k as f64 * 1e-3), &cfg).unwrap();
        }
        let err = (0..101)
            .map(|i| (f.alpha()[i] - d.beta(g.x(i), 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        let theta = f.spatial_integral();
        assert!((theta - 0.2 * 10f64.sin()).abs() < 1e-4);
    }

    #[test]
    fn integral_of_constant_and_linear() {
        let g = unit_grid(101);
        let f = ActuatorField::from_fn(g, 0.0, 1.0, |_| 3.0).unwrap();
        assert!((f.spatial_integral() - 3.0).abs() < 1e-14);
        let f = ActuatorField::from_fn(g, 0.0, 1.0, |x| x).unwrap();
        assert!((f.spatial_integral() - 0.5).abs() < 1e-12);
        let g2 = Grid::new(2.0, 26).unwrap();
        let f = ActuatorField::from_fn(g2, 0.0, 1.0, |_| -1.5).unwrap();
        assert!((f.spatial_integral() + 3.0).abs() < 1e-14);
    }

    #[test]
    fn sampled_reference_integrates_to_target() {
        let p = DitherParams::new(0.2, 10.0, 1.0).unwrap();
        let d = design_dither(p);
        let t0 = 0.37;
        let mut prev = f64::INFINITY;
        for n in [21, 41, 81] {
            let g = unit_grid(n);
            let vals = g.sample(|x| d.beta(x, t0));
            let err = (g.integrate(&vals) - p.target(t0)).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn constant_solution_is_inconclusive() {
        let est = convergence_order(
            |_, _| 2.0,
            1.0,
            &[(11, 1e-2), (21, 1e-2), (41, 1e-2)],
            Scheme::CrankNicolson,
            0.5,
            RefinementAxis::Space,
        )
        .unwrap();
        assert!(est.inconclusive);
        assert!(est.errors.iter().all(|&(_, e)| e < 1e-13));
    }

    #[test]
    fn implicit_euler_is_first_order_in_time() {
        let d = design_dither(DitherParams::new(0.2, 10.0, 1.0).unwrap());
        let est = convergence_order(
            |x, t| d.beta(x, t),
            1.0,
            &[(201, 4e-3), (201, 2e-3), (201, 1e-3)],
            Scheme::ImplicitEuler,
            0.5,
            RefinementAxis::Time,
        )
        .unwrap();
        assert!((est.order - 1.0).abs() < 0.2, "{est:?}");
    }

    #[test]
    fn too_few_levels_rejected() {
        assert!(convergence_order(
            |_, _| 0.0,
            1.0,
            &[(11, 1e-2), (21, 1e-2)],
            Scheme::CrankNicolson,
            1.0,
            RefinementAxis::Space
        )
        .is_err());
    }
}
