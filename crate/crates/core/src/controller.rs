//! Diffusion-compensating control laws and the backstepping kernel.
//!
//! With `Z = ϑ + ∫₀ᴸ g(y)u(y)dy`, `g(x) = (L² - x²)/2`, the error cascade
//! satisfies `Ż = L·U` for any input, so `U = K̄Z` gives `Ż = K̄L·Z`. The
//! kernel `γ(x) = K̄·cosh(√A_cl x)/cosh(√A_cl L)`, `A_cl = K̄L`, maps the PDE
//! state to a heat equation with homogeneous boundary conditions.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::dither::DitherParams;
use crate::error::{EscError, Result};
use crate::filters::FirstOrderFilter;
use crate::heat_solver::Grid;

/// Default number of forbidden gain values checked.
pub const DEFAULT_KAPPA_MAX: u32 = 100;

/// Smallest `|cos(√λ L)|` accepted when building the kernel.
pub const MIN_KERNEL_COS: f64 = 1e-9;

/// Default rejection half-width around a forbidden gain: `1e-6·π²/(4L³)`.
pub fn default_gain_tol(length: f64) -> f64 {
    1e-6 * PI * PI / (4.0 * length.powi(3))
}

/// The `κ`-th forbidden gain `-(2κ+1)²π²/(4L³)`.
pub fn forbidden_gain(kappa: u32, length: f64) -> f64 {
    let m = (2 * kappa + 1) as f64;
    -m * m * PI * PI / (4.0 * length.powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainRejection {
    /// `K̄ ≥ 0` does not stabilise `Ż = K̄L·Z`.
    NonNegative { k_bar: f64 },
    /// `K̄` sits on a value where the kernel normalisation vanishes.
    Forbidden {
        k_bar: f64,
        kappa: u32,
        forbidden: f64,
    },
}

impl fmt::Display for GainRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonNegative { k_bar } => write!(f, "K_bar = {k_bar} must be negative"),
            Self::Forbidden {
                k_bar,
                kappa,
                forbidden,
            } => write!(
                f,
                "K_bar = {k_bar} hits the forbidden value -(2k+1)^2 pi^2/(4L^3) = {forbidden} (k = {kappa}), where the kernel normalisation vanishes"
            ),
        }
    }
}

impl std::error::Error for GainRejection {}

/// Result of an admissible gain check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainStatus {
    pub nearest_kappa: u32,
    /// Distance to the nearest forbidden value.
    pub margin: f64,
    /// Within ten tolerances of a forbidden value: admissible but badly conditioned.
    pub near_singular: bool,
}

/// Admissibility test `K̄ < 0`, `K̄ ≠ -(2κ+1)²π²/(4L³)` for `κ ≤ kappa_max`.
pub fn check_gain(
    k_bar: f64,
    length: f64,
    kappa_max: u32,
    tol: f64,
) -> std::result::Result<GainStatus, GainRejection> {
    if !(k_bar < 0.0) {
        return Err(GainRejection::NonNegative { k_bar });
    }
    let mut best = GainStatus {
        nearest_kappa: 0,
        margin: f64::INFINITY,
        near_singular: false,
    };
    for kappa in 0..=kappa_max {
        let forbidden = forbidden_gain(kappa, length);
        let margin = (k_bar - forbidden).abs();
        if margin < tol {
            return Err(GainRejection::Forbidden {
                k_bar,
                kappa,
                forbidden,
            });
        }
        if margin < best.margin {
            best.margin = margin;
            best.nearest_kappa = kappa;
        }
    }
    best.near_singular = best.margin < 10.0 * tol;
    if best.near_singular {
        log::warn!(
            "K_bar = {k_bar} is within {} of forbidden value k = {}",
            best.margin,
            best.nearest_kappa
        );
    }
    Ok(best)
}

/// Adaptation gain, compensator gain and corner of the output low-pass `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainConfig {
    k: f64,
    k_bar: f64,
    corner: f64,
}

impl GainConfig {
    /// Validates `K > 0`, `c > 0` and the admissibility of `K̄` on a domain of
    /// length `length` with the default tolerance and `κ ≤ 100`.
    pub fn new(k: f64, k_bar: f64, corner: f64, length: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(EscError::invalid("adaptation gain K must be finite and > 0"));
        }
        if !(corner.is_finite() && corner > 0.0) {
            return Err(EscError::invalid("corner frequency c must be finite and > 0"));
        }
        check_gain(k_bar, length, DEFAULT_KAPPA_MAX, default_gain_tol(length))?;
        Ok(Self { k, k_bar, corner })
    }

    /// `K = K̄ = 0`: the law outputs zero and `θ̂` stays frozen.
    pub fn disabled(corner: f64) -> Result<Self> {
        if !(corner.is_finite() && corner > 0.0) {
            return Err(EscError::invalid("corner frequency c must be finite and > 0"));
        }
        Ok(Self {
            k: 0.0,
            k_bar: 0.0,
            corner,
        })
    }

    /// Gains with the nominal compensator gain `K̄ = K·H`.
    pub fn nominal(k: f64, hessian: f64, corner: f64, length: f64) -> Result<Self> {
        Self::new(k, k * hessian, corner, length)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn k_bar(&self) -> f64 {
        self.k_bar
    }

    pub fn corner(&self) -> f64 {
        self.corner
    }
}

/// `g(x) = (L² - x²)/2`.
pub fn g_weight(length: f64, x: f64) -> f64 {
    0.5 * (length * length - x * x)
}

/// Backstepping kernel for a given compensator gain.
///
/// Built for any `K̄` whose normalisation does not vanish, including positive
/// values used to probe instability; admissibility is [`check_gain`]'s job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacksteppingKernel {
    length: f64,
    k_bar: f64,
    a_cl: f64,
    /// Normalisation `Λ` (real for every real `K̄`).
    norm: f64,
}

impl BacksteppingKernel {
    pub fn new(k_bar: f64, length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(EscError::invalid("kernel length must be finite and > 0"));
        }
        if !k_bar.is_finite() {
            return Err(EscError::invalid("K_bar must be finite"));
        }
        let a_cl = k_bar * length;
        let norm = if a_cl < 0.0 {
            let c = ((-a_cl).sqrt() * length).cos();
            if c.abs() < MIN_KERNEL_COS {
                return Err(EscError::SingularKernel(c.abs()));
            }
            2.0 * c
        } else {
            2.0 * (a_cl.sqrt() * length).cosh()
        };
        Ok(Self {
            length,
            k_bar,
            a_cl,
            norm,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn k_bar(&self) -> f64 {
        self.k_bar
    }

    /// `A_cl = K̄·L`.
    pub fn a_cl(&self) -> f64 {
        self.a_cl
    }

    /// `λ = -A_cl`.
    pub fn lambda(&self) -> f64 {
        -self.a_cl
    }

    /// `Λ = e^{√A_cl L} + e^{-√A_cl L}`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// `γ(x)` in real arithmetic.
    pub fn gamma(&self, x: f64) -> f64 {
        if self.a_cl < 0.0 {
            2.0 * self.k_bar * (self.lambda().sqrt() * x).cos() / self.norm
        } else {
            2.0 * self.k_bar * (self.a_cl.sqrt() * x).cosh() / self.norm
        }
    }

    /// `γ(x)` from the exponential form with complex `√A_cl`.
    pub fn gamma_complex(&self, x: f64) -> Complex64 {
        let root = Complex64::new(self.a_cl, 0.0).sqrt();
        let num = (root * x).exp() + (-root * x).exp();
        let den = (root * self.length).exp() + (-root * self.length).exp();
        self.k_bar * num / den
    }

    pub fn g(&self, x: f64) -> f64 {
        g_weight(self.length, x)
    }

    /// `∫₀ᴸ g(y)γ(y) dy` in closed form.
    pub fn g_gamma_integral(&self) -> f64 {
        // ∫ (L² - y²)/2 · cosh(μy) dy with μ² = A_cl, and the cos analogue.
        let l = self.length;
        if self.a_cl < 0.0 {
            let m = self.lambda().sqrt();
            // ∫₀ᴸ (L²-y²) cos(my) dy = 2 sin(mL)/m³ - 2L cos(mL)/m²
            let i = 2.0 * (m * l).sin() / m.powi(3) - 2.0 * l * (m * l).cos() / (m * m);
            self.k_bar * i / self.norm
        } else if self.a_cl == 0.0 {
            // γ is constant K̄ and ∫ g = L³/3
            self.k_bar * l.powi(3) / 3.0
        } else {
            let m = self.a_cl.sqrt();
            let i = -2.0 * (m * l).sinh() / m.powi(3) + 2.0 * l * (m * l).cosh() / (m * m);
            self.k_bar * i / self.norm
        }
    }

    /// Kernel sampled on `grid`.
    pub fn gamma_on(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|x| self.gamma(x))
    }

    pub fn g_on(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|x| self.g(x))
    }

    /// `Z = ϑ + ∫₀ᴸ g(y)u(y) dy` using the grid quadrature.
    pub fn z(&self, vartheta: f64, u_profile: &[f64], grid: &Grid) -> f64 {
        vartheta + weighted_integral(grid, u_profile, |x| self.g(x))
    }
}

fn weighted_integral<F: Fn(f64) -> f64>(grid: &Grid, values: &[f64], w: F) -> f64 {
    let prod: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| v * w(grid.x(i)))
        .collect();
    grid.integrate(&prod)
}

/// `U = K̄·(ϑ + ∫₀ᴸ g(y)u(y) dy)`.
pub fn ideal_control(kernel: &BacksteppingKernel, vartheta: f64, u_profile: &[f64], grid: &Grid) -> f64 {
    kernel.k_bar * kernel.z(vartheta, u_profile, grid)
}

/// `U_av = K·Ĝ_av + K·Ĥ_av·∫₀ᴸ g(y)u_av(y) dy`.
pub fn average_control(
    kernel: &BacksteppingKernel,
    g_hat_av: f64,
    h_hat_av: f64,
    u_av_profile: &[f64],
    k: f64,
    grid: &Grid,
) -> f64 {
    let gu = weighted_integral(grid, u_av_profile, |x| kernel.g(x));
    k * g_hat_av + k * h_hat_av * gu
}

/// Runtime state of the implementable controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    theta_hat: f64,
    filter: FirstOrderFilter,
    gains: GainConfig,
    length: f64,
}

impl ControllerState {
    pub fn new(gains: GainConfig, length: f64, theta_hat: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            theta_hat,
            filter: FirstOrderFilter::low_pass(gains.corner, dt)?,
            gains,
            length,
        })
    }

    /// Overrides the low-pass state (the last emitted `U`).
    pub fn with_filter_state(mut self, u: f64) -> Self {
        self.filter = self.filter.with_state(u);
        self
    }

    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    pub fn gains(&self) -> &GainConfig {
        &self.gains
    }

    pub fn filter_state(&self) -> f64 {
        self.filter.state()
    }

    /// The unfiltered law `K[Ĝ + Ĥ(Lθ̂ - Θ + a sin ωt)]`.
    pub fn bracket(&self, g_hat: f64, h_hat: f64, big_theta: f64, t: f64, dither: &DitherParams) -> f64 {
        let distributed = self.length * self.theta_hat - big_theta + dither.target(t);
        self.gains.k * (g_hat + h_hat * distributed)
    }
}

/// Filtered real-time law; only uses `Θ(t)`, the estimates and `θ̂`.
pub fn realtime_control(
    state: &mut ControllerState,
    g_hat: f64,
    h_hat: f64,
    big_theta: f64,
    t: f64,
    dither: &DitherParams,
) -> f64 {
    let raw = state.bracket(g_hat, h_hat, big_theta, t, dither);
    state.filter.step(raw)
}

/// `θ̂ ← θ̂ + dt·U`.
pub fn integrate_theta_hat(state: &mut ControllerState, u: f64, dt: f64) -> f64 {
    state.theta_hat += dt * u;
    state.theta_hat
}
