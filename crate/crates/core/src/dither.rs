//! Probing signal design for an integral-output diffusion actuator.
//!
//! The boundary signal `S(t)` is chosen so that the diffused field
//! `β(x, t)` (heat equation, insulated at `x = 0`) integrates over `[0, L]`
//! to exactly `a·sin(ωt)`. The field is
//!
//! ```text
//! β(x,t) = A/2 · e^{kx} · sin(ωt + φ + kx) + A/2 · e^{-kx} · sin(ωt + φ - kx),  k = √(ω/2)
//! ```
//!
//! and `S(t) = β(L, t)`. The amplitude `A` and phase `φ` are obtained from the
//! complex gain of the spatial integral; see [`DitherFormula`].

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{EscError, Result};
use crate::quadrature::GaussLegendre;

/// Relative width of the `ψ₂ = 0` branch of the phase rule.
pub const PSI2_ZERO_TOL: f64 = 1e-12;

/// Smallest value the radicand of the printed normalisation may take.
const RADICAND_FLOOR: f64 = 1e-300;

/// Amplitude, angular frequency and domain length of the probing signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherParams {
    amplitude: f64,
    omega: f64,
    length: f64,
}

impl DitherParams {
    /// `amplitude` may be zero (no excitation); `omega` and `length` must be positive.
    pub fn new(amplitude: f64, omega: f64, length: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(EscError::invalid("dither amplitude must be finite and >= 0"));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(EscError::invalid("dither frequency must be finite and > 0"));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(EscError::invalid("domain length must be finite and > 0"));
        }
        Ok(Self {
            amplitude,
            omega,
            length,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Spatial wavenumber `√(ω/2)`.
    pub fn wavenumber(&self) -> f64 {
        (0.5 * self.omega).sqrt()
    }

    /// The integral target `a·sin(ωt)`.
    pub fn target(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t).sin()
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        Self::new(amplitude, self.omega, self.length)
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.amplitude, omega, self.length)
    }
}

/// Which closed form is used for the normalisation `B` and phase `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DitherFormula {
    /// Magnitude and argument of `e^{s}e^{j(s-π/4)} - e^{-s}e^{j(-s-π/4)}`,
    /// `s = L√(ω/2)`: the complex gain of `∫₀ᴸ β dx`. Satisfies the integral
    /// identity to rounding.
    #[default]
    Exact,
    /// The widely quoted closed form with `+e^{-s}` on the second term and
    /// `B² = e^{L√2ω} + e^{-L√2ω} + 2cos(L√2ω)`. For `a = 0.2, ω = 10, L = 1`
    /// it yields `A ≈ 0.1356, φ ≈ -1.4618`, but its integral misses
    /// `a·sin(ωt)` by a few parts in a thousand.
    Published,
}

/// Normalisation constant with a flag telling whether the radicand was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub value: f64,
    pub clamped: bool,
}

/// Phase constant together with its two components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConstant {
    pub psi: f64,
    pub psi1: f64,
    pub psi2: f64,
}

/// Designed constants of the probing signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherDesign {
    params: DitherParams,
    formula: DitherFormula,
    amplitude: f64,
    phase: f64,
    b: f64,
    psi: f64,
    psi1: f64,
    psi2: f64,
}

/// `B` exactly as printed: `[e^{L√2ω} + e^{-L√2ω} + 2cos(L√2ω)]^{1/2}`.
pub fn compute_b(params: &DitherParams) -> Normalization {
    let r = params.length * (2.0 * params.omega).sqrt();
    let radicand = r.exp() + (-r).exp() + 2.0 * r.cos();
    if radicand < RADICAND_FLOOR {
        log::warn!("normalisation radicand {radicand:e} clamped to {RADICAND_FLOOR:e}");
        Normalization {
            value: RADICAND_FLOOR.sqrt(),
            clamped: true,
        }
    } else {
        Normalization {
            value: radicand.sqrt(),
            clamped: false,
        }
    }
}

/// `B` as the magnitude of the complex gain of the spatial integral.
pub fn compute_b_exact(params: &DitherParams) -> f64 {
    integral_gain(params).norm()
}

/// `ψ` from the printed components `ψ₁, ψ₂` (both with `+e^{-s}`).
pub fn compute_psi(params: &DitherParams) -> PhaseConstant {
    let s = params.length * params.wavenumber();
    let (ep, em) = (s.exp(), (-s).exp());
    let psi1 = ep * (s - FRAC_PI_4).sin() + em * (-s - FRAC_PI_4).sin();
    let psi2 = ep * (s - FRAC_PI_4).cos() + em * (-s - FRAC_PI_4).cos();
    PhaseConstant {
        psi: branch_phase(psi1, psi2),
        psi1,
        psi2,
    }
}

/// `ψ` as the argument of the complex gain, resolved with the same branch rule.
pub fn compute_psi_exact(params: &DitherParams) -> PhaseConstant {
    let z = integral_gain(params);
    PhaseConstant {
        psi: branch_phase(z.im, z.re),
        psi1: z.im,
        psi2: z.re,
    }
}

/// Three-branch phase rule with values in `(-π/2, 3π/2)`.
pub fn branch_phase(psi1: f64, psi2: f64) -> f64 {
    if psi2.abs() < PSI2_ZERO_TOL * psi1.abs().max(1.0) {
        psi1.signum() * FRAC_PI_2
    } else if psi2 > 0.0 {
        (psi1 / psi2).atan()
    } else {
        PI + (psi1 / psi2).atan()
    }
}

/// `e^{s}e^{j(s-π/4)} - e^{-s}e^{j(-s-π/4)}` with `s = L√(ω/2)`.
fn integral_gain(params: &DitherParams) -> Complex64 {
    let s = params.length * params.wavenumber();
    Complex64::from_polar(s.exp(), s - FRAC_PI_4) - Complex64::from_polar((-s).exp(), -s - FRAC_PI_4)
}

/// Designs the probing signal with the exact constants.
pub fn design_dither(params: DitherParams) -> DitherDesign {
    design_dither_with(params, DitherFormula::Exact)
}

pub fn design_dither_with(params: DitherParams, formula: DitherFormula) -> DitherDesign {
    let (b, phase) = match formula {
        DitherFormula::Exact => (compute_b_exact(&params), compute_psi_exact(&params)),
        DitherFormula::Published => {
            let b = compute_b(&params);
            let exact = compute_b_exact(&params);
            if ((b.value - exact) / exact).abs() > 1e-12 {
                log::debug!(
                    "printed normalisation {} differs from complex gain magnitude {}",
                    b.value,
                    exact
                );
            }
            (b.value, compute_psi(&params))
        }
    };
    DitherDesign {
        params,
        formula,
        amplitude: 2.0 * params.amplitude * params.omega.sqrt() / b,
        phase: -phase.psi,
        b,
        psi: phase.psi,
        psi1: phase.psi1,
        psi2: phase.psi2,
    }
}

impl DitherDesign {
    pub fn params(&self) -> &DitherParams {
        &self.params
    }

    pub fn formula(&self) -> DitherFormula {
        self.formula
    }

    /// Designed amplitude `A`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Designed phase `φ = -ψ` (rad).
    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn psi_components(&self) -> (f64, f64) {
        (self.psi1, self.psi2)
    }

    /// Copy with the amplitude multiplied by `factor`; used to probe the identity check.
    pub fn scaled_amplitude(&self, factor: f64) -> Self {
        Self {
            amplitude: self.amplitude * factor,
            ..*self
        }
    }

    /// Boundary signal `S(t) = β(L, t)`.
    pub fn s(&self, t: f64) -> f64 {
        self.beta(self.params.length, t)
    }

    /// Reference field `β(x, t)`.
    pub fn beta(&self, x: f64, t: f64) -> f64 {
        let k = self.params.wavenumber();
        let arg = self.params.omega * t + self.phase;
        let half = 0.5 * self.amplitude;
        half * (k * x).exp() * (arg + k * x).sin() + half * (-k * x).exp() * (arg - k * x).sin()
    }

    /// `∂β/∂t`, used by oracles and the heat-equation residual checks.
    pub fn beta_dt(&self, x: f64, t: f64) -> f64 {
        let k = self.params.wavenumber();
        let w = self.params.omega;
        let arg = w * t + self.phase;
        let half = 0.5 * self.amplitude * w;
        half * (k * x).exp() * (arg + k * x).cos() + half * (-k * x).exp() * (arg - k * x).cos()
    }

    /// Upper bound on `|S(t)|`: `A/2 · (e^{kL} + e^{-kL})`.
    pub fn s_envelope(&self) -> f64 {
        let kl = self.params.wavenumber() * self.params.length;
        0.5 * self.amplitude * (kl.exp() + (-kl).exp())
    }
}

/// Gradient demodulation signal `(2/a)·sin(ωt)`.
pub fn demod_m(params: &DitherParams, t: f64) -> f64 {
    2.0 / params.amplitude * (params.omega * t).sin()
}

/// Hessian demodulation signal `-(8/a²)·cos(2ωt)`.
pub fn demod_n(params: &DitherParams, t: f64) -> f64 {
    -8.0 / (params.amplitude * params.amplitude) * (2.0 * params.omega * t).cos()
}

/// Outcome of [`verify_integral_identity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub max_residual: f64,
    pub worst_time: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Nodes per panel and panel count for the identity quadrature.
const IDENTITY_GL_ORDER: usize = 64;
const IDENTITY_PANELS: usize = 4;

/// Checks `∫₀ᴸ β(x,t) dx = a·sin(ωt)` at every sample time.
///
/// Returns `Err(EscError::IdentityViolated)` carrying the report when the
/// maximum residual is not below `tol`.
pub fn verify_integral_identity(
    design: &DitherDesign,
    t_samples: &[f64],
    tol: f64,
) -> Result<IdentityReport> {
    if t_samples.is_empty() {
        return Err(EscError::invalid("identity check needs at least one sample time"));
    }
    if !(tol > 0.0) {
        return Err(EscError::invalid("identity tolerance must be positive"));
    }
    let rule = GaussLegendre::new(IDENTITY_GL_ORDER);
    let length = design.params.length;
    let mut report = IdentityReport {
        max_residual: 0.0,
        worst_time: t_samples[0],
        samples: t_samples.len(),
        passed: false,
    };
    for &t in t_samples {
        let integral = rule.integrate_composite(0.0, length, IDENTITY_PANELS, |x| design.beta(x, t));
        let residual = (integral - design.params.target(t)).abs();
        if residual > report.max_residual || residual.is_nan() {
            report.max_residual = residual;
            report.worst_time = t;
        }
    }
    report.passed = report.max_residual < tol;
    if report.passed {
        Ok(report)
    } else {
        Err(EscError::IdentityViolated {
            max_residual: report.max_residual,
            worst_time: report.worst_time,
            tol,
        })
    }
}

/// `count` equispaced sample times covering one period `[0, 2π/ω)`.
pub fn one_period_samples(params: &DitherParams, count: usize) -> Vec<f64> {
    let period = 2.0 * PI / params.omega;
    (0..count).map(|i| i as f64 * period / count as f64).collect()
}
