//! First-order filters and the demodulation-based gradient/Hessian estimators.

use crate::dither::{demod_m, demod_n, DitherParams};
use crate::error::{EscError, Result};

/// Amplitudes below this make `M(t)` and `N(t)` numerically meaningless.
pub const MIN_DEMOD_AMPLITUDE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// `c/(s + c)`
    LowPass,
    /// Washout `s/(s + c)`
    HighPass,
}

/// First-order filter with zero-order-hold (exponential) discretisation.
///
/// Both kinds share the state equation `ẋ = c(u - x)`; the low-pass outputs
/// `x`, the washout outputs `u - x`. The update `x⁺ = x + (1 - e^{-c·dt})(u - x)`
/// is exact for inputs held constant over a step.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderFilter {
    kind: FilterKind,
    corner: f64,
    dt: f64,
    gain: f64,
    state: f64,
}

impl FirstOrderFilter {
    pub fn new(kind: FilterKind, corner: f64, dt: f64) -> Result<Self> {
        if !(corner.is_finite() && corner > 0.0) {
            return Err(EscError::invalid("filter corner frequency must be finite and > 0"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(EscError::invalid("filter step must be finite and > 0"));
        }
        Ok(Self {
            kind,
            corner,
            dt,
            gain: -(-corner * dt).exp_m1(),
            state: 0.0,
        })
    }

    pub fn low_pass(corner: f64, dt: f64) -> Result<Self> {
        Self::new(FilterKind::LowPass, corner, dt)
    }

    pub fn high_pass(corner: f64, dt: f64) -> Result<Self> {
        Self::new(FilterKind::HighPass, corner, dt)
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn corner(&self) -> f64 {
        self.corner
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> f64 {
        self.state
    }

    pub fn with_state(mut self, state: f64) -> Self {
        self.state = state;
        self
    }

    pub fn reset(&mut self) {
        self.state = 0.0;
    }

    /// Advances by one step with `input` held and returns the new output.
    pub fn step(&mut self, input: f64) -> f64 {
        self.state += self.gain * (input - self.state);
        match self.kind {
            FilterKind::LowPass => self.state,
            FilterKind::HighPass => input - self.state,
        }
    }
}

/// Gradient and Hessian estimates at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorOutputs {
    pub g_hat: f64,
    pub h_hat: f64,
}

fn check_amplitude(params: &DitherParams) -> Result<()> {
    if params.amplitude() < MIN_DEMOD_AMPLITUDE {
        Err(EscError::AmplitudeTooSmall(params.amplitude()))
    } else {
        Ok(())
    }
}

/// `Ĝ(t) = M(t)·washout(y)`.
pub fn estimate_gradient(
    y_signal: f64,
    t: f64,
    params: &DitherParams,
    washout: &mut FirstOrderFilter,
) -> Result<f64> {
    check_amplitude(params)?;
    Ok(demod_m(params, t) * washout.step(y_signal))
}

/// `Ĥ(t) = lowpass(N(t)·y)`.
pub fn estimate_hessian(
    y_signal: f64,
    t: f64,
    params: &DitherParams,
    smoother: &mut FirstOrderFilter,
) -> Result<f64> {
    check_amplitude(params)?;
    Ok(smoother.step(demod_n(params, t) * y_signal))
}

/// Washout shared by both demodulators followed by the Hessian smoother.
///
/// The high-passed output feeds both `M(t)` and `N(t)`, so the `y*` offset is
/// removed before either product.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimators {
    params: DitherParams,
    washout: FirstOrderFilter,
    smoother: FirstOrderFilter,
}

impl Estimators {
    pub fn new(params: DitherParams, washout_corner: f64, hessian_corner: f64, dt: f64) -> Result<Self> {
        check_amplitude(&params)?;
        Ok(Self {
            params,
            washout: FirstOrderFilter::high_pass(washout_corner, dt)?,
            smoother: FirstOrderFilter::low_pass(hessian_corner, dt)?,
        })
    }

    /// Primes the washout so a constant `y0` produces zero output at start-up.
    pub fn prime(&mut self, y0: f64) {
        self.washout = self.washout.clone().with_state(y0);
    }

    pub fn update(&mut self, y: f64, t: f64) -> EstimatorOutputs {
        let washed = self.washout.step(y);
        EstimatorOutputs {
            g_hat: demod_m(&self.params, t) * washed,
            h_hat: self.smoother.step(demod_n(&self.params, t) * washed),
        }
    }
}
