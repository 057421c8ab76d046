//! Gradient extremum seeking for a quadratic map whose input is the spatial
//! integral of a diffusion PDE driven at one boundary.
//!
//! The crate covers the probing-signal design ([`dither`]), the actuator
//! simulation ([`heat_solver`]), demodulation ([`filters`]), the compensating
//! control laws ([`controller`]), closed-loop runs ([`closed_loop`]) and the
//! numerical checks of the stability and scaling claims ([`analysis`]).

pub mod analysis;
pub mod closed_loop;
pub mod controller;
pub mod dither;
pub mod error;
pub mod filters;
pub mod fit;
pub mod heat_solver;
pub mod quadrature;

pub use closed_loop::{
    evaluate_map, run_average_system, run_esc, run_standard_esc, simulate_average_system,
    AverageSample, AverageSettings, AverageTrajectory, FieldSnapshot, ScenarioConfig, StaticMap,
    TrajectoryRecord, TrajectorySample,
};
pub use controller::{
    check_gain, BacksteppingKernel, ControllerState, GainConfig, GainRejection, GainStatus,
};
pub use dither::{design_dither, design_dither_with, DitherDesign, DitherFormula, DitherParams};
pub use error::{EscError, Result};
pub use filters::{EstimatorOutputs, Estimators, FilterKind, FirstOrderFilter};
pub use heat_solver::{ActuatorField, Grid, Scheme, SolverConfig};
