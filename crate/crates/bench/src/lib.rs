//! Fixtures shared by the criterion benches.

use diffusion_esc::{design_dither, ActuatorField, DitherParams, Grid, ScenarioConfig};

/// Field initialised to the reference profile of the baseline dither.
pub fn reference_field(n: usize) -> ActuatorField {
    let d = design_dither(DitherParams::new(0.2, 10.0, 1.0).expect("valid dither"));
    let grid = Grid::new(1.0, n).expect("valid grid");
    ActuatorField::from_fn(grid, 0.0, 1.0, |x| d.beta(x, 0.0)).expect("finite profile")
}

/// Baseline scenario cut to `t_final` seconds.
pub fn short_scenario(t_final: f64) -> ScenarioConfig {
    ScenarioConfig {
        t_final,
        ..ScenarioConfig::paper()
    }
}
