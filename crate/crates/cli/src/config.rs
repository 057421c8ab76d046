//! TOML scenario files.
//!
//! Every section is optional and falls back to the baseline scenario
//! (`L = 1`, `K = 0.2`, `c = 10`, `a = 0.2`, `ω = 10`, `H = -2`, `Θ* = 2`,
//! `y* = 5`). A file with no keys at all is a usage error.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use diffusion_esc::{
    DitherFormula, DitherParams, Grid, ScenarioConfig, Scheme, SolverConfig, StaticMap,
};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Full loop through the diffusion actuator.
    #[default]
    Esc,
    /// Averaged cascade under the ideal compensator.
    Average,
    /// Baseline loop without actuator dynamics.
    Standard,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Esc => "esc",
            Kind::Average => "average",
            Kind::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub y_star: f64,
    pub theta_star: f64,
    pub hessian: f64,
}

impl Default for MapSection {
    fn default() -> Self {
        Self {
            y_star: 5.0,
            theta_star: 2.0,
            hessian: -2.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DitherSection {
    /// Amplitude `a` of the integrated probing signal.
    pub a: f64,
    pub omega: f64,
    /// `exact` or `published`.
    pub formula: String,
}

impl Default for DitherSection {
    fn default() -> Self {
        Self {
            a: 0.2,
            omega: 10.0,
            formula: "exact".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorSection {
    pub length: f64,
    pub diffusion: f64,
    pub nodes: usize,
    /// Constant initial value of `α(x, 0)`.
    pub initial_alpha: f64,
}

impl Default for ActuatorSection {
    fn default() -> Self {
        Self {
            length: 1.0,
            diffusion: 1.0,
            nodes: 101,
            initial_alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    /// Adaptation gain `K`.
    pub k: Option<f64>,
    /// Compensator gain `K̄ = K·H`, an alternative to `k`.
    pub k_bar: Option<f64>,
    /// Corner `c` of the output low-pass.
    pub corner: f64,
    pub washout_corner: f64,
    pub hessian_corner: f64,
    pub initial_theta_hat: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            k: None,
            k_bar: None,
            corner: 10.0,
            washout_corner: 1.0,
            hessian_corner: 1.0,
            initial_theta_hat: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub scheme: String,
    pub t_final: f64,
    pub record_every: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            scheme: "crank_nicolson".into(),
            t_final: 100.0,
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AverageSection {
    pub initial_vartheta: f64,
    /// Constant initial value of `u(x, 0)`.
    pub initial_u: f64,
    /// Skip the admissibility gate so positive `K̄` can be probed.
    pub unchecked_gain: bool,
    /// Trailing fraction of the run used by the decay fit.
    pub decay_window: f64,
    /// Start time for the target-system residuals.
    pub residual_skip: f64,
}

impl Default for AverageSection {
    fn default() -> Self {
        Self {
            initial_vartheta: 1.0,
            initial_u: 0.0,
            unchecked_gain: false,
            decay_window: 0.5,
            residual_skip: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Field snapshot cadence in solver steps (ESC) or recorded samples (average).
    pub snapshot_every: Option<usize>,
    /// Trailing fraction of the run used for late-time residuals.
    pub residual_window: f64,
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            snapshot_every: None,
            residual_window: 0.2,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub name: Option<String>,
    pub kind: Kind,
    pub map: MapSection,
    pub dither: DitherSection,
    pub actuator: ActuatorSection,
    pub controller: ControllerSection,
    pub solver: SolverSection,
    pub average: AverageSection,
    pub output: OutputSection,
    pub sweep: Option<SweepSection>,
}

/// Why a config could not be loaded.
#[derive(Debug)]
pub enum LoadError {
    /// Nothing to run: the file has no keys.
    Empty,
    Invalid(anyhow::Error),
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, LoadError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| LoadError::Invalid(anyhow!("malformed config: {e}")))?;
        if table.is_empty() {
            return Err(LoadError::Empty);
        }
        table
            .try_into()
            .map_err(|e| LoadError::Invalid(anyhow!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(LoadError::Invalid)?;
        Self::parse(&text)
    }

    /// Scenario name, falling back to the file stem.
    pub fn name_or(&self, path: &Path) -> String {
        self.name.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into())
        })
    }

    /// Adaptation gain, derived from `k_bar` when that is given instead.
    pub fn k(&self) -> anyhow::Result<f64> {
        match (self.controller.k, self.controller.k_bar) {
            (Some(_), Some(_)) => bail!("set either controller.k or controller.k_bar, not both"),
            (Some(k), None) => Ok(k),
            (None, Some(k_bar)) => Ok(k_bar / self.map.hessian),
            (None, None) => Ok(0.2),
        }
    }

    /// `K̄` as requested, before any gate.
    pub fn k_bar(&self) -> anyhow::Result<f64> {
        match self.controller.k_bar {
            Some(k_bar) if self.controller.k.is_none() => Ok(k_bar),
            _ => Ok(self.k()? * self.map.hessian),
        }
    }

    pub fn formula(&self) -> anyhow::Result<DitherFormula> {
        match self.dither.formula.as_str() {
            "exact" => Ok(DitherFormula::Exact),
            "published" => Ok(DitherFormula::Published),
            other => bail!("unknown dither.formula `{other}` (expected exact or published)"),
        }
    }

    pub fn scheme(&self) -> anyhow::Result<Scheme> {
        self.solver
            .scheme
            .parse()
            .map_err(|e| anyhow!("solver.scheme: {e}"))
    }

    pub fn grid(&self) -> anyhow::Result<Grid> {
        Ok(Grid::new(self.actuator.length, self.actuator.nodes)?)
    }

    /// Builds the core scenario. Gain admissibility is checked by the runners.
    pub fn scenario(&self) -> anyhow::Result<ScenarioConfig> {
        if !(0.0..=1.0).contains(&self.output.residual_window) || self.output.residual_window == 0.0 {
            bail!("output.residual_window must lie in (0, 1]");
        }
        let grid = self.grid()?;
        let initial_alpha = (self.actuator.initial_alpha != 0.0)
            .then(|| vec![self.actuator.initial_alpha; grid.len()]);
        Ok(ScenarioConfig {
            map: StaticMap::new(self.map.y_star, self.map.theta_star, self.map.hessian)?,
            dither: DitherParams::new(self.dither.a, self.dither.omega, self.actuator.length)?,
            dither_formula: self.formula()?,
            k: self.k()?,
            corner: self.controller.corner,
            washout_corner: self.controller.washout_corner,
            hessian_corner: self.controller.hessian_corner,
            solver: SolverConfig::new(self.solver.dt, self.scheme()?),
            grid,
            diffusion: self.actuator.diffusion,
            t_final: self.solver.t_final,
            initial_theta_hat: self.controller.initial_theta_hat,
            initial_alpha,
            record_every: self.solver.record_every,
            snapshot_every: match self.kind {
                Kind::Esc => self.output.snapshot_every,
                _ => None,
            },
        })
    }

    /// Applies one sweep value to a copy of this config.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Self {
        let mut c = self.clone();
        match param {
            SweepParam::Amplitude => c.dither.a = value,
            SweepParam::Omega => c.dither.omega = value,
            SweepParam::Gain => {
                c.controller.k = Some(value);
                c.controller.k_bar = None;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Amplitude,
    Omega,
    Gain,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Amplitude => "a",
            SweepParam::Omega => "omega",
            SweepParam::Gain => "K",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Self::Amplitude),
            "omega" => Ok(Self::Omega),
            "K" | "k" => Ok(Self::Gain),
            other => Err(format!("unknown sweep parameter `{other}` (expected a, omega or K)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_comment_only_files_are_empty() {
        assert!(matches!(FileConfig::parse(""), Err(LoadError::Empty)));
        assert!(matches!(FileConfig::parse("# nothing\n\n"), Err(LoadError::Empty)));
    }

    #[test]
    fn defaults_are_the_baseline_scenario() {
        let cfg = FileConfig::parse("name = \"x\"").unwrap();
        let s = cfg.scenario().unwrap();
        let p = ScenarioConfig::paper();
        assert_eq!(s, p);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            FileConfig::parse("[dither]\namp = 0.1"),
            Err(LoadError::Invalid(_))
        ));
    }

    #[test]
    fn k_bar_maps_to_k() {
        let cfg = FileConfig::parse("[controller]\nk_bar = -0.4").unwrap();
        assert!((cfg.k().unwrap() - 0.2).abs() < 1e-15);
        let both = FileConfig::parse("[controller]\nk = 0.2\nk_bar = -0.4").unwrap();
        assert!(both.k().is_err());
    }

    #[test]
    fn sweep_params() {
        assert_eq!("K".parse::<SweepParam>().unwrap(), SweepParam::Gain);
        assert!("L".parse::<SweepParam>().is_err());
        let cfg = FileConfig::parse("[controller]\nk_bar = -0.4").unwrap();
        let swept = cfg.with_param(SweepParam::Gain, 0.3);
        assert_eq!(swept.k().unwrap(), 0.3);
    }
}
