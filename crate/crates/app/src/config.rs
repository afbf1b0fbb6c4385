//! JSON configuration shared by all subcommands.
//!
//! Every section is optional and falls back to the defaults below; unknown
//! keys are rejected so that typos surface as errors.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use pursuit_core::dde::InitialHistory;
use pursuit_core::dynamics::{
    assemble_delay_system, benchmarks, build_plant, lqr_gain, DelaySystem, LqrWeights,
    PlantParams, SplitMode, DEFAULT_EFFORT_WEIGHT,
};
use pursuit_core::game::{preset_select, DisturbanceSpec, EvaderMode, GameConfig, Preset};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub lqr: LqrSection,
    #[serde(default)]
    pub system: SystemChoice,
    #[serde(default)]
    pub delays: DelaySection,
    #[serde(default)]
    pub evader: EvaderMode,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceSpec>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub capture: CaptureSection,
    #[serde(default)]
    pub cursor: CursorSection,
    #[serde(default)]
    pub service: ServiceSection,
    #[serde(default)]
    pub map: MapSection,
}

/// LQR weights as row-major nested arrays; omitted matrices take the
/// library defaults (`Q = I4`, `R = 6.25e-4 · I2`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
}

/// Which delay system the run is about.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemChoice {
    /// Plant + LQR gains split over position and velocity delays.
    #[default]
    Lqr,
    /// A fixed benchmark: `fig9` or `scalar`.
    Benchmark { id: String },
}

/// Either `{"preset": "stable"}` or `{"tau1": .., "tau2": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
}

impl Default for DelaySection {
    fn default() -> Self {
        Self {
            preset: Some(Preset::Stable),
            tau1: None,
            tau2: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Full game loop with evader, pursuer and capture logic.
    Game,
    /// Closed-loop error dynamics only.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Defaults to `game` for the LQR system and `error` for benchmarks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SimMode>,
    /// Constant initial error history for `error` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_error: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    0.001
}

fn default_horizon() -> f64 {
    20.0
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
            mode: None,
            initial_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSection {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_hold")]
    pub hold: f64,
    /// Position error that loses the round.
    #[serde(default = "default_escape")]
    pub escape_distance: f64,
    #[serde(default = "default_spawn")]
    pub spawn_offset: [f64; 2],
}

fn default_radius() -> f64 {
    0.05
}

fn default_hold() -> f64 {
    0.5
}

fn default_escape() -> f64 {
    10.0
}

fn default_spawn() -> [f64; 2] {
    [-0.4, -0.4]
}

impl Default for CaptureSection {
    fn default() -> Self {
        Self {
            radius: default_radius(),
            hold: default_hold(),
            escape_distance: default_escape(),
            spawn_offset: default_spawn(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CursorPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Scripted cursor for headless runs: held at `start`, then at each point
/// from its time on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CursorSection {
    #[serde(default = "default_start")]
    pub start: [f64; 2],
    #[serde(default)]
    pub script: Vec<CursorPoint>,
}

fn default_start() -> [f64; 2] {
    [0.5, 0.5]
}

impl Default for CursorSection {
    fn default() -> Self {
        Self {
            start: default_start(),
            script: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    #[serde(default = "default_port")]
    pub port: u16,
    /// State messages per simulated second.
    #[serde(default = "default_rate")]
    pub telemetry_rate: f64,
    /// Directory for per-session cursor and telemetry logs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_dir: Option<PathBuf>,
}

fn default_port() -> u16 {
    8080
}

fn default_rate() -> f64 {
    60.0
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            port: default_port(),
            telemetry_rate: default_rate(),
            record_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    /// `[lo, hi]`; `[0, 1.2]` by default, `[0, 2]` for the scalar family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2: Option<[f64; 2]>,
    #[serde(default = "default_cells")]
    pub n1: usize,
    #[serde(default = "default_cells")]
    pub n2: usize,
}

fn default_cells() -> usize {
    61
}

impl Default for MapSection {
    fn default() -> Self {
        Self {
            tau1: None,
            tau2: None,
            n1: default_cells(),
            n2: default_cells(),
        }
    }
}

/// Load or validation failure, rendered as `path:line:column: message`
/// when a position is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            path: None,
            line: None,
            column: None,
            message: message.into(),
        }
    }

    fn at(mut self, path: &Path) -> Self {
        self.path = Some(path.to_path_buf());
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "{}:", p.display())?;
            if let (Some(l), Some(c)) = (self.line, self.column) {
                write!(f, "{l}:{c}:")?;
            }
            write!(f, " ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        let line = (e.line() > 0).then_some(e.line());
        Self {
            path: None,
            line,
            column: line.map(|_| e.column()),
            message: e.to_string(),
        }
    }
}

impl From<pursuit_core::Error> for ConfigError {
    fn from(e: pursuit_core::Error) -> Self {
        Self::new(e.to_string())
    }
}

/// Selectable system family for stability maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Fig9,
    Lqr,
    Scalar,
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read config: {e}")).at(path))?;
        Self::parse(&text).map_err(|e| e.at(path))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every derived object can be built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (t1, t2) = self.delays()?;
        self.family()?;
        if !(self.sim.dt.is_finite() && self.sim.dt > 0.0) {
            return Err(ConfigError::new("sim.dt must be positive"));
        }
        for tau in [t1, t2] {
            if tau > 0.0 && self.sim.dt > tau / 4.0 {
                return Err(ConfigError::new(format!(
                    "sim.dt = {} exceeds a quarter of the delay {tau}",
                    self.sim.dt
                )));
            }
        }
        if !(self.sim.horizon.is_finite() && self.sim.horizon >= 0.0) {
            return Err(ConfigError::new("sim.horizon must be non-negative"));
        }
        if !(self.service.telemetry_rate.is_finite() && self.service.telemetry_rate > 0.0) {
            return Err(ConfigError::new("service.telemetry_rate must be positive"));
        }
        if self.service.telemetry_rate * self.sim.dt > 1.0 {
            return Err(ConfigError::new("service.telemetry_rate exceeds the simulation rate"));
        }
        if self.map.n1 < 2 || self.map.n2 < 2 {
            return Err(ConfigError::new("map.n1 and map.n2 must be at least 2"));
        }
        for p in &self.cursor.script {
            if !(p.t.is_finite() && p.t >= 0.0 && p.x.is_finite() && p.y.is_finite()) {
                return Err(ConfigError::new("cursor.script points need finite t >= 0, x, y"));
            }
        }
        if self.cursor.script.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(ConfigError::new("cursor.script must be ordered by time"));
        }
        match self.mode() {
            SimMode::Game => {
                if self.family()? != Family::Lqr {
                    return Err(ConfigError::new("sim.mode \"game\" requires system kind \"lqr\""));
                }
                self.game_config()?.validate()?;
            }
            SimMode::Error => {
                let sys = self.delay_system(self.family()?)?;
                self.initial_history(&sys)?;
            }
        }
        Ok(())
    }

    pub fn delays(&self) -> Result<(f64, f64), ConfigError> {
        let d = &self.delays;
        match (d.preset, d.tau1, d.tau2) {
            (Some(p), None, None) => Ok(preset_select(p)?),
            (None, Some(t1), Some(t2)) => Ok(preset_select(Preset::Manual(t1, t2))?),
            (Some(_), _, _) => Err(ConfigError::new("delays: give either preset or tau1/tau2")),
            _ => Err(ConfigError::new("delays: tau1 and tau2 are both required")),
        }
    }

    pub fn family(&self) -> Result<Family, ConfigError> {
        match &self.system {
            SystemChoice::Lqr => Ok(Family::Lqr),
            SystemChoice::Benchmark { id } if id == benchmarks::FIG9 => Ok(Family::Fig9),
            SystemChoice::Benchmark { id } if id == benchmarks::SCALAR => Ok(Family::Scalar),
            SystemChoice::Benchmark { id } => Err(ConfigError::new(format!(
                "unknown benchmark \"{id}\" (expected \"fig9\" or \"scalar\")"
            ))),
        }
    }

    pub fn mode(&self) -> SimMode {
        self.sim.mode.unwrap_or(match self.system {
            SystemChoice::Lqr => SimMode::Game,
            SystemChoice::Benchmark { .. } => SimMode::Error,
        })
    }

    pub fn weights(&self) -> Result<LqrWeights, ConfigError> {
        let q = match &self.lqr.q {
            Some(rows) => matrix("lqr.q", rows, 4)?,
            None => DMatrix::identity(4, 4),
        };
        let r = match &self.lqr.r {
            Some(rows) => matrix("lqr.r", rows, 2)?,
            None => DMatrix::identity(2, 2) * DEFAULT_EFFORT_WEIGHT,
        };
        Ok(LqrWeights::new(q, r)?)
    }

    /// Delay system of `family` at the configured delays.
    pub fn delay_system(&self, family: Family) -> Result<DelaySystem, ConfigError> {
        let base = match family {
            Family::Fig9 => benchmarks::fig9(),
            Family::Scalar => benchmarks::scalar_hayes(0.0),
            Family::Lqr => {
                let plant = build_plant(&self.plant)?;
                let k = lqr_gain(&plant.a, &plant.b, &self.weights()?)?;
                assemble_delay_system(&plant, &k, &SplitMode::PositionVelocity)?
            }
        };
        let (t1, t2) = self.delays()?;
        Ok(base.with_delays(t1, t2)?)
    }

    pub fn initial_history(&self, sys: &DelaySystem) -> Result<InitialHistory, ConfigError> {
        let v = match &self.sim.initial_error {
            Some(v) => v.clone(),
            None if sys.dim() == 4 => vec![0.1, 0.0, 0.1, 0.0],
            None => vec![1.0; sys.dim()],
        };
        if v.len() != sys.dim() || !v.iter().all(|x| x.is_finite()) {
            return Err(ConfigError::new(format!(
                "sim.initial_error needs {} finite components",
                sys.dim()
            )));
        }
        Ok(InitialHistory::Constant(v))
    }

    pub fn game_config(&self) -> Result<GameConfig, ConfigError> {
        let cfg = GameConfig {
            plant: self.plant,
            weights: self.weights()?,
            evader: self.evader,
            delays: self.delays()?,
            disturbances: self.disturbances.clone(),
            dt: self.sim.dt,
            capture_radius: self.capture.radius,
            capture_hold: self.capture.hold,
            escape_distance: self.capture.escape_distance,
            spawn_offset: self.capture.spawn_offset,
            start: self.cursor.start,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Map grid ranges for `family`.
    pub fn map_ranges(&self, family: Family) -> ((f64, f64), (f64, f64)) {
        let default = match family {
            Family::Scalar => [0.0, 2.0],
            _ => [0.0, 1.2],
        };
        let a = self.map.tau1.unwrap_or(default);
        let b = self.map.tau2.unwrap_or(default);
        ((a[0], a[1]), (b[0], b[1]))
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ConfigError::new(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
