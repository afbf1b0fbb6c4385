//! Real-time pursuit game: a cursor-driven evader, a pursuer under delayed
//! LQR feedback, additive force disturbances and a capture rule.
//!
//! Each tick advances simulated time by exactly `dt` and runs, in order: the
//! evader filter, the error-history append, the pursuer integration and the
//! capture check. Time is always `tick · dt`, so long runs do not drift and a
//! replayed input sequence reproduces the telemetry bitwise.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    assemble_delay_system, build_plant, lqr_gain, validate_delay, AgentState, DelaySystem,
    ErrorState, LqrWeights, PlantParams, SplitMode,
};
use crate::error::{Error, Result};
use crate::history::HistoryBuffer;

/// Per-axis tracking filter from cursor to evader position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaderMode {
    /// `p² / (s + p)²`: double real pole, no zero, no overshoot.
    CriticallyDamped { pole: f64 },
    /// Unity feedback around an integrator with a PI controller,
    /// `(kp s + ki) / (s² + kp s + ki)`. Real poles need `kp² ≥ 4 ki`; the
    /// zero can still produce overshoot.
    Pi { kp: f64, ki: f64 },
}

impl Default for EvaderMode {
    fn default() -> Self {
        Self::CriticallyDamped { pole: 10.0 }
    }
}

impl EvaderMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::CriticallyDamped { pole } => {
                if !(pole.is_finite() && pole > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "evader pole must be positive, got {pole}"
                    )));
                }
            }
            Self::Pi { kp, ki } => {
                if !(kp.is_finite() && ki.is_finite() && kp > 0.0 && ki > 0.0) {
                    return Err(Error::InvalidParameter("PI gains must be positive".into()));
                }
                if kp * kp < 4.0 * ki {
                    return Err(Error::InvalidParameter(format!(
                        "PI gains give complex poles: kp² = {} < 4 ki = {}",
                        kp * kp,
                        4.0 * ki
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest closed-loop pole magnitude.
    fn bandwidth(&self) -> f64 {
        match *self {
            Self::CriticallyDamped { pole } => pole,
            Self::Pi { kp, ki } => 0.5 * (kp + (kp * kp - 4.0 * ki).max(0.0).sqrt()),
        }
    }

    /// `(position, aux)` derivative for one axis. `aux` is the velocity for
    /// the critically damped filter and the error integral for PI.
    fn axis_rate(&self, pos: f64, aux: f64, target: f64) -> (f64, f64) {
        match *self {
            Self::CriticallyDamped { pole } => {
                (aux, pole * pole * (target - pos) - 2.0 * pole * aux)
            }
            Self::Pi { kp, ki } => (kp * (target - pos) + ki * aux, target - pos),
        }
    }

    /// `(velocity, acceleration)` of one axis.
    fn axis_motion(&self, pos: f64, aux: f64, target: f64) -> (f64, f64) {
        match *self {
            Self::CriticallyDamped { .. } => self.axis_rate(pos, aux, target),
            Self::Pi { kp, ki } => {
                let vel = kp * (target - pos) + ki * aux;
                (vel, -kp * vel + ki * (target - pos))
            }
        }
    }
}

/// Largest `|pole|·h` per RK4 sub-step. Below it the RK4 amplification of
/// the double pole stays positive together with its derivative, so the
/// discrete step response keeps the sign of its error and cannot overshoot.
const EVADER_MAX_POLE_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Axis {
    pos: f64,
    aux: f64,
}

/// Evader motion controller: two decoupled axis filters.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaderFilter {
    mode: EvaderMode,
    axes: [Axis; 2],
}

impl EvaderFilter {
    pub fn new(mode: EvaderMode, position: [f64; 2]) -> Result<Self> {
        mode.validate()?;
        Ok(Self {
            mode,
            axes: position.map(|pos| Axis { pos, aux: 0.0 }),
        })
    }

    pub fn critically_damped(pole: f64, position: [f64; 2]) -> Result<Self> {
        Self::new(EvaderMode::CriticallyDamped { pole }, position)
    }

    pub fn mode(&self) -> EvaderMode {
        self.mode
    }

    /// Places the evader at rest at `position`.
    pub fn reset(&mut self, position: [f64; 2]) {
        self.axes = position.map(|pos| Axis { pos, aux: 0.0 });
    }

    /// Position/velocity state while tracking `cursor`.
    pub fn state(&self, cursor: [f64; 2]) -> AgentState {
        let (vx, _) = self.mode.axis_motion(self.axes[0].pos, self.axes[0].aux, cursor[0]);
        let (vy, _) = self.mode.axis_motion(self.axes[1].pos, self.axes[1].aux, cursor[1]);
        AgentState::new(self.axes[0].pos, vx, self.axes[1].pos, vy)
    }

    /// Time derivative of [`state`](Self::state) while tracking `cursor`.
    pub fn derivative(&self, cursor: [f64; 2]) -> [f64; 4] {
        let (vx, ax) = self.mode.axis_motion(self.axes[0].pos, self.axes[0].aux, cursor[0]);
        let (vy, ay) = self.mode.axis_motion(self.axes[1].pos, self.axes[1].aux, cursor[1]);
        [vx, ax, vy, ay]
    }

    /// Advances by `dt` with the cursor held, using RK4 sub-steps fine
    /// enough for the filter bandwidth.
    pub fn step(&mut self, cursor: [f64; 2], dt: f64) -> AgentState {
        let subs = ((self.mode.bandwidth() * dt) / EVADER_MAX_POLE_STEP).ceil().max(1.0) as usize;
        let h = dt / subs as f64;
        for (axis, target) in self.axes.iter_mut().zip(cursor) {
            for _ in 0..subs {
                let mode = self.mode;
                let f = |p: f64, a: f64| mode.axis_rate(p, a, target);
                let (p0, a0) = (axis.pos, axis.aux);
                let k1 = f(p0, a0);
                let k2 = f(p0 + 0.5 * h * k1.0, a0 + 0.5 * h * k1.1);
                let k3 = f(p0 + 0.5 * h * k2.0, a0 + 0.5 * h * k2.1);
                let k4 = f(p0 + h * k3.0, a0 + h * k3.1);
                axis.pos = p0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                axis.aux = a0 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            }
        }
        self.state(cursor)
    }
}

/// Free-function form of [`EvaderFilter::step`].
pub fn evader_step(filter: &mut EvaderFilter, cursor: [f64; 2], dt: f64) -> AgentState {
    filter.step(cursor, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceKind {
    None,
    Step,
    Pulse,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    Y,
}

/// Additive force on one acceleration channel of the pursuer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    /// N
    #[serde(default)]
    pub amplitude: f64,
    /// s
    #[serde(default)]
    pub start: f64,
    /// s, pulse only
    #[serde(default)]
    pub duration: f64,
    /// Hz, sine only
    #[serde(default)]
    pub frequency: f64,
    pub channel: Channel,
}

impl DisturbanceSpec {
    pub fn step(amplitude: f64, start: f64, channel: Channel) -> Self {
        Self {
            kind: DisturbanceKind::Step,
            amplitude,
            start,
            duration: 0.0,
            frequency: 0.0,
            channel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("disturbance {what}")));
        if !self.amplitude.is_finite() {
            return bad("amplitude must be finite");
        }
        if !(self.start.is_finite() && self.start >= 0.0) {
            return bad("start must be non-negative");
        }
        if self.kind == DisturbanceKind::Pulse && !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad("duration must be non-negative");
        }
        if self.kind == DisturbanceKind::Sine && !self.frequency.is_finite() {
            return bad("frequency must be finite");
        }
        Ok(())
    }

    /// Force (N) at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            DisturbanceKind::None => 0.0,
            DisturbanceKind::Step => {
                if t >= self.start {
                    self.amplitude
                } else {
                    0.0
                }
            }
            DisturbanceKind::Pulse => {
                if t >= self.start && t < self.start + self.duration {
                    self.amplitude
                } else {
                    0.0
                }
            }
            DisturbanceKind::Sine => {
                if t >= self.start {
                    self.amplitude
                        * (2.0 * std::f64::consts::PI * self.frequency * (t - self.start)).sin()
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn disturbance_value(spec: &DisturbanceSpec, t: f64) -> f64 {
    spec.value(t)
}

/// Summed `[x, y]` force of a set of disturbances.
pub fn total_disturbance(specs: &[DisturbanceSpec], t: f64) -> [f64; 2] {
    let mut d = [0.0; 2];
    for s in specs {
        let i = match s.channel {
            Channel::X => 0,
            Channel::Y => 1,
        };
        d[i] += s.value(t);
    }
    d
}

/// Delay selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Off,
    Unstable,
    Stable,
    Critical,
    #[serde(skip)]
    Manual(f64, f64),
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::Unstable => "unstable",
            Self::Stable => "stable",
            Self::Critical => "critical",
            Self::Manual(..) => "manual",
        }
    }
}

/// Delay pair `(τ1, τ2)` selected by a preset.
pub fn preset_select(choice: Preset) -> Result<(f64, f64)> {
    Ok(match choice {
        Preset::Off => (0.0, 0.0),
        Preset::Unstable => (0.6, 0.6),
        Preset::Stable => (0.8, 0.8),
        Preset::Critical => (1.035, 1.035),
        Preset::Manual(t1, t2) => {
            validate_delay(t1)?;
            validate_delay(t2)?;
            (t1, t2)
        }
    })
}

/// Inputs shared by the pursuer integration stages.
pub struct PursuerContext<'a> {
    pub sys: &'a DelaySystem,
    /// Force-to-acceleration gain per axis (1/m).
    pub force_gain: [f64; 2],
    pub history: &'a HistoryBuffer,
}

impl PursuerContext<'_> {
    fn delayed_error(
        &self,
        tau: f64,
        stage_t: f64,
        pursuer: &[f64; 4],
        evader: &dyn Fn(f64) -> AgentState,
        out: &mut [f64],
    ) -> Result<()> {
        let q = stage_t - tau;
        let newest = self.history.end_time().unwrap_or(f64::NEG_INFINITY);
        if tau == 0.0 || q > newest {
            // Not yet in the history: only reachable for delays below one step.
            let e = evader(q.max(stage_t.min(q)));
            let e = e.to_array();
            for k in 0..4 {
                out[k] = pursuer[k] - e[k];
            }
            Ok(())
        } else {
            self.history.interpolate_or_oldest(q, out)
        }
    }

    /// `ż_p = A z_p + B1 e(t - τ1) + B2 e(t - τ2) + B d(t)`.
    fn rate(
        &self,
        t: f64,
        z: &[f64; 4],
        evader: &dyn Fn(f64) -> AgentState,
        force: &dyn Fn(f64) -> [f64; 2],
    ) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.sys.a[(i, j)] * z[j]).sum();
        }
        let mut e = [0.0; 4];
        for (b, tau) in [(&self.sys.b1, self.sys.tau1), (&self.sys.b2, self.sys.tau2)] {
            self.delayed_error(tau, t, z, evader, &mut e)?;
            for i in 0..4 {
                out[i] += (0..4).map(|j| b[(i, j)] * e[j]).sum::<f64>();
            }
        }
        let d = force(t);
        out[1] += self.force_gain[0] * d[0];
        out[3] += self.force_gain[1] * d[1];
        Ok(out)
    }
}

/// Advances the pursuer from `t` to `t + dt` under delayed feedback on the
/// tracking error. Delayed errors come from the history; delays shorter
/// than a step read the current stage against `evader(s)`.
pub fn pursuer_step(
    ctx: &PursuerContext<'_>,
    pursuer: &AgentState,
    evader: &dyn Fn(f64) -> AgentState,
    force: &dyn Fn(f64) -> [f64; 2],
    t: f64,
    dt: f64,
) -> Result<AgentState> {
    let y = pursuer.to_array();
    let add = |a: &[f64; 4], b: &[f64; 4], h: f64| -> [f64; 4] {
        [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]]
    };
    let half = 0.5 * dt;
    let k1 = ctx.rate(t, &y, evader, force)?;
    let k2 = ctx.rate(t + half, &add(&y, &k1, half), evader, force)?;
    let k3 = ctx.rate(t + half, &add(&y, &k2, half), evader, force)?;
    let k4 = ctx.rate(t + dt, &add(&y, &k3, dt), evader, force)?;
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(AgentState::from_slice(&next))
}

/// Tunables of one game session.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub plant: PlantParams,
    pub weights: LqrWeights,
    pub evader: EvaderMode,
    pub delays: (f64, f64),
    pub disturbances: Vec<DisturbanceSpec>,
    pub dt: f64,
    /// Capture radius (field units, 1 m each).
    pub capture_radius: f64,
    /// Time the pursuer must stay inside the radius (s).
    pub capture_hold: f64,
    /// Position error beyond which the round is lost.
    pub escape_distance: f64,
    /// Pursuer spawn position relative to the evader.
    pub spawn_offset: [f64; 2],
    /// Initial cursor and evader position.
    pub start: [f64; 2],
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            weights: LqrWeights::default(),
            evader: EvaderMode::default(),
            delays: (0.8, 0.8),
            disturbances: Vec::new(),
            dt: 0.001,
            capture_radius: 0.05,
            capture_hold: 0.5,
            escape_distance: 10.0,
            spawn_offset: [-0.4, -0.4],
            start: [0.5, 0.5],
        }
    }
}

/// Longest delay a game accepts; bounds the error history kept per session.
pub const MAX_GAME_DELAY: f64 = 10.0;

fn validate_game_delay(tau: f64) -> Result<()> {
    validate_delay(tau)?;
    if tau > MAX_GAME_DELAY {
        return Err(Error::InvalidParameter(format!(
            "game delays are limited to {MAX_GAME_DELAY} s, got {tau}"
        )));
    }
    Ok(())
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.evader.validate()?;
        validate_game_delay(self.delays.0)?;
        validate_game_delay(self.delays.1)?;
        for d in &self.disturbances {
            d.validate()?;
        }
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.dt, "dt")?;
        positive(self.capture_radius, "capture radius")?;
        positive(self.escape_distance, "escape distance")?;
        if !(self.capture_hold.is_finite() && self.capture_hold >= 0.0) {
            return Err(Error::InvalidParameter("capture hold must be non-negative".into()));
        }
        if !self.spawn_offset.iter().chain(&self.start).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("spawn offset and start must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameState {
    pub t: f64,
    pub tick: u64,
    pub cursor: [f64; 2],
    pub evader: AgentState,
    pub pursuer: AgentState,
    /// Always `pursuer - evader`.
    pub error: ErrorState,
    pub delays: (f64, f64),
    pub disturbance_now: [f64; 2],
    /// Set on the tick a capture completes.
    pub captured: bool,
    pub capture_timer: f64,
    pub score: u64,
}

/// The eight animation signals plus their timestamp, in feed order: evader
/// x/y, disturbance x/y, delay τ1/τ2, position error x/y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TelemetryFrame {
    pub tick: u64,
    pub t: f64,
    pub evader_x: f64,
    pub evader_y: f64,
    pub disturbance_x: f64,
    pub disturbance_y: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub error_x: f64,
    pub error_y: f64,
}

impl TelemetryFrame {
    pub const SIGNALS: [&'static str; 8] = [
        "evader_x",
        "evader_y",
        "disturbance_x",
        "disturbance_y",
        "tau1",
        "tau2",
        "error_x",
        "error_y",
    ];

    pub fn signals(&self) -> [f64; 8] {
        [
            self.evader_x,
            self.evader_y,
            self.disturbance_x,
            self.disturbance_y,
            self.tau1,
            self.tau2,
            self.error_x,
            self.error_y,
        ]
    }

    fn of(state: &GameState) -> Self {
        let [ex, ey] = state.error.position();
        Self {
            tick: state.tick,
            t: state.t,
            evader_x: state.evader.x,
            evader_y: state.evader.y,
            disturbance_x: state.disturbance_now[0],
            disturbance_y: state.disturbance_now[1],
            tau1: state.delays.0,
            tau2: state.delays.1,
            error_x: ex,
            error_y: ey,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundOutcome {
    Captured,
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickResult {
    pub frame: TelemetryFrame,
    pub outcome: Option<RoundOutcome>,
}

/// One game session. Owns all mutable simulation state.
#[derive(Debug, Clone)]
pub struct Game {
    cfg: GameConfig,
    sys: DelaySystem,
    force_gain: [f64; 2],
    evader: EvaderFilter,
    history: HistoryBuffer,
    pending_delays: Option<(f64, f64)>,
    state: GameState,
}

impl Game {
    pub fn new(cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let plant = build_plant(&cfg.plant)?;
        let k = lqr_gain(&plant.a, &plant.b, &cfg.weights)?;
        let sys = assemble_delay_system(&plant, &k, &SplitMode::PositionVelocity)?
            .with_delays(cfg.delays.0, cfg.delays.1)?;
        let force_gain = [plant.b[(1, 0)], plant.b[(3, 1)]];
        let evader = EvaderFilter::new(cfg.evader, cfg.start)?;
        let history = HistoryBuffer::new(4, cfg.dt, HistoryBuffer::capacity_for(sys.max_delay(), cfg.dt))?;
        let evader_state = evader.state(cfg.start);
        let pursuer = AgentState::at_rest(
            cfg.start[0] + cfg.spawn_offset[0],
            cfg.start[1] + cfg.spawn_offset[1],
        );
        let state = GameState {
            t: 0.0,
            tick: 0,
            cursor: cfg.start,
            evader: evader_state,
            pursuer,
            error: ErrorState::between(&pursuer, &evader_state),
            delays: cfg.delays,
            disturbance_now: total_disturbance(&cfg.disturbances, 0.0),
            captured: false,
            capture_timer: 0.0,
            score: 0,
        };
        Ok(Self {
            cfg,
            sys,
            force_gain,
            evader,
            history,
            pending_delays: None,
            state,
        })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn config(&self) -> &GameConfig {
        &self.cfg
    }

    /// Delay system driving the pursuer (current delays).
    pub fn system(&self) -> &DelaySystem {
        &self.sys
    }

    pub fn frame(&self) -> TelemetryFrame {
        TelemetryFrame::of(&self.state)
    }

    /// Delay pair that will be in force on the next tick.
    pub fn delays(&self) -> (f64, f64) {
        self.pending_delays.unwrap_or(self.state.delays)
    }

    /// Schedules new delays for the next tick. The error history is kept;
    /// reaching further back than it goes reads its oldest sample.
    pub fn set_delays(&mut self, tau1: f64, tau2: f64) -> Result<()> {
        validate_game_delay(tau1)?;
        validate_game_delay(tau2)?;
        self.pending_delays = Some((tau1, tau2));
        Ok(())
    }

    pub fn set_preset(&mut self, preset: Preset) -> Result<(f64, f64)> {
        let (t1, t2) = preset_select(preset)?;
        self.set_delays(t1, t2)?;
        Ok((t1, t2))
    }

    pub fn add_disturbance(&mut self, spec: DisturbanceSpec) -> Result<()> {
        spec.validate()?;
        self.cfg.disturbances.push(spec);
        Ok(())
    }

    pub fn clear_disturbances(&mut self) {
        self.cfg.disturbances.clear();
    }

    /// Restarts the session from `t = 0` with the current delays.
    pub fn reset(&mut self) -> Result<()> {
        let delays = self.delays();
        let mut cfg = self.cfg.clone();
        cfg.delays = delays;
        *self = Self::new(cfg)?;
        Ok(())
    }

    fn respawn(&mut self) {
        let e = self.state.evader;
        self.state.pursuer = AgentState::at_rest(
            e.x + self.cfg.spawn_offset[0],
            e.y + self.cfg.spawn_offset[1],
        );
        self.state.error = ErrorState::between(&self.state.pursuer, &e);
        self.state.capture_timer = 0.0;
        self.history.clear();
    }

    /// Advances one step with the cursor held at `cursor`.
    pub fn tick(&mut self, cursor: [f64; 2]) -> Result<TickResult> {
        let dt = self.cfg.dt;
        if let Some((t1, t2)) = self.pending_delays.take() {
            self.sys = self.sys.with_delays(t1, t2)?;
            self.history.grow(HistoryBuffer::capacity_for(self.sys.max_delay(), dt));
            self.state.delays = (t1, t2);
        }
        let n = self.state.tick;
        let t = n as f64 * dt;
        let t_next = (n + 1) as f64 * dt;
        self.state.cursor = cursor;

        // Evader over [t, t + dt] with the cursor held.
        let ze0 = self.evader.state(cursor);
        let dze0 = self.evader.derivative(cursor);
        let ze1 = self.evader.step(cursor, dt);
        let dze1 = self.evader.derivative(cursor);
        let evader_at = move |s: f64| hermite_state(&ze0, &dze0, &ze1, &dze1, t, dt, s);

        let disturbances = self.cfg.disturbances.clone();
        let force = move |s: f64| total_disturbance(&disturbances, s);

        // Error sample at t with its right derivative.
        let zp = self.state.pursuer;
        let e_now = ErrorState::between(&zp, &ze0);
        let dzp = {
            let ctx = PursuerContext {
                sys: &self.sys,
                force_gain: self.force_gain,
                history: &self.history,
            };
            ctx.rate(t, &zp.to_array(), &evader_at, &force)?
        };
        let de: Vec<f64> = (0..4).map(|i| dzp[i] - dze0[i]).collect();
        self.history.push(n as i64, &e_now.0, &de)?;

        let ctx = PursuerContext {
            sys: &self.sys,
            force_gain: self.force_gain,
            history: &self.history,
        };
        let zp_next = pursuer_step(&ctx, &zp, &evader_at, &force, t, dt)?;

        self.state.tick = n + 1;
        self.state.t = t_next;
        self.state.evader = ze1;
        self.state.pursuer = zp_next;
        self.state.error = ErrorState::between(&zp_next, &ze1);
        self.state.disturbance_now = force(t_next);
        self.state.captured = false;

        let separation = self.state.error.position_norm();
        let mut outcome = None;
        if !zp_next.is_finite() || separation.is_nan() || separation > self.cfg.escape_distance {
            outcome = Some(RoundOutcome::Escaped);
            self.respawn();
        } else if separation < self.cfg.capture_radius {
            self.state.capture_timer += dt;
            if self.state.capture_timer >= self.cfg.capture_hold - 1e-9 {
                self.state.captured = true;
                self.state.score += 1;
                outcome = Some(RoundOutcome::Captured);
                self.respawn();
            }
        } else {
            self.state.capture_timer = 0.0;
        }

        Ok(TickResult {
            frame: TelemetryFrame::of(&self.state),
            outcome,
        })
    }
}

/// Cubic Hermite state between two evader samples `dt` apart.
fn hermite_state(
    z0: &AgentState,
    d0: &[f64; 4],
    z1: &AgentState,
    d1: &[f64; 4],
    t0: f64,
    dt: f64,
    s: f64,
) -> AgentState {
    let u = ((s - t0) / dt).clamp(0.0, 1.0);
    if u == 0.0 {
        return *z0;
    }
    if u == 1.0 {
        return *z1;
    }
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let (a, b) = (z0.to_array(), z1.to_array());
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = h00 * a[k] + h10 * dt * d0[k] + h01 * b[k] + h11 * dt * d1[k];
    }
    AgentState::from_slice(&out)
}
