//! Fixed-step integration of `ė = A e(t) + B1 e(t - τ1) + B2 e(t - τ2)`.
//!
//! Classical RK4 on a uniform grid; delayed terms at each stage time are read
//! back from a [`HistoryBuffer`] by cubic Hermite interpolation, or from the
//! initial history for times `≤ 0`. Keeping the pre-history outside the
//! buffer means the derivative jump at `t = 0` never gets smeared into the
//! interpolant.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dynamics::DelaySystem;
use crate::error::{Error, Result};
use crate::fmt_g15;
use crate::history::HistoryBuffer;

/// `‖e‖` above which a run is flagged as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

pub type HistoryFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// State on `[-max τ, 0]`.
#[derive(Clone)]
pub enum InitialHistory {
    Constant(Vec<f64>),
    /// Evaluated on demand at any `t ≤ 0`.
    Function { dim: usize, f: HistoryFn },
}

impl InitialHistory {
    pub fn function(dim: usize, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self::Function { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(v) => v.len(),
            Self::Function { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            Self::Constant(v) => out.copy_from_slice(v),
            Self::Function { f, .. } => f(t, out),
        }
    }

    fn at(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.eval(t, &mut v);
        v
    }
}

impl fmt::Debug for InitialHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Self::Function { dim, .. } => f.debug_struct("Function").field("dim", dim).finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Step (s).
    pub dt: f64,
    /// Duration (s).
    pub horizon: f64,
    pub initial_history: InitialHistory,
}

impl SimConfig {
    pub const DEFAULT_DT: f64 = 0.001;

    pub fn new(horizon: f64, initial_history: InitialHistory) -> Self {
        Self {
            dt: Self::DEFAULT_DT,
            horizon,
            initial_history,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Number of steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self, sys: &DelaySystem) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if self.initial_history.dim() != sys.dim() {
            return Err(Error::Dimension(format!(
                "initial history has {} components, system has {}",
                self.initial_history.dim(),
                sys.dim()
            )));
        }
        for tau in [sys.tau1, sys.tau2] {
            if tau > 0.0 && self.dt > tau / 4.0 {
                return Err(Error::InvalidParameter(format!(
                    "dt = {} exceeds a quarter of the delay {tau}",
                    self.dt
                )));
            }
        }
        Ok(())
    }
}

/// Sampled solution on the uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    states: Vec<f64>,
    dim: usize,
    pub dt: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Benchmark or scenario identifier.
    pub label: Option<String>,
    /// Time at which the run was cut short by divergence.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// CSV with header `t,e1,...,en`, 15 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("e{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (t, e) in self.times.iter().zip(self.states()) {
            write!(w, "{}", fmt_g15(*t))?;
            for v in e {
                write!(w, ",{}", fmt_g15(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Row-major copy of a square matrix for the inner loop.
struct Dense {
    n: usize,
    data: Vec<f64>,
    zero: bool,
}

impl Dense {
    fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(m[(i, j)]);
            }
        }
        let zero = data.iter().all(|v| *v == 0.0);
        Self { n, data, zero }
    }

    /// `out += M·x`
    fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        if self.zero {
            return;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

struct Rhs<'a> {
    a: Dense,
    delayed: [(Dense, f64); 2],
    init: &'a InitialHistory,
    scratch: Vec<f64>,
}

impl<'a> Rhs<'a> {
    fn new(sys: &DelaySystem, init: &'a InitialHistory) -> Self {
        Self {
            a: Dense::new(&sys.a),
            delayed: [(Dense::new(&sys.b1), sys.tau1), (Dense::new(&sys.b2), sys.tau2)],
            init,
            scratch: vec![0.0; sys.dim()],
        }
    }

    fn eval(&mut self, t: f64, y: &[f64], hist: &HistoryBuffer, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.a.mul_add(y, out);
        for (b, tau) in &self.delayed {
            if b.zero {
                continue;
            }
            if *tau == 0.0 {
                b.mul_add(y, out);
                continue;
            }
            let s = t - tau;
            if s <= 0.0 {
                self.init.eval(s, &mut self.scratch);
            } else {
                hist.interpolate_into(s, &mut self.scratch)?;
            }
            b.mul_add(&self.scratch, out);
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Integrates the delay system from `t = 0` over `cfg.horizon`.
///
/// A non-finite state or `‖e‖ > 1e9` ends the run early with
/// `diverged_at` set; that is a regular outcome for unstable delays.
pub fn simulate(sys: &DelaySystem, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate(sys)?;
    let n = sys.dim();
    let dt = cfg.dt;
    let steps = cfg.steps();
    let mut rhs = Rhs::new(sys, &cfg.initial_history);
    let mut hist = HistoryBuffer::new(n, dt, HistoryBuffer::capacity_for(sys.max_delay(), dt))?;

    let mut y = cfg.initial_history.at(0.0);
    let mut k1 = vec![0.0; n];
    rhs.eval(0.0, &y, &hist, &mut k1)?;
    hist.push(0, &y, &k1)?;

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * n);
    times.push(0.0);
    states.extend_from_slice(&y);

    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut diverged_at = None;
    let half = 0.5 * dt;

    for step in 0..steps {
        let t = step as f64 * dt;
        for i in 0..n {
            tmp[i] = y[i] + half * k1[i];
        }
        rhs.eval(t + half, &tmp, &hist, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + half * k2[i];
        }
        rhs.eval(t + half, &tmp, &hist, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs.eval(t + dt, &tmp, &hist, &mut k4)?;
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let next = (step + 1) as i64;
        let t_next = next as f64 * dt;
        let finite = y.iter().all(|v| v.is_finite());
        if finite {
            times.push(t_next);
            states.extend_from_slice(&y);
        }
        if !finite || norm(&y) > DIVERGENCE_THRESHOLD {
            diverged_at = Some(t_next);
            break;
        }
        rhs.eval(t_next, &y, &hist, &mut k1)?;
        hist.push(next, &y, &k1)?;
    }

    Ok(Trajectory {
        times,
        states,
        dim: n,
        dt,
        tau1: sys.tau1,
        tau2: sys.tau2,
        label: None,
        diverged_at,
    })
}

/// Integrates the split realization
///
/// ```text
/// ė1 = A e1 + B1 (e1 + e2)(t - τ1)
/// ė2 = A e2 + B2 (e1 + e2)(t - τ2)
/// ```
///
/// with `e1` started from `cfg.initial_history` and `e2` from zero, and
/// returns `e = e1 + e2`.
pub fn simulate_two_block(sys: &DelaySystem, cfg: &SimConfig) -> Result<Trajectory> {
    let zero = InitialHistory::Constant(vec![0.0; sys.dim()]);
    simulate_two_block_with(sys, cfg, &cfg.initial_history, &zero)
}

/// [`simulate_two_block`] with explicit histories for each block; `cfg`'s
/// own initial history is ignored.
pub fn simulate_two_block_with(
    sys: &DelaySystem,
    cfg: &SimConfig,
    first: &InitialHistory,
    second: &InitialHistory,
) -> Result<Trajectory> {
    let n = sys.dim();
    if first.dim() != n || second.dim() != n {
        return Err(Error::Dimension("block histories must match the system".into()));
    }
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    a.view_mut((n, n), (n, n)).copy_from(&sys.a);
    let mut b1 = DMatrix::zeros(2 * n, 2 * n);
    b1.view_mut((0, 0), (n, n)).copy_from(&sys.b1);
    b1.view_mut((0, n), (n, n)).copy_from(&sys.b1);
    let mut b2 = DMatrix::zeros(2 * n, 2 * n);
    b2.view_mut((n, 0), (n, n)).copy_from(&sys.b2);
    b2.view_mut((n, n), (n, n)).copy_from(&sys.b2);
    let stacked = DelaySystem::new(a, b1, b2, sys.tau1, sys.tau2)?;

    let (h1, h2) = (first.clone(), second.clone());
    let history = InitialHistory::function(2 * n, move |t, out| {
        let (lo, hi) = out.split_at_mut(n);
        h1.eval(t, lo);
        h2.eval(t, hi);
    });
    let stacked_cfg = SimConfig {
        dt: cfg.dt,
        horizon: cfg.horizon,
        initial_history: history,
    };
    let blocks = simulate(&stacked, &stacked_cfg)?;

    let states = blocks
        .states()
        .flat_map(|s| (0..n).map(move |i| s[i] + s[n + i]))
        .collect();
    Ok(Trajectory {
        times: blocks.times.clone(),
        states,
        dim: n,
        dt: cfg.dt,
        tau1: sys.tau1,
        tau2: sys.tau2,
        label: None,
        diverged_at: blocks.diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::benchmarks;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn const_history(v: &[f64]) -> InitialHistory {
        InitialHistory::Constant(v.to_vec())
    }

    #[test]
    fn pure_exponential_decay() {
        let z = DMatrix::zeros(4, 4);
        let sys = DelaySystem::new(-DMatrix::identity(4, 4), z.clone(), z, 0.0, 0.0).unwrap();
        let cfg = SimConfig::new(1.0, const_history(&[1.0, 0.0, 0.0, 0.0]));
        let traj = simulate(&sys, &cfg).unwrap();
        assert_eq!(traj.len(), 1001);
        assert_abs_diff_eq!(traj.last_state()[0], (-1.0f64).exp(), epsilon = 1e-9);
        assert_eq!(&traj.last_state()[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn hayes_critical_delay_is_neutral() {
        let sys = benchmarks::scalar_hayes(PI / 2.0);
        let cfg = SimConfig::new(60.0, const_history(&[1.0]));
        let traj = simulate(&sys, &cfg).unwrap();
        let peak = |t0: f64| {
            traj.times
                .iter()
                .zip(traj.states())
                .filter(|(t, _)| **t >= t0 && **t < t0 + 2.0 * PI)
                .map(|(_, e)| e[0].abs())
                .fold(0.0, f64::max)
        };
        let (a0, a1) = (peak(40.0), peak(40.0 + 2.0 * PI));
        assert!(a0 > 0.1);
        assert!(((a1 - a0) / a0).abs() < 0.01, "{a0} -> {a1}");
    }

    #[test]
    fn deterministic_bitwise() {
        let sys = benchmarks::fig9().with_delays(0.8, 0.6).unwrap();
        let cfg = SimConfig::new(3.0, const_history(&[0.1, 0.0, 0.1, 0.0]));
        assert_eq!(simulate(&sys, &cfg).unwrap(), simulate(&sys, &cfg).unwrap());
    }

    #[test]
    fn rejects_coarse_step_and_bad_history() {
        let sys = benchmarks::fig9().with_delays(0.003, 0.8).unwrap();
        let cfg = SimConfig::new(1.0, const_history(&[0.0; 4]));
        assert!(simulate(&sys, &cfg).is_err());
        let sys = benchmarks::fig9();
        assert!(simulate(&sys, &SimConfig::new(1.0, const_history(&[0.0; 3]))).is_err());
        assert!(simulate(&sys, &SimConfig::new(1.0, const_history(&[0.0; 4])).with_dt(0.0)).is_err());
    }

    #[test]
    fn divergence_truncates_and_flags() {
        let z = DMatrix::zeros(1, 1);
        let sys = DelaySystem::new(DMatrix::from_element(1, 1, 5.0), z.clone(), z, 0.0, 0.0)
            .unwrap();
        let traj = simulate(&sys, &SimConfig::new(10.0, const_history(&[1.0]))).unwrap();
        let t = traj.diverged_at.expect("must diverge");
        // e^{5t} = 1e9 at t ≈ 4.145
        assert!((t - 1e9f64.ln() / 5.0).abs() < 2e-3, "{t}");
        assert_eq!(traj.times.last().copied(), Some(t));
        assert!(traj.len() < 10001);
    }

    #[test]
    fn two_block_with_empty_second_channel_matches() {
        let mut sys = benchmarks::fig9().with_delays(0.5, 0.5).unwrap();
        sys.b2 = DMatrix::zeros(4, 4);
        let cfg = SimConfig::new(5.0, const_history(&[0.1, 0.0, -0.1, 0.0]));
        let direct = simulate(&sys, &cfg).unwrap();
        let split = simulate_two_block(&sys, &cfg).unwrap();
        for (a, b) in direct.states().zip(split.states()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn two_block_zero_history_stays_zero() {
        let sys = benchmarks::fig9().with_delays(0.8, 0.8).unwrap();
        let cfg = SimConfig::new(2.0, const_history(&[0.0; 4]));
        let traj = simulate_two_block(&sys, &cfg).unwrap();
        assert!(traj.states().all(|e| e.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn csv_layout() {
        let sys = benchmarks::scalar_hayes(1.0);
        let traj = simulate(&sys, &SimConfig::new(0.002, const_history(&[1.0]))).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,e1");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,1");
    }
}
