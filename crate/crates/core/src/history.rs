//! Uniform-step ring buffer of past states with cubic Hermite read-back.

use crate::error::{Error, Result};

/// Fractional tick distance under which a query snaps onto a stored sample.
const SNAP: f64 = 1e-9;

/// Time-stamped states `e(t_k)` and derivatives `ė(t_k)` on the grid
/// `t_k = k·dt`, holding the most recent `capacity` samples.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dim: usize,
    dt: f64,
    capacity: usize,
    /// Tick index of the oldest retained sample.
    first_tick: i64,
    len: usize,
    /// Ring slot of the oldest retained sample.
    head: usize,
    states: Vec<f64>,
    derivs: Vec<f64>,
}

impl HistoryBuffer {
    pub fn new(dim: usize, dt: f64, capacity: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("history dimension must be positive".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let capacity = capacity.max(2);
        Ok(Self {
            dim,
            dt,
            capacity,
            first_tick: 0,
            len: 0,
            head: 0,
            states: vec![0.0; capacity * dim],
            derivs: vec![0.0; capacity * dim],
        })
    }

    /// Samples needed to reach `max_delay` back from the newest sample with
    /// a couple of intervals to spare.
    pub fn capacity_for(max_delay: f64, dt: f64) -> usize {
        (max_delay / dt).ceil() as usize + 4
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn time_of(&self, tick: i64) -> f64 {
        tick as f64 * self.dt
    }

    /// Oldest covered time.
    pub fn start_time(&self) -> Option<f64> {
        (self.len > 0).then(|| self.time_of(self.first_tick))
    }

    /// Newest covered time.
    pub fn end_time(&self) -> Option<f64> {
        (self.len > 0).then(|| self.time_of(self.last_tick()))
    }

    fn last_tick(&self) -> i64 {
        self.first_tick + self.len as i64 - 1
    }

    fn slot(&self, i: usize) -> usize {
        (self.head + i) % self.capacity
    }

    fn state(&self, i: usize) -> &[f64] {
        let s = self.slot(i) * self.dim;
        &self.states[s..s + self.dim]
    }

    fn deriv(&self, i: usize) -> &[f64] {
        let s = self.slot(i) * self.dim;
        &self.derivs[s..s + self.dim]
    }

    /// Newest `(tick, state, derivative)`.
    pub fn latest(&self) -> Option<(i64, &[f64], &[f64])> {
        (self.len > 0).then(|| {
            let i = self.len - 1;
            (self.last_tick(), self.state(i), self.deriv(i))
        })
    }

    /// Oldest retained state.
    pub fn oldest(&self) -> Option<&[f64]> {
        (self.len > 0).then(|| self.state(0))
    }

    /// Appends the sample for `tick`, which must directly follow the newest
    /// one. The oldest sample is evicted once the buffer is full.
    pub fn push(&mut self, tick: i64, state: &[f64], deriv: &[f64]) -> Result<()> {
        if state.len() != self.dim || deriv.len() != self.dim {
            return Err(Error::Dimension(format!(
                "history sample must have {} components",
                self.dim
            )));
        }
        if self.len > 0 && tick != self.last_tick() + 1 {
            return Err(Error::InvalidParameter(format!(
                "history samples must be consecutive: expected tick {}, got {tick}",
                self.last_tick() + 1
            )));
        }
        if self.len == 0 {
            self.first_tick = tick;
        }
        let slot = if self.len < self.capacity {
            let s = self.slot(self.len);
            self.len += 1;
            s
        } else {
            let s = self.head;
            self.head = (self.head + 1) % self.capacity;
            self.first_tick += 1;
            s
        };
        let base = slot * self.dim;
        self.states[base..base + self.dim].copy_from_slice(state);
        self.derivs[base..base + self.dim].copy_from_slice(deriv);
        Ok(())
    }

    /// Enlarges the ring, keeping every retained sample.
    pub fn grow(&mut self, capacity: usize) {
        if capacity <= self.capacity {
            return;
        }
        let mut states = vec![0.0; capacity * self.dim];
        let mut derivs = vec![0.0; capacity * self.dim];
        for i in 0..self.len {
            let d = i * self.dim;
            states[d..d + self.dim].copy_from_slice(self.state(i));
            derivs[d..d + self.dim].copy_from_slice(self.deriv(i));
        }
        self.states = states;
        self.derivs = derivs;
        self.head = 0;
        self.capacity = capacity;
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.head = 0;
        self.first_tick = 0;
    }

    /// State at time `t` by cubic Hermite interpolation between the two
    /// bracketing samples. Exact at the samples.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.interpolate_into(t, &mut out)?;
        Ok(out)
    }

    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let out_of_range = || Error::OutOfRange {
            t,
            start: self.start_time().unwrap_or(f64::NAN),
            end: self.end_time().unwrap_or(f64::NAN),
        };
        if self.len == 0 || !t.is_finite() {
            return Err(out_of_range());
        }
        let u = t / self.dt - self.first_tick as f64;
        let last = (self.len - 1) as f64;
        let nearest = u.round();
        if (u - nearest).abs() <= SNAP {
            if nearest < 0.0 || nearest > last {
                return Err(out_of_range());
            }
            out.copy_from_slice(self.state(nearest as usize));
            return Ok(());
        }
        if u < 0.0 || u > last {
            return Err(out_of_range());
        }
        let i = u.floor() as usize;
        let s = u - i as f64;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (self.state(i), self.state(i + 1));
        let (m0, m1) = (self.deriv(i), self.deriv(i + 1));
        let h = self.dt;
        for k in 0..self.dim {
            out[k] = h00 * y0[k] + h10 * h * m0[k] + h01 * y1[k] + h11 * h * m1[k];
        }
        Ok(())
    }

    /// Like [`interpolate_into`](Self::interpolate_into), but times before
    /// the oldest sample read the oldest state (constant pre-history).
    pub fn interpolate_or_oldest(&self, t: f64, out: &mut [f64]) -> Result<()> {
        match self.start_time() {
            Some(start) if t < start => {
                out.copy_from_slice(self.state(0));
                Ok(())
            }
            _ => self.interpolate_into(t, out),
        }
    }
}
