//! Cursor input logs (`t,cx,cy`) and full-run telemetry (`t,xe,ye,...`).

use std::io::{self, Write};
use std::path::Path;

use pursuit_core::fmt_g15;
use pursuit_core::game::GameState;

use crate::config::{ConfigError, CursorPoint};

pub const CURSOR_HEADER: &str = "t,cx,cy";
pub const TELEMETRY_HEADER: &str = "t,xe,ye,xp,yp,ex,ey,dx,dy,tau1,tau2";

pub fn read_cursor_log(path: &Path) -> Result<Vec<CursorPoint>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: Some(path.to_path_buf()),
        ..ConfigError::new(format!("cannot read cursor log: {e}"))
    })?;
    parse_cursor_log(&text).map_err(|e| ConfigError {
        path: Some(path.to_path_buf()),
        ..e
    })
}

pub fn parse_cursor_log(text: &str) -> Result<Vec<CursorPoint>, ConfigError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CURSOR_HEADER => {}
        _ => return Err(ConfigError::new(format!("cursor log must start with \"{CURSOR_HEADER}\""))),
    }
    let mut out: Vec<CursorPoint> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| ConfigError {
            line: Some(i + 1),
            column: Some(1),
            ..ConfigError::new(msg.to_string())
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err("expected three fields t,cx,cy"));
        }
        let mut v = [0.0f64; 3];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| err(&format!("not a number: \"{f}\"")))?;
            if !slot.is_finite() {
                return Err(err("values must be finite"));
            }
        }
        if v[0] < 0.0 || out.last().is_some_and(|p| v[0] < p.t) {
            return Err(err("times must be non-negative and non-decreasing"));
        }
        out.push(CursorPoint {
            t: v[0],
            x: v[1],
            y: v[2],
        });
    }
    Ok(out)
}

/// Coordinates are written in shortest round-trip form so a replay sees the
/// exact values the live session used.
pub fn write_cursor_entry<W: Write>(w: &mut W, t: f64, cursor: [f64; 2]) -> io::Result<()> {
    writeln!(w, "{},{},{}", fmt_g15(t), cursor[0], cursor[1])
}

/// First tick at which a point stamped `t` is in force.
fn tick_of(t: f64, dt: f64) -> u64 {
    (t / dt - 1e-6).ceil().max(0.0) as u64
}

/// Sample-and-hold cursor over ticks, fed from a script or a log.
#[derive(Debug, Clone)]
pub struct CursorSchedule {
    points: Vec<(u64, [f64; 2])>,
    next: usize,
    current: [f64; 2],
}

impl CursorSchedule {
    pub fn new(start: [f64; 2], points: &[CursorPoint], dt: f64) -> Self {
        Self {
            points: points.iter().map(|p| (tick_of(p.t, dt), [p.x, p.y])).collect(),
            next: 0,
            current: start,
        }
    }

    /// Cursor held during `tick`; ticks must be queried in increasing order.
    pub fn at(&mut self, tick: u64) -> [f64; 2] {
        while let Some(&(k, c)) = self.points.get(self.next) {
            if k > tick {
                break;
            }
            self.current = c;
            self.next += 1;
        }
        self.current
    }
}

pub fn write_telemetry_row<W: Write>(w: &mut W, s: &GameState) -> io::Result<()> {
    let [ex, ey] = s.error.position();
    let row = [
        s.t,
        s.evader.x,
        s.evader.y,
        s.pursuer.x,
        s.pursuer.y,
        ex,
        ey,
        s.disturbance_now[0],
        s.disturbance_now[1],
        s.delays.0,
        s.delays.1,
    ];
    let cells: Vec<String> = row.iter().map(|v| fmt_g15(*v)).collect();
    writeln!(w, "{}", cells.join(","))
}
