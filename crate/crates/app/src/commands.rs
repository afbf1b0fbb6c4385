//! Batch subcommands: headless simulation and stability maps.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use pursuit_core::dde::{simulate as simulate_dde, SimConfig, Trajectory};
use pursuit_core::game::{Game, RoundOutcome};
use pursuit_core::stability::{
    classify_presets, stability_map, GrowthOracle, PresetVerdict, RootOptions, StabilityMap,
};

use crate::config::{AppConfig, ConfigError, Family, SimMode};
use crate::logs::{read_cursor_log, write_telemetry_row, CursorSchedule, TELEMETRY_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("simulation failed: {0}")]
    Core(#[from] pursuit_core::Error),
}

impl CliError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// How a completed run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed { rows: usize },
    /// The position error left the arena or the state blew up.
    Lost { rows: usize, t: f64, reason: String },
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Completed { .. } => 0,
            Self::Lost { .. } => 2,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

/// Runs the configured simulation and writes its CSV to `out`.
pub fn simulate(
    cfg: &AppConfig,
    out: &Path,
    cursor_log: Option<&Path>,
) -> Result<Outcome, CliError> {
    match cfg.mode() {
        SimMode::Game => simulate_game(cfg, out, cursor_log),
        SimMode::Error => simulate_error(cfg, out),
    }
}

fn simulate_game(
    cfg: &AppConfig,
    out: &Path,
    cursor_log: Option<&Path>,
) -> Result<Outcome, CliError> {
    let game_cfg = cfg.game_config()?;
    let dt = game_cfg.dt;
    let points = match cursor_log {
        Some(p) => read_cursor_log(p)?,
        None => cfg.cursor.script.clone(),
    };
    let mut cursor = CursorSchedule::new(cfg.cursor.start, &points, dt);
    let mut game = Game::new(game_cfg)?;
    let steps = (cfg.sim.horizon / dt).round() as u64;

    let mut w = create(out)?;
    let io = CliError::io(out);
    let mut lost = None;
    let result = (|| -> io::Result<()> {
        writeln!(w, "{TELEMETRY_HEADER}")?;
        write_telemetry_row(&mut w, game.state())?;
        for n in 0..steps {
            let r = game
                .tick(cursor.at(n))
                .map_err(|e| io::Error::other(e.to_string()))?;
            write_telemetry_row(&mut w, game.state())?;
            if r.outcome == Some(RoundOutcome::Escaped) && lost.is_none() {
                lost = Some(r.frame.t);
            }
        }
        w.flush()
    })();
    result.map_err(io)?;

    let rows = steps as usize + 1;
    Ok(match lost {
        Some(t) => Outcome::Lost {
            rows,
            t,
            reason: format!(
                "position error exceeded {} m",
                cfg.capture.escape_distance
            ),
        },
        None => Outcome::Completed { rows },
    })
}

fn position_error(e: &[f64]) -> f64 {
    if e.len() == 4 {
        e[0].hypot(e[2])
    } else {
        e.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn simulate_error(cfg: &AppConfig, out: &Path) -> Result<Outcome, CliError> {
    let sys = cfg.delay_system(cfg.family()?)?;
    let history = cfg.initial_history(&sys)?;
    let sim = SimConfig::new(cfg.sim.horizon, history).with_dt(cfg.sim.dt);
    let traj: Trajectory = simulate_dde(&sys, &sim)?;
    let mut w = create(out)?;
    traj.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(out))?;

    let rows = traj.len();
    let limit = cfg.capture.escape_distance;
    let escaped = traj
        .times
        .iter()
        .zip(traj.states())
        .find(|(_, e)| position_error(e) > limit)
        .map(|(t, _)| *t);
    Ok(match (escaped, traj.diverged_at) {
        (Some(t), _) => Outcome::Lost {
            rows,
            t,
            reason: format!("position error exceeded {limit} m"),
        },
        (None, Some(t)) => Outcome::Lost {
            rows,
            t,
            reason: "state norm exceeded the divergence threshold".into(),
        },
        (None, None) => Outcome::Completed { rows },
    })
}

/// Result of the `stability-map` subcommand.
#[derive(Debug, Clone)]
pub struct MapReport {
    pub family: Family,
    pub map: StabilityMap,
    pub presets: Vec<PresetVerdict>,
    /// Interpolated delays where the abscissa changes sign on the diagonal.
    pub diagonal: Vec<f64>,
    /// Same along τ1 with τ2 at the lower end of its range.
    pub tau1_axis: Vec<f64>,
}

fn interpolate_crossings(tau: &[f64], abscissa: &[f64]) -> Vec<f64> {
    (1..tau.len())
        .filter(|&i| (abscissa[i - 1] < 0.0) != (abscissa[i] < 0.0))
        .map(|i| {
            let (a0, a1) = (abscissa[i - 1], abscissa[i]);
            tau[i - 1] + (tau[i] - tau[i - 1]) * a0 / (a0 - a1)
        })
        .collect()
}

pub fn stability_map_report(cfg: &AppConfig, family: Family) -> Result<MapReport, CliError> {
    let sys = cfg.delay_system(family)?;
    let (r1, r2) = cfg.map_ranges(family);
    let opts = RootOptions::default();
    let map = stability_map(&sys, r1, r2, cfg.map.n1, cfg.map.n2, &opts)?;
    let presets = classify_presets(&sys, &opts, &GrowthOracle::default())?;
    let diagonal = if map.tau1 == map.tau2 {
        let a: Vec<f64> = (0..map.tau1.len()).map(|i| map.get(i, i).abscissa).collect();
        interpolate_crossings(&map.tau1, &a)
    } else {
        Vec::new()
    };
    let axis: Vec<f64> = (0..map.tau1.len()).map(|i| map.get(i, 0).abscissa).collect();
    let tau1_axis = interpolate_crossings(&map.tau1, &axis);
    Ok(MapReport {
        family,
        map,
        presets,
        diagonal,
        tau1_axis,
    })
}

/// Writes the map CSV and prints the preset table and boundary summary.
pub fn stability_map_cmd<W: Write>(
    cfg: &AppConfig,
    out: &Path,
    family: Family,
    report: &mut W,
) -> Result<MapReport, CliError> {
    let r = stability_map_report(cfg, family)?;
    let mut w = create(out)?;
    r.map
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(out))?;
    print_report(&r, report).map_err(CliError::io(Path::new("<stdout>")))?;
    Ok(r)
}

fn print_report<W: Write>(r: &MapReport, w: &mut W) -> io::Result<()> {
    writeln!(
        w,
        "{} x {} cells, family {:?}",
        r.map.tau1.len(),
        r.map.tau2.len(),
        r.family
    )?;
    writeln!(
        w,
        "{:<10} {:>6} {:>11} {:>9} {:>11} {:>9}",
        "preset", "tau", "abscissa", "label", "growth", "nominal"
    )?;
    for p in &r.presets {
        writeln!(
            w,
            "{:<10} {:>6} {:>+11.5} {:>9} {:>+11.5} {:>9}{}",
            p.name,
            p.tau,
            p.verdict.abscissa,
            p.verdict.label.as_str(),
            p.growth_rate,
            p.nominal.as_str(),
            if p.matches_nominal() { "" } else { "  (differs)" }
        )?;
    }
    let list = |v: &[f64]| {
        if v.is_empty() {
            "none in range".to_string()
        } else {
            v.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join(", ")
        }
    };
    if r.map.tau1 == r.map.tau2 {
        writeln!(w, "stability boundary on tau1 = tau2: {}", list(&r.diagonal))?;
    }
    writeln!(
        w,
        "stability boundary along tau1 at tau2 = {}: {}",
        r.map.tau2[0],
        list(&r.tau1_axis)
    )
}
