//! WebSocket game service. Each connection owns one game session whose
//! simulation advances in fixed steps paced to the wall clock; state
//! messages go out at a fixed rate of simulated time.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::time::Instant;

use pursuit_core::game::{DisturbanceSpec, Game, GameConfig, RoundOutcome};

use crate::config::{AppConfig, ConfigError};
use crate::logs::{write_cursor_entry, write_telemetry_row, CURSOR_HEADER, TELEMETRY_HEADER};
use crate::protocol::{parse_client, ClientMessage, ServerMessage, StateMessage};

/// Simulated time may trail the wall clock by this much before state
/// messages carry the lag flag.
pub const LAG_LIMIT: Duration = Duration::from_millis(100);

/// Disturbances one session may add on top of the configured ones.
pub const MAX_DISTURBANCES: usize = 64;

/// Upper bound on ticks computed per wake-up, so a stalled session still
/// services its socket.
const MAX_TICKS_PER_WAKE: u64 = 5000;

#[derive(Debug)]
pub struct ServiceOptions {
    pub game: GameConfig,
    pub telemetry_rate: f64,
    pub record_dir: Option<PathBuf>,
    next_session: AtomicU64,
}

impl ServiceOptions {
    pub fn new(game: GameConfig, telemetry_rate: f64, record_dir: Option<PathBuf>) -> Self {
        Self {
            game,
            telemetry_rate,
            record_dir,
            next_session: AtomicU64::new(1),
        }
    }

    pub fn from_config(cfg: &AppConfig) -> Result<Self, ConfigError> {
        Ok(Self::new(
            cfg.game_config()?,
            cfg.service.telemetry_rate,
            cfg.service.record_dir.clone(),
        ))
    }
}

/// Per-session cursor and telemetry files.
struct Recorder {
    cursor: BufWriter<File>,
    telemetry: BufWriter<File>,
}

impl Recorder {
    fn create(dir: &Path, id: u64) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let open = |kind: &str| -> io::Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(dir.join(format!("session-{id}-{kind}.csv")))?))
        };
        let mut r = Self {
            cursor: open("cursor")?,
            telemetry: open("telemetry")?,
        };
        writeln!(r.cursor, "{CURSOR_HEADER}")?;
        writeln!(r.telemetry, "{TELEMETRY_HEADER}")?;
        Ok(r)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.cursor.flush()?;
        self.telemetry.flush()
    }
}

/// Socket-independent state of one connection.
pub struct Session {
    game: Game,
    /// Disturbances from the config; a reset drops any added since.
    configured: Vec<DisturbanceSpec>,
    cursor: [f64; 2],
    dt: f64,
    rate: f64,
    /// Wall-clock instant corresponding to simulated `t = 0`.
    base: Instant,
    paused_at: Option<Instant>,
    last_frame: u64,
    captured_since_frame: bool,
    recorder: Option<Recorder>,
}

impl Session {
    pub fn new(opts: &ServiceOptions, now: Instant) -> Result<Self, String> {
        let game = Game::new(opts.game.clone()).map_err(|e| e.to_string())?;
        let id = opts.next_session.fetch_add(1, Ordering::Relaxed);
        let recorder = match &opts.record_dir {
            Some(dir) => Some(Recorder::create(dir, id).map_err(|e| e.to_string())?),
            None => None,
        };
        let mut s = Self {
            configured: opts.game.disturbances.clone(),
            cursor: opts.game.start,
            dt: opts.game.dt,
            rate: opts.telemetry_rate,
            base: now,
            paused_at: None,
            last_frame: 0,
            captured_since_frame: false,
            recorder,
            game,
        };
        s.record_cursor();
        s.record_row();
        Ok(s)
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn paused(&self) -> bool {
        self.paused_at.is_some()
    }

    fn frame_index(&self, tick: u64) -> u64 {
        (tick as f64 * self.dt * self.rate + 1e-9).floor() as u64
    }

    fn record_cursor(&mut self) {
        let t = self.game.state().tick as f64 * self.dt;
        let cursor = self.cursor;
        self.with_recorder(|r| write_cursor_entry(&mut r.cursor, t, cursor));
    }

    fn record_row(&mut self) {
        let state = self.game.state().clone();
        self.with_recorder(|r| write_telemetry_row(&mut r.telemetry, &state));
    }

    fn with_recorder(&mut self, f: impl FnOnce(&mut Recorder) -> io::Result<()>) {
        if let Some(r) = self.recorder.as_mut() {
            if let Err(e) = f(r) {
                tracing::warn!("recording stopped: {e}");
                self.recorder = None;
            }
        }
    }

    pub fn finish(&mut self) {
        self.with_recorder(Recorder::flush);
    }

    fn target_tick(&self, now: Instant) -> u64 {
        let elapsed = now.saturating_duration_since(self.base).as_secs_f64();
        (elapsed / self.dt).floor() as u64
    }

    pub fn state_message(&self, lag: bool) -> ServerMessage {
        ServerMessage::State(StateMessage::from_state(
            self.game.state(),
            self.captured_since_frame,
            lag,
        ))
    }

    /// Wall-clock instant of the next state message, if running.
    pub fn next_deadline(&self) -> Option<Instant> {
        if self.paused() {
            return None;
        }
        let ticks = ((self.last_frame + 1) as f64 / (self.rate * self.dt) - 1e-9).ceil();
        Some(self.base + Duration::from_secs_f64(ticks * self.dt))
    }

    /// Runs every tick that is due at `now`.
    pub fn advance(&mut self, now: Instant) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if self.paused() {
            return out;
        }
        let target = self.target_tick(now);
        let end = target.min(self.game.state().tick + MAX_TICKS_PER_WAKE);
        // lag is judged by where this wake-up leaves the simulation
        let lag = (target - end) as f64 * self.dt > LAG_LIMIT.as_secs_f64();
        while self.game.state().tick < end {
            let r = match self.game.tick(self.cursor) {
                Ok(r) => r,
                Err(e) => {
                    out.push(ServerMessage::Error {
                        message: format!("simulation error, session reset: {e}"),
                    });
                    self.restart(now);
                    return out;
                }
            };
            self.record_row();
            let s = self.game.state();
            if let Some(outcome) = r.outcome {
                if outcome == RoundOutcome::Captured {
                    self.captured_since_frame = true;
                }
                out.push(ServerMessage::Round {
                    outcome,
                    tick: s.tick,
                    t: s.t,
                    score: s.score,
                });
            }
            let frame = self.frame_index(s.tick);
            if frame > self.last_frame {
                self.last_frame = frame;
                out.push(self.state_message(lag));
                self.captured_since_frame = false;
            }
        }
        out
    }

    fn restart(&mut self, now: Instant) {
        self.game.clear_disturbances();
        for d in &self.configured {
            // already validated when the game was built
            let _ = self.game.add_disturbance(*d);
        }
        if let Err(e) = self.game.reset() {
            tracing::error!("reset failed: {e}");
        }
        self.base = now;
        self.last_frame = 0;
        self.captured_since_frame = false;
        if self.paused_at.is_some() {
            self.paused_at = Some(now);
        }
    }

    fn ack(&self) -> ServerMessage {
        let (t1, t2) = self.game.delays();
        ServerMessage::ConfigAck {
            delays: [t1, t2],
            paused: self.paused(),
        }
    }

    /// Applies one client text frame after catching the simulation up to
    /// `now`; returns everything to send back, in order.
    pub fn handle_text(&mut self, text: &str, now: Instant) -> Vec<ServerMessage> {
        let mut out = self.advance(now);
        let msg = match parse_client(text) {
            Ok(m) => m,
            Err(e) => {
                out.push(ServerMessage::Error {
                    message: format!("invalid message: {e}"),
                });
                return out;
            }
        };
        let reply = match msg {
            ClientMessage::Cursor { x, y } => {
                if x.is_finite() && y.is_finite() {
                    self.cursor = [x, y];
                    self.record_cursor();
                    None
                } else {
                    Some(ServerMessage::Error {
                        message: "cursor coordinates must be finite".into(),
                    })
                }
            }
            ClientMessage::Preset { value } => Some(match self.game.set_preset(value) {
                Ok(_) => self.ack(),
                Err(e) => ServerMessage::Error { message: e.to_string() },
            }),
            ClientMessage::SetDelays { tau1, tau2 } => Some(match self.game.set_delays(tau1, tau2) {
                Ok(()) => self.ack(),
                Err(e) => ServerMessage::Error { message: e.to_string() },
            }),
            ClientMessage::Disturbance(_)
                if self.game.config().disturbances.len() >= self.configured.len() + MAX_DISTURBANCES =>
            {
                Some(ServerMessage::Error {
                    message: format!("at most {MAX_DISTURBANCES} disturbances per session"),
                })
            }
            ClientMessage::Disturbance(mut spec) => {
                spec.start += self.game.state().t;
                Some(match self.game.add_disturbance(spec) {
                    Ok(()) => self.ack(),
                    Err(e) => ServerMessage::Error { message: e.to_string() },
                })
            }
            ClientMessage::Reset {} => {
                self.restart(now);
                self.game_reset_recording();
                out.push(self.state_message(false));
                Some(self.ack())
            }
            ClientMessage::Pause { paused } => {
                let want = paused.unwrap_or(!self.paused());
                match (self.paused_at, want) {
                    (None, true) => self.paused_at = Some(now),
                    (Some(at), false) => {
                        self.base += now.saturating_duration_since(at);
                        self.paused_at = None;
                    }
                    _ => {}
                }
                Some(self.ack())
            }
        };
        out.extend(reply);
        out
    }

    // A recording covers one continuous run; after a reset the files go on
    // with a fresh initial row so replays line up with the new run.
    fn game_reset_recording(&mut self) {
        self.record_cursor();
        self.record_row();
    }
}

pub fn router(opts: Arc<ServiceOptions>) -> Router {
    Router::new()
        .route("/", get(|| async { "pursuit game service: connect a WebSocket to /ws\n" }))
        .route("/ws", get(ws_handler))
        .with_state(opts)
}

async fn ws_handler(ws: WebSocketUpgrade, State(opts): State<Arc<ServiceOptions>>) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, opts))
}

async fn run_session(socket: WebSocket, opts: Arc<ServiceOptions>) {
    let (mut sink, mut stream) = socket.split();
    let mut session = match Session::new(&opts, Instant::now()) {
        Ok(s) => s,
        Err(e) => {
            let msg = ServerMessage::Error { message: e };
            let _ = sink.send(Message::Text(msg.to_json().into())).await;
            return;
        }
    };
    tracing::debug!("session started");
    let first = session.state_message(false);
    if sink.send(Message::Text(first.to_json().into())).await.is_err() {
        return;
    }
    loop {
        let deadline = session.next_deadline();
        let outgoing = tokio::select! {
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => session.handle_text(text.as_str(), Instant::now()),
                Some(Ok(Message::Binary(_))) => vec![ServerMessage::Error {
                    message: "binary frames are not supported".into(),
                }],
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => Vec::new(),
            },
            _ = tokio::time::sleep_until(deadline.unwrap_or_else(Instant::now)), if deadline.is_some() => {
                session.advance(Instant::now())
            }
        };
        let mut failed = false;
        for m in outgoing {
            if sink.send(Message::Text(m.to_json().into())).await.is_err() {
                failed = true;
                break;
            }
        }
        if failed {
            break;
        }
    }
    session.finish();
    tracing::debug!("session closed");
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    opts: Arc<ServiceOptions>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(opts))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `addr` (port 0 picks a free port) and returns the bound address.
pub async fn bind(addr: SocketAddr) -> io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}
