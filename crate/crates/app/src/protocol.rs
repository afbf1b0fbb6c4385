//! JSON text-frame protocol between the game service and its clients.
//! Every message is an object whose `type` field selects the variant.

use serde::{Deserialize, Serialize};

use pursuit_core::game::{DisturbanceSpec, GameState, Preset, RoundOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Cursor {
        x: f64,
        y: f64,
    },
    Preset {
        value: Preset,
    },
    SetDelays {
        tau1: f64,
        tau2: f64,
    },
    /// `start` counts from the moment the message is applied.
    Disturbance(DisturbanceSpec),
    Reset {},
    /// Sets the pause state, or toggles it when `paused` is omitted.
    Pause {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        paused: Option<bool>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMessage {
    pub tick: u64,
    pub t: f64,
    pub evader: [f64; 2],
    pub pursuer: [f64; 2],
    pub cursor: [f64; 2],
    pub error: [f64; 2],
    pub delays: [f64; 2],
    pub disturbance: [f64; 2],
    /// A capture completed since the previous state message.
    pub captured: bool,
    pub score: u64,
    /// Simulated time is more than 100 ms behind the wall clock.
    pub lag: bool,
}

impl StateMessage {
    pub fn from_state(s: &GameState, captured: bool, lag: bool) -> Self {
        Self {
            tick: s.tick,
            t: s.t,
            evader: s.evader.position(),
            pursuer: s.pursuer.position(),
            cursor: s.cursor,
            error: s.error.position(),
            delays: [s.delays.0, s.delays.1],
            disturbance: s.disturbance_now,
            captured,
            score: s.score,
            lag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    State(StateMessage),
    /// A round ended; the pursuer has been re-spawned.
    Round {
        outcome: RoundOutcome,
        tick: u64,
        t: f64,
        score: u64,
    },
    /// Acknowledges a control message with the settings now in force.
    ConfigAck {
        delays: [f64; 2],
        paused: bool,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}
