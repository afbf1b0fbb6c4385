//! Command-line tools and WebSocket game service for the pursuit model.

pub mod commands;
pub mod config;
pub mod logs;
pub mod protocol;
pub mod service;
