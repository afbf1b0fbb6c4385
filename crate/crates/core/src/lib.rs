//! Planar pursuit-evasion under sensing delays.
//!
//! * [`dynamics`]: pursuer plant, LQR gain and the two-delay error dynamics.
//! * [`dde`]: deterministic RK4 integration with Hermite history read-back.
//! * [`stability`]: characteristic-root analysis and delay-plane maps.
//! * [`game`]: evader filter, delayed pursuer, disturbances, capture and telemetry.

pub mod dde;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod history;
mod linalg;
mod riccati;
pub mod stability;

pub use error::{Error, Result};
pub use linalg::{eigenvalues, spectral_abscissa};
pub use riccati::care_residual;

/// Formats `v` with at most 15 significant digits, trailing zeros trimmed.
pub fn fmt_g15(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" { "0".to_string() } else { s }
    } else {
        let s = format!("{v:.14e}");
        let (mantissa, exponent) = s.split_once('e').expect("scientific format");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}
