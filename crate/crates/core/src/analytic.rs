//! Closed-form small-signal quantities: relaxation frequency, damping,
//! steady photon densities below and above threshold, and carrier rise time.

use serde::Serialize;

use crate::params::Laser;

/// Linearized response about a photon density N_s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallSignal {
    /// Normalized stimulated rate ΓaN_s/(1+εN_s), 1/s.
    pub n_p: f64,
    /// Envelope decay rate (1/τ_n + N_p)/2, 1/s.
    pub damping: f64,
    /// Relaxation angular frequency, rad/s. `None` when overdamped.
    pub omega: Option<f64>,
}

impl SmallSignal {
    pub fn is_overdamped(&self) -> bool {
        self.omega.is_none()
    }

    /// Ringing frequency ω/2π in Hz, when oscillatory.
    pub fn frequency_hz(&self) -> Option<f64> {
        self.omega.map(|w| w / (2.0 * std::f64::consts::PI))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error("drive {current:e} A cannot hold carrier density {n_f:e} m^-3 (needs > {needed:e} A)")]
    InsufficientDrive { current: f64, n_f: f64, needed: f64 },
    #[error("final carrier density {n_f:e} below initial {n_i:e}")]
    InvalidRange { n_i: f64, n_f: f64 },
}

pub fn small_signal(laser: &Laser, n_s: f64) -> SmallSignal {
    let p = laser.params();
    let tau_n = laser.tau_n();
    let n_p = p.gamma * p.a_gain * n_s / (1.0 + p.epsilon * n_s);
    let radicand = n_p / p.tau_p - 1.0 / (tau_n * tau_n) - n_p * n_p / 4.0 - n_p / (2.0 * tau_n);
    SmallSignal {
        n_p,
        damping: 0.5 * (1.0 / tau_n + n_p),
        omega: (radicand > 0.0).then(|| radicand.sqrt()),
    }
}

/// Steady photon density for a constant current.
///
/// Below threshold only spontaneous emission feeds the mode; above it the
/// carrier density is taken as clamped at n_th.
pub fn steady_photon_density(laser: &Laser, current: f64) -> f64 {
    let p = laser.params();
    let q = p.q_charge;
    if current < laser.i_th() {
        laser.tau_n() * p.tau_p * p.gamma * p.beta * current / (p.tau_mode * q * p.volume)
    } else {
        let d = p.thickness;
        p.tau_p / (q * d) * (current * d / p.volume - laser.n_th() * q * d / laser.tau_n())
    }
}

/// Time for the carrier density to climb from `n_i` to `n_f` under a
/// constant current, ignoring stimulated recombination.
pub fn rise_time(laser: &Laser, current: f64, n_i: f64, n_f: f64) -> Result<f64, AnalyticError> {
    if n_f < n_i {
        return Err(AnalyticError::InvalidRange { n_i, n_f });
    }
    let tau_n = laser.tau_n();
    let qv = laser.qv();
    let needed = qv * n_f / tau_n;
    if current <= needed {
        return Err(AnalyticError::InsufficientDrive {
            current,
            n_f,
            needed,
        });
    }
    Ok(tau_n * ((current - qv * n_i / tau_n) / (current - needed)).ln())
}

/// Delay from switching on `current` at zero carrier density to the
/// carrier density reaching threshold.
pub fn turn_on_delay(laser: &Laser, current: f64) -> Result<f64, AnalyticError> {
    rise_time(laser, current, 0.0, laser.n_th())
}

/// Scalar report of the analytic quantities at one operating current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub current_a: f64,
    pub i_th: f64,
    pub n_s_steady: f64,
    pub omega_rad_s: Option<f64>,
    pub damping_1_s: f64,
    pub overdamped: bool,
    pub turn_on_delay_s: Option<f64>,
}

pub fn report(laser: &Laser, current: f64) -> AnalyticReport {
    let n_s = steady_photon_density(laser, current);
    let ss = small_signal(laser, n_s);
    AnalyticReport {
        current_a: current,
        i_th: laser.i_th(),
        n_s_steady: n_s,
        omega_rad_s: ss.omega,
        damping_1_s: ss.damping,
        overdamped: ss.is_overdamped(),
        turn_on_delay_s: turn_on_delay(laser, current).ok(),
    }
}
