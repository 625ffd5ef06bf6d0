//! Fixed-step integration of the coupled carrier / photon rate equations.
//!
//! ```text
//! dn/dt   = −G(n, N_s)·N_s − n/τ_n + I/(qV)
//! dN_s/dt =  G(n, N_s)·N_s + Γβn/τ_mode − N_s/τ_p
//! G       =  Γa(n − n_g)/(1 + εN_s)
//! ```
//!
//! Forward Euler is the production integrator; classic RK4 is kept as an
//! independent cross-check.

use std::io::{self, Write};

use serde::Serialize;

use crate::drive::{DriveProfile, DriveSampler};
use crate::params::Laser;

/// Default solver step, s.
pub const DEFAULT_DT: f64 = 5e-15;
/// Densities above this are treated as a numerical blow-up, m⁻³.
pub const BLOWUP_DENSITY: f64 = 1e35;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SimState {
    pub t: f64,
    /// Carrier density, m⁻³.
    pub n: f64,
    /// Photon density, m⁻³.
    pub n_s: f64,
}

/// One recorded trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    /// Effective (post-filter) injection current, A.
    pub current: f64,
    pub n: f64,
    pub n_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Integration step, s.
    pub dt: f64,
    /// End of the simulated window, s.
    pub t_end: f64,
    /// Record every `stride`-th step.
    pub stride: usize,
    pub initial: SimState,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            stride: 1,
            initial: SimState::default(),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_initial(mut self, initial: SimState) -> Self {
        self.initial = initial;
        self
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_end: 10e-9,
            stride: 100,
            initial: SimState::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("step {dt:e} s exceeds the stability ceiling tau_p/20 = {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("drive profile ends at {drive_end:e} s, before the simulation end {t_end:e} s")]
    DriveTooShort { drive_end: f64, t_end: f64 },
    #[error("numerical blow-up at t = {t:e} s (n = {n:e}, N_s = {n_s:e})")]
    NumericalBlowup { t: f64, n: f64, n_s: f64 },
}

/// Uniformly sampled simulation output.
#[derive(Debug, Clone)]
pub struct SimTrace {
    /// Spacing of the recorded samples, s.
    pub dt: f64,
    /// Integration step actually used, s.
    pub step: f64,
    pub integrator: Integrator,
    pub samples: Vec<Sample>,
    /// Number of times a density was clamped at zero.
    pub clamp_events: usize,
    pub laser: Laser,
    pub drive: DriveProfile,
}

/// Right-hand side of the rate equations at carrier density `n`, photon
/// density `n_s` and injection current `current`.
pub fn derivatives(n: f64, n_s: f64, current: f64, laser: &Laser) -> (f64, f64) {
    let p = laser.params();
    let stimulated = p.gamma * p.a_gain * (n - p.n_transparency) / (1.0 + p.epsilon * n_s) * n_s;
    let dn = -stimulated - n / laser.tau_n() + current / laser.qv();
    let dns = stimulated + p.gamma * p.beta * n / p.tau_mode - n_s / p.tau_p;
    (dn, dns)
}

/// Forward-Euler integration.
pub fn simulate(laser: &Laser, drive: &DriveProfile, config: &SolverConfig) -> Result<SimTrace, SolveError> {
    integrate(laser, drive, config, Integrator::Euler)
}

/// Classic fourth-order Runge–Kutta integration.
pub fn simulate_rk4(laser: &Laser, drive: &DriveProfile, config: &SolverConfig) -> Result<SimTrace, SolveError> {
    integrate(laser, drive, config, Integrator::Rk4)
}

pub fn integrate(
    laser: &Laser,
    drive: &DriveProfile,
    config: &SolverConfig,
    method: Integrator,
) -> Result<SimTrace, SolveError> {
    let dt = config.dt;
    let limit = laser.params().tau_p / 20.0;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SolveError::InvalidConfig(format!("dt must be > 0, got {dt:e}")));
    }
    if dt > limit * (1.0 + 1e-12) {
        return Err(SolveError::StepTooLarge { dt, limit });
    }
    if !(config.t_end >= dt) {
        return Err(SolveError::InvalidConfig(format!(
            "t_end {:e} s shorter than one step",
            config.t_end
        )));
    }
    if config.stride == 0 {
        return Err(SolveError::InvalidConfig("stride must be >= 1".into()));
    }
    let init = config.initial;
    if !(init.n >= 0.0 && init.n_s >= 0.0 && init.n.is_finite() && init.n_s.is_finite()) {
        return Err(SolveError::InvalidConfig("initial densities must be finite and >= 0".into()));
    }
    let stride = config.stride;
    let raw_steps = (config.t_end / dt).round() as usize;
    let steps = raw_steps.div_ceil(stride) * stride;
    let sim_end = steps as f64 * dt;
    let drive_end = drive.t_end();
    if drive_end < sim_end - (stride as f64 * dt) * (1.0 + 1e-9) {
        return Err(SolveError::DriveTooShort {
            drive_end,
            t_end: sim_end,
        });
    }

    let mut samples = Vec::with_capacity(steps / stride + 1);
    let mut sampler = DriveSampler::new(drive);
    let (mut n, mut n_s) = (init.n, init.n_s);
    let mut clamp_events = 0usize;
    let half = 0.5 * dt;

    for k in 0..steps {
        let t = k as f64 * dt;
        let i = sampler.step(t, dt);
        if k % stride == 0 {
            samples.push(Sample {
                t,
                current: i.start,
                n,
                n_s,
            });
        }
        let (nn, nns) = match method {
            Integrator::Euler => {
                let (a, b) = derivatives(n, n_s, i.start, laser);
                (n + dt * a, n_s + dt * b)
            }
            Integrator::Rk4 => {
                let (a1, b1) = derivatives(n, n_s, i.start, laser);
                let (a2, b2) = derivatives(n + half * a1, n_s + half * b1, i.mid, laser);
                let (a3, b3) = derivatives(n + half * a2, n_s + half * b2, i.mid, laser);
                let (a4, b4) = derivatives(n + dt * a3, n_s + dt * b3, i.end, laser);
                (
                    n + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
                    n_s + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
                )
            }
        };
        if !nn.is_finite() || !nns.is_finite() || nn > BLOWUP_DENSITY || nns > BLOWUP_DENSITY {
            return Err(SolveError::NumericalBlowup {
                t: t + dt,
                n: nn,
                n_s: nns,
            });
        }
        n = if nn < 0.0 {
            clamp_events += 1;
            0.0
        } else {
            nn
        };
        n_s = if nns < 0.0 {
            clamp_events += 1;
            0.0
        } else {
            nns
        };
    }
    samples.push(Sample {
        t: sim_end,
        current: sampler.current(),
        n,
        n_s,
    });

    Ok(SimTrace {
        dt: dt * stride as f64,
        step: dt,
        integrator: method,
        samples,
        clamp_events,
        laser: *laser,
        drive: drive.clone(),
    })
}

/// Stationary point of the rate equations under a constant current.
///
/// For a trial carrier density the photon balance is a quadratic in N_s
/// with one non-negative root; the carrier balance is then decreasing in n
/// and bisection on it converges.
pub fn steady_state(laser: &Laser, current: f64) -> SimState {
    let p = laser.params();
    let qv = laser.qv();
    if current <= 0.0 {
        return SimState::default();
    }
    let photons = |n: f64| {
        let r = p.gamma * p.beta * n / p.tau_mode;
        let g = p.gamma * p.a_gain * (n - p.n_transparency);
        let a = p.epsilon / p.tau_p;
        let b = g - 1.0 / p.tau_p + r * p.epsilon;
        if a == 0.0 {
            return r / (1.0 / p.tau_p - g).max(f64::MIN_POSITIVE);
        }
        // a·N² − b·N − r = 0, stable form of the positive root
        let disc = (b * b + 4.0 * a * r).sqrt();
        if b > 0.0 {
            (b + disc) / (2.0 * a)
        } else {
            2.0 * r / (disc - b)
        }
    };
    let residual = |n: f64| derivatives(n, photons(n), current, laser).0;
    let (mut lo, mut hi) = (0.0, (current * laser.tau_n() / qv).max(p.n_transparency));
    while residual(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let n = 0.5 * (lo + hi);
    SimState {
        t: 0.0,
        n,
        n_s: photons(n),
    }
}

impl SimTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn photon_density(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.n_s).collect()
    }

    pub fn carrier_density(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.n).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trace is never empty")
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.samples.partition_point(|s| s.t < t - 1e-6 * self.dt)
    }

    /// Writes the trace as `t_s,current_A,carrier_per_m3,photon_per_m3`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t_s,current_A,carrier_per_m3,photon_per_m3")?;
        for s in &self.samples {
            writeln!(out, "{:e},{:e},{:e},{:e}", s.t, s.current, s.n, s.n_s)?;
        }
        Ok(())
    }
}
