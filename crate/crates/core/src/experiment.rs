//! Gain-switching runs: one pulse on a pre-bias, bias sweeps and pairwise
//! pulse comparison.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::drive::{DriveError, DriveProfile, DEFAULT_PULSE_AT, DEFAULT_PULSE_PEAK, DEFAULT_PULSE_WIDTH};
use crate::params::Laser;
use crate::pulse::{self, PulseError, PulseFeatures, Waveform, DEFAULT_PROMINENCE};
use crate::solver::{self, SimTrace, SolveError, SolverConfig, DEFAULT_DT};
use crate::stats::{self, Comparison, Method, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl ExperimentError {
    /// True for failures of the numerics or of the produced waveform, as
    /// opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::Drive(_) => false,
            Self::Solve(e) => matches!(e, SolveError::NumericalBlowup { .. }),
            Self::Pulse(e) | Self::Stats(StatsError::Pulse(e)) => !matches!(e, PulseError::Parse { .. } | PulseError::Io(_)),
            Self::Stats(_) => true,
        }
    }
}

/// A single gain-switching pulse on a constant pre-bias. The laser starts
/// in its steady state at the bias current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scenario {
    pub bias: f64,
    pub peak: f64,
    pub width: f64,
    pub pulse_at: f64,
    /// Simulated time after the pulse edge.
    pub span: f64,
    pub filter_tau: Option<f64>,
    pub dt: f64,
    pub stride: usize,
    pub prominence: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            bias: 13e-3,
            peak: DEFAULT_PULSE_PEAK,
            width: DEFAULT_PULSE_WIDTH,
            pulse_at: DEFAULT_PULSE_AT,
            span: 2e-9,
            filter_tau: None,
            dt: DEFAULT_DT,
            stride: 20,
            prominence: DEFAULT_PROMINENCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PulseRun {
    pub trace: SimTrace,
    /// Photon density over the analysis window around the pulse.
    pub waveform: Waveform,
    pub features: PulseFeatures,
}

impl Scenario {
    pub fn t_end(&self) -> f64 {
        self.pulse_at + self.span
    }

    pub fn drive(&self) -> Result<DriveProfile, DriveError> {
        let d = DriveProfile::gain_switch(self.bias, self.peak, self.pulse_at, self.width, self.t_end())?;
        match self.filter_tau {
            Some(tau) => d.apply_filter(tau),
            None => Ok(d),
        }
    }

    pub fn solver_config(&self, laser: &Laser) -> SolverConfig {
        SolverConfig::new(self.dt, self.t_end())
            .with_stride(self.stride)
            .with_initial(solver::steady_state(laser, self.bias))
    }

    /// Analysis window: a lead-in of a tenth of the span, then the span.
    pub fn window(&self) -> (f64, f64) {
        ((self.pulse_at - 0.1 * self.span).max(0.0), self.t_end())
    }

    pub fn run(&self, laser: &Laser) -> Result<PulseRun, ExperimentError> {
        let drive = self.drive()?;
        let trace = solver::simulate(laser, &drive, &self.solver_config(laser))?;
        analyze_trace(trace, self.window(), Some(self.pulse_at), self.prominence)
    }
}

pub fn analyze_trace(
    trace: SimTrace,
    window: (f64, f64),
    drive_edge: Option<f64>,
    prominence: f64,
) -> Result<PulseRun, ExperimentError> {
    let waveform = Waveform::from_trace(&trace, window.0, window.1)?;
    let features = pulse::pulse_features(&waveform, drive_edge, prominence)?;
    Ok(PulseRun {
        trace,
        waveform,
        features,
    })
}

/// Features of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub primary_amplitude: f64,
    pub secondary_amplitude: f64,
    pub has_secondary: bool,
    pub peak_difference: f64,
    pub turn_on_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub bias: f64,
    pub outcome: Result<SweepPoint, String>,
}

fn sweep_point(laser: &Laser, scenario: &Scenario) -> Result<SweepPoint, String> {
    let run = scenario.run(laser).map_err(|e| e.to_string())?;
    let f = &run.features;
    Ok(SweepPoint {
        primary_amplitude: f.primary_peak.amplitude,
        secondary_amplitude: f.secondary_amplitude(),
        has_secondary: f.secondary_peak.is_some(),
        peak_difference: f.peak_difference,
        turn_on_delay: f.turn_on_delay.unwrap_or(f64::NAN),
    })
}

/// Runs `template` once per bias value on up to `workers` threads. Rows are
/// returned sorted by bias; a failing point becomes an error row.
pub fn sweep(laser: &Laser, template: &Scenario, biases: &[f64], workers: usize) -> Vec<SweepRow> {
    let next = AtomicUsize::new(0);
    let rows = Mutex::new(Vec::with_capacity(biases.len()));
    let workers = workers.clamp(1, biases.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&bias) = biases.get(k) else { break };
                let scenario = Scenario { bias, ..*template };
                let row = SweepRow {
                    bias,
                    outcome: sweep_point(laser, &scenario),
                };
                rows.lock().expect("sweep collector poisoned").push(row);
            });
        }
    });
    let mut rows = rows.into_inner().expect("sweep collector poisoned");
    rows.sort_by(|a, b| a.bias.total_cmp(&b.bias));
    rows
}

/// KS comparison of the photon waveforms of two runs.
pub fn compare_runs(a: &PulseRun, b: &PulseRun, n_points: usize, method: Method) -> Result<Comparison, ExperimentError> {
    Ok(stats::compare_waveforms(&a.waveform, &b.waveform, n_points, method)?)
}
