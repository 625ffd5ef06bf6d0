//! Injection-current waveforms: steps, pre-bias plus short perturbation
//! pulses, and first-order low-pass (driver filter) variants.
//!
//! Segments use the half-open convention `[t_start, t_end)`. The final
//! instant `t_end` of the profile belongs to the last segment.

use std::path::Path;

use serde::{Deserialize, Serialize};

/// Default perturbation width, s.
pub const DEFAULT_PULSE_WIDTH: f64 = 2e-12;
/// Default perturbation time, s. Late enough for the bias start-up
/// transient of the carrier density (τ_n = 2 ns) to have mostly settled.
pub const DEFAULT_PULSE_AT: f64 = 5e-9;
/// Default perturbation peak current, A.
///
/// A 2 ps pulse at this level injects 20 pC, enough to lift the carrier
/// density of the default device above threshold from any pre-bias down to
/// 0.6·I_th and produce a single gain-switched spike.
pub const DEFAULT_PULSE_PEAK: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Constant,
    LinearRamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub shape: Shape,
    pub level_start: f64,
    #[serde(default)]
    pub level_end: Option<f64>,
}

impl Segment {
    pub fn constant(t_start: f64, t_end: f64, level: f64) -> Self {
        Self {
            t_start,
            t_end,
            shape: Shape::Constant,
            level_start: level,
            level_end: None,
        }
    }

    pub fn ramp(t_start: f64, t_end: f64, from: f64, to: f64) -> Self {
        Self {
            t_start,
            t_end,
            shape: Shape::LinearRamp,
            level_start: from,
            level_end: Some(to),
        }
    }

    fn end_level(&self) -> f64 {
        match self.shape {
            Shape::Constant => self.level_start,
            Shape::LinearRamp => self.level_end.unwrap_or(self.level_start),
        }
    }

    /// Level of this segment's shape at `t`. Ramps extrapolate linearly
    /// outside their interval, which the solver relies on for stage
    /// evaluations at the closing edge of a step.
    pub fn level_at(&self, t: f64) -> f64 {
        match self.shape {
            Shape::Constant => self.level_start,
            Shape::LinearRamp => {
                let span = self.t_end - self.t_start;
                let frac = (t - self.t_start) / span;
                self.level_start + frac * (self.end_level() - self.level_start)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DriveError {
    #[error("profile has no segments")]
    Empty,
    #[error("time ordering violated: {0}")]
    Ordering(String),
    #[error("segments {0} and {1} are not contiguous")]
    Gap(usize, usize),
    #[error("negative current level {level} A in segment {index}")]
    NegativeLevel { index: usize, level: f64 },
    #[error("filter time constant must be > 0, got {0}")]
    InvalidFilter(f64),
    #[error("pulse ending at {pulse_end:e} s extends past profile end {t_end:e} s")]
    PulsePastEnd { pulse_end: f64, t_end: f64 },
    #[error("pulse width must be > 0, got {0}")]
    InvalidWidth(f64),
    #[error("time {t:e} s outside profile range [0, {t_end:e}]")]
    OutOfRange { t: f64, t_end: f64 },
    #[error("drive file: {0}")]
    Parse(String),
}

/// Piecewise injection-current profile I(t), optionally passed through a
/// first-order low-pass with time constant `filter_tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveProfile {
    segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filter_tau: Option<f64>,
}

impl DriveProfile {
    pub fn new(segments: Vec<Segment>, filter_tau: Option<f64>) -> Result<Self, DriveError> {
        if segments.is_empty() {
            return Err(DriveError::Empty);
        }
        if segments[0].t_start != 0.0 {
            return Err(DriveError::Ordering(format!(
                "first segment must start at 0, starts at {:e}",
                segments[0].t_start
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.t_end > s.t_start) || !s.t_start.is_finite() || !s.t_end.is_finite() {
                return Err(DriveError::Ordering(format!(
                    "segment {i} has t_start {:e} >= t_end {:e}",
                    s.t_start, s.t_end
                )));
            }
            for level in [s.level_start, s.end_level()] {
                if !(level >= 0.0) || !level.is_finite() {
                    return Err(DriveError::NegativeLevel { index: i, level });
                }
            }
        }
        let t_end = segments.last().map(|s| s.t_end).unwrap_or(0.0);
        let tol = 1e-12 * t_end;
        for (i, w) in segments.windows(2).enumerate() {
            if (w[0].t_end - w[1].t_start).abs() > tol {
                return Err(DriveError::Gap(i, i + 1));
            }
        }
        if let Some(tau) = filter_tau {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(DriveError::InvalidFilter(tau));
            }
        }
        Ok(Self {
            segments,
            filter_tau,
        })
    }

    pub fn constant(level: f64, t_end: f64) -> Result<Self, DriveError> {
        Self::new(vec![Segment::constant(0.0, t_end, level)], None)
    }

    /// `i_high` on `[t_on, t_off)`, `i_low` elsewhere on `[0, t_end]`.
    pub fn step(i_low: f64, i_high: f64, t_on: f64, t_off: f64, t_end: f64) -> Result<Self, DriveError> {
        if !(0.0 <= t_on && t_on < t_off && t_off <= t_end) {
            return Err(DriveError::Ordering(format!(
                "need 0 <= t_on < t_off <= t_end, got {t_on:e}, {t_off:e}, {t_end:e}"
            )));
        }
        let mut segs = Vec::with_capacity(3);
        if t_on > 0.0 {
            segs.push(Segment::constant(0.0, t_on, i_low));
        }
        segs.push(Segment::constant(t_on, t_off, i_high));
        if t_off < t_end {
            segs.push(Segment::constant(t_off, t_end, i_low));
        }
        Self::new(segs, None)
    }

    /// Pre-bias `i_bias` with a rectangular perturbation raising the current
    /// to `i_peak` on `[t_pulse, t_pulse + width)`.
    pub fn gain_switch(i_bias: f64, i_peak: f64, t_pulse: f64, width: f64, t_end: f64) -> Result<Self, DriveError> {
        if !(width > 0.0) {
            return Err(DriveError::InvalidWidth(width));
        }
        let pulse_end = t_pulse + width;
        if pulse_end > t_end {
            return Err(DriveError::PulsePastEnd { pulse_end, t_end });
        }
        Self::step(i_bias, i_peak, t_pulse, pulse_end, t_end)
    }

    /// Marks the profile for first-order low-pass evaluation:
    /// dI_f/dt = (I − I_f)/τ_rc with I_f(0) = I(0).
    pub fn apply_filter(mut self, tau_rc: f64) -> Result<Self, DriveError> {
        if !(tau_rc > 0.0) || !tau_rc.is_finite() {
            return Err(DriveError::InvalidFilter(tau_rc));
        }
        self.filter_tau = Some(tau_rc);
        Ok(self)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn filter_tau(&self) -> Option<f64> {
        self.filter_tau
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map(|s| s.t_end).unwrap_or(0.0)
    }

    fn segment_index(&self, t: f64) -> usize {
        // first segment whose end is strictly after t; the last one owns t_end
        let idx = self.segments.partition_point(|s| s.t_end <= t);
        idx.min(self.segments.len() - 1)
    }

    /// Unfiltered current at `t`.
    pub fn current_at(&self, t: f64) -> Result<f64, DriveError> {
        let t_end = self.t_end();
        if !(t >= 0.0 && t <= t_end) {
            return Err(DriveError::OutOfRange { t, t_end });
        }
        let seg = &self.segments[self.segment_index(t)];
        if t == t_end {
            return Ok(seg.end_level());
        }
        Ok(seg.level_at(t))
    }

    /// Effective (filtered when a filter is set) current on a uniform grid
    /// of spacing `dt` covering `[0, t_end]`, using the same per-step update
    /// the solver applies.
    pub fn sample(&self, dt: f64, t_end: f64) -> Vec<f64> {
        let steps = (t_end / dt).round() as usize;
        let mut sampler = DriveSampler::new(self);
        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..steps {
            let t = k as f64 * dt;
            let s = sampler.step(t, dt);
            out.push(s.start);
        }
        out.push(sampler.current());
        out
    }

    pub fn from_toml(text: &str) -> Result<Self, DriveError> {
        let profile: DriveProfile = toml::from_str(text).map_err(|e| DriveError::Parse(e.to_string()))?;
        Self::new(profile.segments, profile.filter_tau)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("drive profile serializes")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DriveError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| DriveError::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }
}

/// Effective current at the start, midpoint and end of one solver step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCurrent {
    pub start: f64,
    pub mid: f64,
    pub end: f64,
}

/// Walks a profile forward in time, one solver step at a time, carrying the
/// low-pass state when the profile is filtered.
///
/// Within a step the input is taken from the segment that contains the step
/// midpoint, so breakpoints lying on the step grid are resolved exactly.
/// The filter update is the closed-form response to a linear input over the
/// step, hence exact for piecewise-linear drives and unconditionally stable.
#[derive(Debug, Clone)]
pub struct DriveSampler<'a> {
    profile: &'a DriveProfile,
    index: usize,
    filtered: Option<f64>,
}

impl<'a> DriveSampler<'a> {
    pub fn new(profile: &'a DriveProfile) -> Self {
        let first = profile.segments[0].level_start;
        Self {
            profile,
            index: 0,
            filtered: profile.filter_tau.map(|_| first),
        }
    }

    /// Effective current at the sampler's current time.
    pub fn current(&self) -> f64 {
        match self.filtered {
            Some(v) => v,
            None => {
                let seg = &self.profile.segments[self.index];
                seg.end_level()
            }
        }
    }

    pub fn step(&mut self, t: f64, h: f64) -> StepCurrent {
        let mid_t = t + 0.5 * h;
        let segs = &self.profile.segments;
        while self.index + 1 < segs.len() && segs[self.index].t_end <= mid_t {
            self.index += 1;
        }
        let seg = &segs[self.index];
        let u0 = seg.level_at(t);
        let um = seg.level_at(mid_t);
        let u1 = seg.level_at(t + h);
        match (self.filtered, self.profile.filter_tau) {
            (Some(y0), Some(tau)) => {
                let slope = (u1 - u0) / h;
                let respond = |s: f64| {
                    let u = u0 + slope * s;
                    u - slope * tau + (y0 - u0 + slope * tau) * (-s / tau).exp()
                };
                let ym = respond(0.5 * h);
                let y1 = respond(h);
                self.filtered = Some(y1);
                StepCurrent {
                    start: y0,
                    mid: ym,
                    end: y1,
                }
            }
            _ => StepCurrent {
                start: u0,
                mid: um,
                end: u1,
            },
        }
    }
}

/// Trapezoidal ∫I dt of a uniformly sampled current.
pub fn charge(samples: &[f64], dt: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let inner: f64 = samples[1..samples.len() - 1].iter().sum();
    dt * (inner + 0.5 * (samples[0] + samples[samples.len() - 1]))
}
