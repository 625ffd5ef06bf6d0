//! Pulse feature extraction and waveform preparation: peak detection by
//! topographic prominence, primary/secondary peak features, amplitude
//! normalization, primary-peak alignment and uniform resampling.

use std::path::Path;

use serde::Serialize;

use crate::solver::SimTrace;

/// Smallest waveform the analysis accepts.
pub const MIN_SAMPLES: usize = 8;
/// Default prominence floor as a fraction of the global maximum.
pub const DEFAULT_PROMINENCE: f64 = 0.02;
/// Fraction of leading samples whose median defines the baseline.
pub const BASELINE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PulseError {
    #[error("waveform needs at least {MIN_SAMPLES} samples, got {0}")]
    TooShort(usize),
    #[error("time and value columns differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("time axis not strictly increasing at sample {0}")]
    NotIncreasing(usize),
    #[error("time axis not uniformly spaced at sample {0}")]
    NonUniform(usize),
    #[error("non-finite value at sample {0}")]
    NonFinite(usize),
    #[error("degenerate (constant) waveform")]
    DegenerateWaveform,
    #[error("no interior peak found")]
    NoPeak,
    #[error("prominence fraction must lie in (0, 1), got {0}")]
    InvalidProminence(f64),
    #[error("aligned waveforms share fewer than {MIN_SAMPLES} samples")]
    NoOverlap,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Io(String),
}

/// Uniformly sampled signal with a strictly increasing time axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waveform {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl Waveform {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self, PulseError> {
        if t.len() != v.len() {
            return Err(PulseError::LengthMismatch(t.len(), v.len()));
        }
        if t.len() < MIN_SAMPLES {
            return Err(PulseError::TooShort(t.len()));
        }
        for (i, (ti, vi)) in t.iter().zip(&v).enumerate() {
            if !ti.is_finite() || !vi.is_finite() {
                return Err(PulseError::NonFinite(i));
            }
        }
        for i in 1..t.len() {
            if !(t[i] > t[i - 1]) {
                return Err(PulseError::NotIncreasing(i));
            }
        }
        let mean = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        for i in 1..t.len() {
            if ((t[i] - t[i - 1]) - mean).abs() > 1e-3 * mean {
                return Err(PulseError::NonUniform(i));
            }
        }
        Ok(Self { t, v })
    }

    /// Builds a waveform from evenly spaced values starting at `t0`.
    pub fn uniform(t0: f64, dt: f64, v: Vec<f64>) -> Result<Self, PulseError> {
        let t = (0..v.len()).map(|k| t0 + k as f64 * dt).collect();
        Self::new(t, v)
    }

    /// Photon density of a trace restricted to `[t_from, t_to]`.
    pub fn from_trace(trace: &SimTrace, t_from: f64, t_to: f64) -> Result<Self, PulseError> {
        let (t, v) = trace
            .samples
            .iter()
            .filter(|s| s.t >= t_from && s.t <= t_to)
            .map(|s| (s.t, s.n_s))
            .unzip();
        Self::new(t, v)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn dt(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    fn max(&self) -> f64 {
        self.v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn min(&self) -> f64 {
        self.v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.v.iter().enumerate() {
            if x > self.v[best] {
                best = i;
            }
        }
        best
    }

    /// Parses `time,value` text: comma or whitespace delimited, optional
    /// header line, `#` comments. Simulator trace files are recognised by
    /// their `photon_per_m3` header column.
    pub fn from_csv_str(text: &str) -> Result<Self, PulseError> {
        let mut t = Vec::new();
        let mut v = Vec::new();
        let mut value_col = 1usize;
        let mut seen_data_or_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(nums) => {
                    if nums.len() <= value_col {
                        return Err(PulseError::Parse {
                            line: line_no,
                            msg: format!("expected at least {} columns, got {}", value_col + 1, nums.len()),
                        });
                    }
                    t.push(nums[0]);
                    v.push(nums[value_col]);
                }
                Err(_) if !seen_data_or_header => {
                    if let Some(pos) = fields.iter().position(|f| *f == "photon_per_m3") {
                        value_col = pos;
                    }
                }
                Err(_) => {
                    return Err(PulseError::Parse {
                        line: line_no,
                        msg: format!("cannot parse `{line}` as numbers"),
                    })
                }
            }
            seen_data_or_header = true;
        }
        Self::new(t, v)
    }

    pub fn from_csv_file(path: impl AsRef<Path>) -> Result<Self, PulseError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PulseError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_str(&text)
    }
}

/// A detected local maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub index: usize,
    pub t: f64,
    pub amplitude: f64,
    pub prominence: f64,
}

/// Interior local maxima (plateaus resolved to their middle sample) with
/// their topographic prominence.
fn local_maxima(v: &[f64]) -> Vec<(usize, f64)> {
    let n = v.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i - 1] < v[i] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let peak = (i + j) / 2;
                out.push((peak, prominence(v, peak)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn prominence(v: &[f64], peak: usize) -> f64 {
    let h = v[peak];
    let mut left_min = h;
    for k in (0..peak).rev() {
        if v[k] > h {
            break;
        }
        left_min = left_min.min(v[k]);
    }
    let mut right_min = h;
    for &x in &v[peak + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}

/// Local maxima whose prominence is at least `min_prominence_frac` times the
/// global maximum, ordered by time.
pub fn detect_peaks(w: &Waveform, min_prominence_frac: f64) -> Result<Vec<Peak>, PulseError> {
    if !(min_prominence_frac > 0.0 && min_prominence_frac < 1.0) {
        return Err(PulseError::InvalidProminence(min_prominence_frac));
    }
    let (max, min) = (w.max(), w.min());
    if max == min {
        return Err(PulseError::DegenerateWaveform);
    }
    // global max as the reference scale; fall back to the range for
    // signals that never rise above zero
    let scale = if max > 0.0 { max } else { max - min };
    let floor = min_prominence_frac * scale;
    Ok(local_maxima(&w.v)
        .into_iter()
        .filter(|&(_, p)| p >= floor)
        .map(|(i, p)| Peak {
            index: i,
            t: w.t[i],
            amplitude: w.v[i],
            prominence: p,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakPoint {
    pub t: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseFeatures {
    pub primary_peak: PeakPoint,
    pub secondary_peak: Option<PeakPoint>,
    /// Primary minus secondary amplitude; the primary amplitude when there
    /// is no secondary peak.
    pub peak_difference: f64,
    /// Primary peak time minus the drive edge, when an edge is supplied.
    pub turn_on_delay: Option<f64>,
    /// All peaks above the prominence floor, in time order.
    pub peaks: Vec<Peak>,
}

impl PulseFeatures {
    pub fn secondary_amplitude(&self) -> f64 {
        self.secondary_peak.map_or(0.0, |p| p.amplitude)
    }
}

/// Primary peak = largest detected peak; secondary = largest detected peak
/// after the primary. Earlier precursors are ignored.
pub fn pulse_features(
    w: &Waveform,
    drive_edge_t: Option<f64>,
    min_prominence_frac: f64,
) -> Result<PulseFeatures, PulseError> {
    let peaks = detect_peaks(w, min_prominence_frac)?;
    let primary = *peaks
        .iter()
        .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
        .ok_or(PulseError::NoPeak)?;
    let secondary = peaks
        .iter()
        .filter(|p| p.index > primary.index)
        .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
        .copied();
    let primary_peak = PeakPoint {
        t: primary.t,
        amplitude: primary.amplitude,
    };
    let secondary_peak = secondary.map(|p| PeakPoint {
        t: p.t,
        amplitude: p.amplitude,
    });
    let peak_difference = primary.amplitude - secondary_peak.map_or(0.0, |s| s.amplitude);
    Ok(PulseFeatures {
        primary_peak,
        secondary_peak,
        peak_difference,
        turn_on_delay: drive_edge_t.map(|edge| primary.t - edge),
        peaks,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Quiescent level: median of the leading 5% of samples.
pub fn baseline(w: &Waveform) -> f64 {
    let k = ((w.len() as f64 * BASELINE_FRACTION).ceil() as usize).max(1);
    median(w.v[..k].to_vec())
}

/// Maps the baseline to 0 and the global maximum to 1.
pub fn normalize_amplitude(w: &Waveform) -> Result<Waveform, PulseError> {
    let base = baseline(w);
    let max = w.max();
    if !(max > base) {
        return Err(PulseError::DegenerateWaveform);
    }
    let span = max - base;
    let v = w
        .v
        .iter()
        .map(|&x| if x == max { 1.0 } else { (x - base) / span })
        .collect();
    Ok(Waveform { t: w.t.clone(), v })
}

/// Linear interpolation onto `n` uniformly spaced points spanning the
/// waveform's time window.
pub fn resample_uniform(w: &Waveform, n: usize) -> Result<Waveform, PulseError> {
    if n < MIN_SAMPLES {
        return Err(PulseError::TooShort(n));
    }
    let (t0, t1) = (w.t[0], w.t[w.len() - 1]);
    let step = (t1 - t0) / (n - 1) as f64;
    let mut t = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let tk = if k == n - 1 { t1 } else { t0 + k as f64 * step };
        while j + 2 < w.len() && w.t[j + 1] <= tk {
            j += 1;
        }
        let (ta, tb) = (w.t[j], w.t[j + 1]);
        let frac = ((tk - ta) / (tb - ta)).clamp(0.0, 1.0);
        t.push(tk);
        v.push(w.v[j] + frac * (w.v[j + 1] - w.v[j]));
    }
    Ok(Waveform { t, v })
}

/// Two waveforms cropped to a common window with their primary peaks on
/// the same sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub a: Waveform,
    pub b: Waveform,
    /// Samples by which `b` was moved earlier to line up with `a`.
    pub shift: isize,
}

/// Shifts `b` (at sample resolution) so both primary peaks coincide and
/// crops both to their overlap. `b` is first resampled to `a`'s spacing
/// when the two differ.
pub fn align_primary_peaks(a: &Waveform, b: &Waveform) -> Result<Alignment, PulseError> {
    if a.max() == a.min() || b.max() == b.min() {
        return Err(PulseError::DegenerateWaveform);
    }
    let dt = a.dt();
    let b = if ((b.dt() - dt) / dt).abs() > 1e-6 {
        let span = b.t[b.len() - 1] - b.t[0];
        let n = (span / dt).floor() as usize + 1;
        let r = resample_uniform(b, n.max(MIN_SAMPLES))?;
        Waveform::uniform(b.t[0], dt, r.v)?
    } else {
        b.clone()
    };
    let ia = a.argmax() as isize;
    let ib = b.argmax() as isize;
    let shift = ib - ia;
    let lo = 0isize.max(-shift);
    let hi = (a.len() as isize).min(b.len() as isize - shift);
    if hi - lo < MIN_SAMPLES as isize {
        return Err(PulseError::NoOverlap);
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let t: Vec<f64> = a.t[lo..hi].to_vec();
    let va = a.v[lo..hi].to_vec();
    let vb = b.v[(lo as isize + shift) as usize..(hi as isize + shift) as usize].to_vec();
    Ok(Alignment {
        a: Waveform { t: t.clone(), v: va },
        b: Waveform { t, v: vb },
        shift,
    })
}
