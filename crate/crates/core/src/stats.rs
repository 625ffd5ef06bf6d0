//! Empirical distribution functions and the two-sample Kolmogorov-Smirnov
//! test, with an exact lattice-path p-value and the Kolmogorov limit.

use serde::{Deserialize, Serialize};

use crate::pulse::{self, PulseError, Waveform};

/// Largest n·m for which the exact null distribution is evaluated.
pub const EXACT_LIMIT: u64 = 1_000_000;
/// Tie fraction above which a result carries a warning.
pub const TIE_WARNING_FRACTION: f64 = 0.10;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite sample value")]
    NonFinite,
    #[error("statistic {0} outside [0, 1]")]
    StatisticOutOfRange(f64),
    #[error("sample sizes must be at least 1 (n = {n}, m = {m})")]
    ZeroSize { n: usize, m: usize },
    #[error("exact method limited to n*m <= {EXACT_LIMIT} (got {0})")]
    ExactTooLarge(u64),
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples <= x.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// Distinct sample values with the CDF value just after each step.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            let f = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = f,
                _ => out.push((x, f)),
            }
        }
        out
    }
}

fn check(samples: &[f64]) -> Result<(), StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Largest |i·m − j·n| over the pooled sample points, where i and j count
/// the x and y samples at or below the point.
fn max_count_gap(x: &[f64], y: &[f64]) -> u64 {
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as i64, ys.len() as i64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0i64;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        best = best.max((i as i64 * m - j as i64 * n).abs());
    }
    best as u64
}

/// Two-sample statistic D = sup |F_x − F_y|.
pub fn ks_statistic(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check(x)?;
    check(y)?;
    let gap = max_count_gap(x, y);
    Ok(gap as f64 / (x.len() as f64 * y.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Auto,
    Exact,
    Asymptotic,
}

/// P(D_{n,m} >= d) under the null hypothesis of a common continuous
/// distribution.
pub fn ks_pvalue(d: f64, n: usize, m: usize, method: Method) -> Result<(f64, Method), StatsError> {
    if !(0.0..=1.0).contains(&d) {
        return Err(StatsError::StatisticOutOfRange(d));
    }
    if n == 0 || m == 0 {
        return Err(StatsError::ZeroSize { n, m });
    }
    let size = n as u64 * m as u64;
    let resolved = match method {
        Method::Auto if size <= EXACT_LIMIT => Method::Exact,
        Method::Auto => Method::Asymptotic,
        Method::Exact if size > EXACT_LIMIT => return Err(StatsError::ExactTooLarge(size)),
        other => other,
    };
    let p = match resolved {
        Method::Exact => exact_pvalue(d, n, m),
        _ => asymptotic_pvalue(d, n, m),
    };
    Ok((p, resolved))
}

/// Probability that a uniformly random monotone lattice path from (0,0) to
/// (n,m) touches a cell with |i/n − j/m| >= d. The walk is propagated as a
/// probability flow, so the answer is the mass that leaves the allowed band
/// and needs no subtraction from 1.
fn exact_pvalue(d: f64, n: usize, m: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let (ni, mi) = (n as i64, m as i64);
    // integer form of |i/n − j/m| >= d, tolerant of d given as a rounded ratio
    let bound = (d * (n as f64) * (m as f64) - 1e-7).ceil() as i64;
    let forbidden = |i: usize, j: usize| (i as i64 * mi - j as i64 * ni).abs() >= bound;

    let mut row = vec![0.0f64; m + 1];
    let mut next = vec![0.0f64; m + 1];
    row[0] = 1.0;
    let mut exit = 0.0f64;
    for i in 0..=n {
        next.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..=m {
            let mass = row[j];
            if mass == 0.0 {
                continue;
            }
            let (rx, ry) = ((n - i) as f64, (m - j) as f64);
            let total = rx + ry;
            if total == 0.0 {
                continue;
            }
            if rx > 0.0 {
                let w = mass * rx / total;
                if forbidden(i + 1, j) {
                    exit += w;
                } else {
                    next[j] += w;
                }
            }
            if ry > 0.0 {
                let w = mass * ry / total;
                if forbidden(i, j + 1) {
                    exit += w;
                } else {
                    row[j + 1] += w;
                }
            }
        }
        std::mem::swap(&mut row, &mut next);
    }
    exit.clamp(0.0, 1.0)
}

/// Kolmogorov limiting tail Q(λ) with λ = sqrt(nm/(n+m))·d.
fn asymptotic_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let lambda = (nf * mf / (nf + mf)).sqrt() * d;
    kolmogorov_q(lambda)
}

pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        // Jacobi theta form of the CDF; the alternating series converges
        // too slowly here
        let mut cdf = 0.0;
        for k in 1..=20 {
            let odd = (2 * k - 1) as f64;
            cdf += (-odd * odd * std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
    pub method: Method,
    pub tie_warning: bool,
}

impl KsResult {
    /// Same-distribution hypothesis retained at level `alpha`.
    pub fn indistinguishable(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Fraction of pooled samples that repeat an earlier value.
pub fn tie_fraction(x: &[f64], y: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    if pooled.is_empty() {
        return 0.0;
    }
    pooled.sort_by(f64::total_cmp);
    let repeats = pooled.windows(2).filter(|w| w[0] == w[1]).count();
    repeats as f64 / pooled.len() as f64
}

pub fn ks_test(x: &[f64], y: &[f64], method: Method) -> Result<KsResult, StatsError> {
    let d = ks_statistic(x, y)?;
    let (p, method) = ks_pvalue(d, x.len(), y.len(), method)?;
    Ok(KsResult {
        d_statistic: d,
        p_value: p,
        n: x.len(),
        m: y.len(),
        method,
        tie_warning: tie_fraction(x, y) > TIE_WARNING_FRACTION,
    })
}

/// KS outcome for two waveforms plus the ECDFs of their amplitude samples.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub result: KsResult,
    pub ecdf_a: Ecdf,
    pub ecdf_b: Ecdf,
    /// Sample shift applied to `b` during alignment.
    pub shift: isize,
}

/// Normalize, align primary peaks, resample to `n_points` and test the two
/// sets of amplitude values.
pub fn compare_waveforms(
    a: &Waveform,
    b: &Waveform,
    n_points: usize,
    method: Method,
) -> Result<Comparison, StatsError> {
    let na = pulse::normalize_amplitude(a)?;
    let nb = pulse::normalize_amplitude(b)?;
    let aligned = pulse::align_primary_peaks(&na, &nb)?;
    let ra = pulse::resample_uniform(&aligned.a, n_points)?;
    let rb = pulse::resample_uniform(&aligned.b, n_points)?;
    let result = ks_test(ra.values(), rb.values(), method)?;
    Ok(Comparison {
        result,
        ecdf_a: Ecdf::new(ra.values())?,
        ecdf_b: Ecdf::new(rb.values())?,
        shift: aligned.shift,
    })
}
