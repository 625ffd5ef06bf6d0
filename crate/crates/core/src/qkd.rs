//! Photon-number statistics of weak coherent pulses and decoy-state
//! gain, error-rate and key-rate arithmetic.

use std::path::Path;

use serde::{Deserialize, Serialize};

/// Largest admissible Poisson tail beyond the cutoff.
pub const TAIL_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_CUTOFF: u32 = 40;
/// Error probability of a dark count in the standard model.
pub const DARK_COUNT_ERROR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QkdError {
    #[error("invalid link: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("photon cutoff {cutoff} leaves Poisson tail {tail:e} at mu = {mu}")]
    CutoffTooSmall { cutoff: u32, mu: f64, tail: f64 },
    #[error("zero yield for the {0}-photon component")]
    ZeroYield(u32),
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("{0}")]
    Parse(String),
}

/// How the per-photon-number error rate is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorModel {
    /// (e_dark + e_det·η) / Y_j, the same numerator for every j.
    #[default]
    AsPrinted,
    /// (e_0·Y_0 + e_det·η_j) / Y_j with e_0 = 1/2 and η_j = 1 − (1−η)^j.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoyLink {
    pub mu_signal: f64,
    pub mu_decoy: f64,
    pub y0: f64,
    pub eta: f64,
    pub e_detector: f64,
    pub e_darkcount: f64,
    pub q_ratio: f64,
    pub f_ec: f64,
    pub photon_cutoff: u32,
    pub error_model: ErrorModel,
}

impl Default for DecoyLink {
    fn default() -> Self {
        Self {
            mu_signal: 0.5,
            mu_decoy: 0.1,
            y0: 1e-5,
            eta: 0.1,
            e_detector: 0.01,
            e_darkcount: 5e-6,
            q_ratio: 0.5,
            f_ec: 1.16,
            photon_cutoff: DEFAULT_CUTOFF,
            error_model: ErrorModel::AsPrinted,
        }
    }
}

impl DecoyLink {
    pub fn validate(&self) -> Result<(), QkdError> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                bad.push(msg);
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        need(self.mu_signal > 0.0 && self.mu_signal.is_finite(), format!("mu_signal = {} must be > 0", self.mu_signal));
        need(self.mu_decoy >= 0.0 && self.mu_decoy.is_finite(), format!("mu_decoy = {} must be >= 0", self.mu_decoy));
        need(self.mu_decoy != self.mu_signal, "mu_decoy must differ from mu_signal".into());
        need(unit(self.y0), format!("y0 = {} outside [0, 1]", self.y0));
        need(unit(self.eta), format!("eta = {} outside [0, 1]", self.eta));
        need((0.0..=0.5).contains(&self.e_detector), format!("e_detector = {} outside [0, 0.5]", self.e_detector));
        need(unit(self.e_darkcount), format!("e_darkcount = {} outside [0, 1]", self.e_darkcount));
        need(self.q_ratio > 0.0 && self.q_ratio <= 1.0, format!("q_ratio = {} outside (0, 1]", self.q_ratio));
        need(self.f_ec >= 1.0 && self.f_ec.is_finite(), format!("f_ec = {} must be >= 1", self.f_ec));
        need(self.photon_cutoff >= 10, format!("photon_cutoff = {} must be >= 10", self.photon_cutoff));
        if bad.is_empty() {
            Ok(())
        } else {
            Err(QkdError::Invalid(bad))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, QkdError> {
        toml::from_str(text).map_err(|e| QkdError::Parse(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, QkdError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| QkdError::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Poisson probability of `n` photons at mean `mu`.
pub fn photon_prob(mu: f64, n: u32) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mu.ln() - mu - ln_factorial(n)).exp()
}

/// Probability of two or more photons; `exact = false` gives the leading
/// term μ²/2.
pub fn multi_photon_prob(mu: f64, exact: bool) -> f64 {
    if !exact {
        return mu * mu / 2.0;
    }
    if mu < 0.1 {
        // direct tail sum avoids cancellation in 1 − e^{−μ}(1+μ)
        (2..30).map(|k| photon_prob(mu, k)).sum()
    } else {
        1.0 - (-mu).exp() * (1.0 + mu)
    }
}

/// Probability that at least one of `j` photons is detected.
fn eta_j(eta: f64, j: u32) -> f64 {
    if j == 0 {
        0.0
    } else if eta >= 1.0 {
        1.0
    } else {
        -(j as f64 * (-eta).ln_1p()).exp_m1()
    }
}

/// Detection probability of a j-photon pulse.
pub fn yield_j(y0: f64, eta: f64, j: u32) -> f64 {
    y0 + (1.0 - y0) * eta_j(eta, j)
}

/// Upper bound on Σ_{k > cutoff} P_k(μ).
pub fn poisson_tail_bound(mu: f64, cutoff: u32) -> f64 {
    let ratio = mu / (cutoff as f64 + 2.0);
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    photon_prob(mu, cutoff + 1) / (1.0 - ratio)
}

fn check_cutoff(mu: f64, cutoff: u32) -> Result<(), QkdError> {
    let tail = poisson_tail_bound(mu, cutoff);
    if tail > TAIL_TOLERANCE {
        return Err(QkdError::CutoffTooSmall { cutoff, mu, tail });
    }
    Ok(())
}

/// Σ_j P_j(μ)·Y_j truncated at `cutoff`.
pub fn overall_gain(mu: f64, y0: f64, eta: f64, cutoff: u32) -> Result<f64, QkdError> {
    check_cutoff(mu, cutoff)?;
    Ok((0..=cutoff).map(|j| photon_prob(mu, j) * yield_j(y0, eta, j)).sum())
}

/// Closed form of the overall gain, Y₀ + (1−Y₀)(1 − e^{−ημ}).
pub fn overall_gain_closed(mu: f64, y0: f64, eta: f64) -> f64 {
    y0 + (1.0 - y0) * -(-eta * mu).exp_m1()
}

/// Erroneous-detection probability e_j·Y_j of the j-photon component.
fn error_weight(link: &DecoyLink, j: u32) -> f64 {
    match link.error_model {
        ErrorModel::AsPrinted => link.e_darkcount + link.e_detector * link.eta,
        ErrorModel::Standard => DARK_COUNT_ERROR * link.y0 + link.e_detector * eta_j(link.eta, j),
    }
}

/// Error rate of the j-photon component.
pub fn error_j(link: &DecoyLink, j: u32) -> Result<f64, QkdError> {
    let y = yield_j(link.y0, link.eta, j);
    if y <= 0.0 {
        return Err(QkdError::ZeroYield(j));
    }
    Ok(error_weight(link, j) / y)
}

/// Returns (E·Q, E) at mean photon number `mu`.
pub fn overall_qber(link: &DecoyLink, mu: f64) -> Result<(f64, f64), QkdError> {
    let q = overall_gain(mu, link.y0, link.eta, link.photon_cutoff)?;
    if q <= 0.0 {
        return Err(QkdError::ZeroYield(0));
    }
    let eq: f64 = (0..=link.photon_cutoff)
        .map(|j| error_weight(link, j) * photon_prob(mu, j))
        .sum();
    Ok((eq, eq / q))
}

pub fn binary_entropy(p: f64) -> Result<f64, QkdError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QkdError::Domain(p));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRateReport {
    pub mu_signal: f64,
    pub error_model: ErrorModel,
    pub q_mu: f64,
    pub e_mu: f64,
    pub eq_mu: f64,
    pub y1: f64,
    pub q1: f64,
    pub e1: f64,
    pub h2_e_mu: f64,
    pub h2_e1: f64,
    /// Secure key bits per pulse; negative values are reported unchanged.
    pub key_rate: f64,
    pub insecure: bool,
    pub warnings: Vec<String>,
}

/// S = q·(−Q_μ·f·H₂(E_μ) + Q₁·[1 − H₂(e₁)]) at the signal intensity.
pub fn key_rate(link: &DecoyLink) -> Result<KeyRateReport, QkdError> {
    link.validate()?;
    let mu = link.mu_signal;
    let q_mu = overall_gain(mu, link.y0, link.eta, link.photon_cutoff)?;
    let (eq_mu, e_mu) = overall_qber(link, mu)?;
    let y1 = yield_j(link.y0, link.eta, 1);
    let q1 = y1 * photon_prob(mu, 1);
    let e1 = error_j(link, 1)?;

    let mut warnings = Vec::new();
    for j in 0..=link.photon_cutoff {
        let Ok(e) = error_j(link, j) else { continue };
        if e > 1.0 {
            warnings.push(format!("error rate e_{j} = {e} exceeds 1; error model invalid for these parameters"));
            break;
        }
    }
    if e_mu >= 0.5 {
        warnings.push(format!("overall QBER {e_mu} is not below 0.5"));
    }
    let h2_e_mu = binary_entropy(e_mu.min(1.0))?;
    let h2_e1 = binary_entropy(e1.min(1.0))?;
    let s = link.q_ratio * (-q_mu * link.f_ec * h2_e_mu + q1 * (1.0 - h2_e1));
    Ok(KeyRateReport {
        mu_signal: mu,
        error_model: link.error_model,
        q_mu,
        e_mu,
        eq_mu,
        y1,
        q1,
        e1,
        h2_e_mu,
        h2_e1,
        key_rate: s,
        insecure: s <= 0.0,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn poisson_values() {
        assert_eq!(photon_prob(0.0, 0), 1.0);
        assert_eq!(photon_prob(0.0, 3), 0.0);
        assert!((photon_prob(1.0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        for mu in [0.01, 0.1, 0.5, 1.0] {
            let total: f64 = (0..=40).map(|n| photon_prob(mu, n)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(photon_prob(0.5, 170) > 0.0 || photon_prob(0.5, 170) == 0.0);
        assert!(photon_prob(0.5, 300).is_finite());
    }

    #[test]
    fn multi_photon() {
        assert_eq!(multi_photon_prob(0.0, true), 0.0);
        assert_eq!(multi_photon_prob(0.0, false), 0.0);
        assert!((multi_photon_prob(0.2, true) - 0.017523096306421770).abs() < 1e-15);
        assert!((multi_photon_prob(0.2, false) - 0.02).abs() < 1e-15);
        let ratio = multi_photon_prob(1e-4, false) / multi_photon_prob(1e-4, true);
        assert!((ratio - 1.0).abs() < 1e-4);
        // branch seam
        let below = multi_photon_prob(0.1 - 1e-12, true);
        let above = multi_photon_prob(0.1, true);
        assert!(close(below, above, 1e-9));
    }

    #[test]
    fn yields() {
        assert_eq!(yield_j(0.3, 0.7, 0), 0.3);
        assert_eq!(yield_j(0.0, 0.0, 5), 0.0);
        assert_eq!(yield_j(0.0, 1.0, 4), 1.0);
        assert!((yield_j(0.1, 0.2, 2) - 0.424).abs() < 1e-15);
    }

    #[test]
    fn gain_series_and_closed_form() {
        assert_eq!(overall_gain(0.0, 1e-5, 0.1, 40).unwrap(), 1e-5);
        assert!((overall_gain(0.7, 1e-5, 0.0, 40).unwrap() - 1e-5).abs() < 1e-18);
        let g = overall_gain(0.5, 1e-5, 0.1, 40).unwrap();
        assert!((g - (1.0 - (1.0 - 1e-5) * (-0.05f64).exp())).abs() < 1e-12);
        assert!((g - 0.048780087793530998).abs() < 1e-15);
        assert!(matches!(
            overall_gain(5.0, 1e-5, 0.1, 10),
            Err(QkdError::CutoffTooSmall { .. })
        ));
    }

    #[test]
    fn error_rates() {
        let dark_only = DecoyLink { eta: 0.0, e_darkcount: 0.5e-5, ..Default::default() };
        assert!((error_j(&dark_only, 0).unwrap() - 0.5).abs() < 1e-15);
        let clean = DecoyLink { e_darkcount: 0.0, e_detector: 0.0, ..Default::default() };
        assert_eq!(error_j(&clean, 3).unwrap(), 0.0);
        assert_eq!(overall_qber(&clean, 0.5).unwrap().1, 0.0);
        let none = DecoyLink { y0: 0.0, ..Default::default() };
        assert_eq!(error_j(&none, 0), Err(QkdError::ZeroYield(0)));
        // large numerator against a small yield exceeds 1 and is reported
        let odd = DecoyLink { e_darkcount: 1e-3, ..Default::default() };
        let r = key_rate(&odd).unwrap();
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn qber_without_transmission() {
        let link = DecoyLink { eta: 0.0, ..Default::default() };
        for mu in [0.1, 0.5, 1.0] {
            let (_, e) = overall_qber(&link, mu).unwrap();
            assert!(close(e, link.e_darkcount / link.y0, 1e-12));
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.49991595816452800).abs() < 1e-14);
        assert!(binary_entropy(1.2).is_err());
        for k in 1..100 {
            let p = k as f64 / 200.0;
            assert!((binary_entropy(p).unwrap() - binary_entropy(1.0 - p).unwrap()).abs() < 1e-14);
            let mid = binary_entropy(p).unwrap();
            let lo = binary_entropy(p - 0.0025).unwrap();
            let hi = binary_entropy(p + 0.0025).unwrap();
            assert!(mid >= 0.5 * (lo + hi) - 1e-15);
        }
    }

    #[test]
    fn benchmark_key_rate() {
        let r = key_rate(&DecoyLink::default()).unwrap();
        assert!(close(r.q_mu, 0.048780087793530998, 1e-13));
        assert!(close(r.e_mu, 0.020602668946677843, 1e-12));
        assert!(close(r.q1, 0.030329262373600378, 1e-13));
        assert!(close(r.e1, 0.010049095581397674, 1e-13));
        assert!(close(r.key_rate, 0.009837438680326852685, 1e-11));
        assert!(!r.insecure);
        // the printed numerator exceeds Y_0, so e_0 > 1 at the benchmark
        assert!(r.warnings[0].starts_with("error rate e_0"));

        let std = key_rate(&DecoyLink { error_model: ErrorModel::Standard, ..Default::default() }).unwrap();
        assert!(close(std.e_mu, 0.010100550804219758, 1e-12));
        assert!(close(std.key_rate, 0.011629825630713550, 1e-11));
        assert!(std.warnings.is_empty());
    }

    #[test]
    fn zero_error_limit_and_opaque_channel() {
        let clean = DecoyLink { e_darkcount: 0.0, e_detector: 0.0, y0: 0.0, ..Default::default() };
        let r = key_rate(&clean).unwrap();
        assert!(close(r.key_rate, clean.q_ratio * r.q1, 1e-15));
        assert!(r.key_rate > 0.0);
        let dark = DecoyLink { eta: 0.0, ..Default::default() };
        let r = key_rate(&dark).unwrap();
        assert!(r.key_rate < 0.0 && r.insecure);
    }

    #[test]
    fn validation_and_toml() {
        let bad = DecoyLink { mu_decoy: 0.5, q_ratio: 0.0, photon_cutoff: 5, ..Default::default() };
        match bad.validate() {
            Err(QkdError::Invalid(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
        let l = DecoyLink::from_toml("mu_signal = 0.6\nerror_model = \"standard\"\n").unwrap();
        assert_eq!(l.mu_signal, 0.6);
        assert_eq!(l.error_model, ErrorModel::Standard);
        assert_eq!(l.eta, 0.1);
        assert!(DecoyLink::from_toml("mystery = 1").is_err());
    }

    proptest! {
        #[test]
        fn gain_series_matches_closed_form(mu in 0.0f64..2.0, y0 in 0.0f64..0.1, eta in 0.0f64..1.0) {
            let s = overall_gain(mu, y0, eta, 60).unwrap();
            prop_assert!((s - overall_gain_closed(mu, y0, eta)).abs() < 1e-12);
            prop_assert!(s >= y0 - 1e-15 && s <= 1.0);
        }

        #[test]
        fn gain_monotone(mu in 0.0f64..1.5, y0 in 0.0f64..0.1, eta in 0.0f64..0.9, d in 0.001f64..0.1) {
            let g = |m: f64, y: f64, e: f64| overall_gain(m, y, e, 60).unwrap();
            let base = g(mu, y0, eta);
            prop_assert!(g(mu + d, y0, eta) >= base - 1e-15);
            prop_assert!(g(mu, y0 + d, eta) >= base - 1e-15);
            prop_assert!(g(mu, y0, eta + d) >= base - 1e-15);
        }

        #[test]
        fn qber_bounded(
            mu in 0.01f64..1.0, y0 in 1e-6f64..0.01, eta in 0.001f64..1.0,
            e_det in 0.0f64..0.5, frac in 0.0f64..1.0,
        ) {
            let standard = DecoyLink {
                y0, eta, e_detector: e_det, error_model: ErrorModel::Standard, ..Default::default()
            };
            // printed numerator kept no larger than Y_0 so every e_j is a probability
            let printed = DecoyLink {
                y0, eta,
                e_detector: e_det.min(frac * y0 / eta),
                e_darkcount: (1.0 - frac) * y0,
                ..Default::default()
            };
            for link in [standard, printed] {
                let (eq, e) = overall_qber(&link, mu).unwrap();
                prop_assert!(eq >= 0.0);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&e), "{:?} {}", link.error_model, e);
            }
        }

        #[test]
        fn key_rate_cutoff_robust(mu in 0.05f64..1.0, eta in 0.01f64..1.0) {
            let a = key_rate(&DecoyLink { mu_signal: mu, eta, ..Default::default() }).unwrap();
            let b = key_rate(&DecoyLink { mu_signal: mu, eta, photon_cutoff: 90, ..Default::default() }).unwrap();
            prop_assert!((a.key_rate - b.key_rate).abs() <= 1e-13 * a.key_rate.abs().max(1e-12));
        }
    }
}
