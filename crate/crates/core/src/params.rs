//! Device constants for the single-mode rate equations, their validation,
//! and the derived threshold quantities every other module relies on.
//!
//! Everything is strict SI: densities in m⁻³, times in seconds, currents in
//! amperes. The `a_gain` coefficient carries m³/s so that
//! `Γ·a·(n − n_g)·N_s` is a density rate.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Elementary charge in coulombs (exact SI value).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Raw laser parameter set as read from a parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    /// Mode confinement factor Γ, in (0, 1].
    pub gamma: f64,
    /// Gain coefficient a, m³/s.
    pub a_gain: f64,
    /// Carrier density at transparency n_g, m⁻³.
    pub n_transparency: f64,
    /// Gain compression factor ε, m³.
    pub epsilon: f64,
    /// Spontaneous-emission coupling factor β, in (0, 1].
    pub beta: f64,
    /// Photon lifetime τ_p, s.
    pub tau_p: f64,
    /// Non-radiative carrier lifetime τ_nr, s.
    pub tau_nr: f64,
    /// Radiative lifetime τ_mode, s.
    pub tau_mode: f64,
    /// Active-region volume V, m³.
    pub volume: f64,
    /// Active-region thickness d, m.
    pub thickness: f64,
    /// Elementary charge q, C.
    pub q_charge: f64,
}

impl Default for LaserParams {
    /// Calibrated default device.
    ///
    /// τ_nr = τ_mode = 4 ns gives τ_n = 2 ns, n_th = n_g + 1/(Γ·a·τ_p)
    /// = 3.2667e24 m⁻³, and the volume is set so that q·V·n_th/τ_n lands on
    /// an 18.40 mA threshold. ε is kept small enough that the compression
    /// contribution to relaxation damping (ε·N_s/τ_p) stays around 1% of
    /// the small-signal damping at twice threshold.
    fn default() -> Self {
        Self {
            gamma: 0.3,
            a_gain: 1.0e-12,
            n_transparency: 1.6e24,
            epsilon: 1.0e-26,
            beta: 1.0e-4,
            tau_p: 2.0e-12,
            tau_nr: 4.0e-9,
            tau_mode: 4.0e-9,
            volume: 7.03e-17,
            thickness: 0.1e-6,
            q_charge: ELEMENTARY_CHARGE,
        }
    }
}

/// One violated invariant of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveField(&'static str),
    NonFinite(&'static str),
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    NegativeField(&'static str),
    InconsistentLifetimes { tau_n: f64, shortest: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveField(name) => write!(f, "{name} must be strictly positive"),
            Violation::NonFinite(name) => write!(f, "{name} must be finite"),
            Violation::OutOfRange {
                field,
                value,
                min,
                max,
            } => write!(f, "{field} = {value} outside ({min}, {max}]"),
            Violation::NegativeField(name) => write!(f, "{name} must be non-negative"),
            Violation::InconsistentLifetimes { tau_n, shortest } => write!(
                f,
                "derived carrier lifetime {tau_n:e} s is not shorter than min(tau_nr, tau_mode) = {shortest:e} s"
            ),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParamError {
    #[error("invalid laser parameters: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("parameter file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read parameter file: {0}")]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Carrier lifetime τ_n from the parallel non-radiative and radiative channels.
pub fn carrier_lifetime(params: &LaserParams) -> f64 {
    1.0 / (1.0 / params.tau_nr + 1.0 / params.tau_mode)
}

/// Threshold carrier density n_th = n_g + 1/(Γ·a·τ_p).
pub fn threshold_density(params: &LaserParams) -> f64 {
    params.n_transparency + 1.0 / (params.gamma * params.a_gain * params.tau_p)
}

/// Threshold current I_th = q·V·n_th/τ_n.
pub fn threshold_current(params: &LaserParams) -> f64 {
    params.q_charge * params.volume * threshold_density(params) / carrier_lifetime(params)
}

/// Checks every invariant and returns the validated set with its derived
/// quantities, or the full list of violations.
pub fn validate(params: &LaserParams) -> Result<Laser, ParamError> {
    let mut violations = Vec::new();
    let p = params;

    let fields: [(&'static str, f64); 11] = [
        ("gamma", p.gamma),
        ("a_gain", p.a_gain),
        ("n_transparency", p.n_transparency),
        ("epsilon", p.epsilon),
        ("beta", p.beta),
        ("tau_p", p.tau_p),
        ("tau_nr", p.tau_nr),
        ("tau_mode", p.tau_mode),
        ("volume", p.volume),
        ("thickness", p.thickness),
        ("q_charge", p.q_charge),
    ];
    for (name, value) in fields {
        if !value.is_finite() {
            violations.push(Violation::NonFinite(name));
        } else if name == "epsilon" || name == "n_transparency" {
            if value < 0.0 {
                violations.push(Violation::NegativeField(name));
            }
        } else if value <= 0.0 {
            violations.push(Violation::NonPositiveField(name));
        }
    }
    for (name, value) in [("gamma", p.gamma), ("beta", p.beta)] {
        if value.is_finite() && value > 1.0 {
            violations.push(Violation::OutOfRange {
                field: name,
                value,
                min: 0.0,
                max: 1.0,
            });
        }
    }

    if violations.is_empty() {
        let tau_n = carrier_lifetime(p);
        let shortest = p.tau_nr.min(p.tau_mode);
        if !(tau_n < shortest * (1.0 - 1e-12)) {
            violations.push(Violation::InconsistentLifetimes { tau_n, shortest });
        }
    }

    if !violations.is_empty() {
        return Err(ParamError::Invalid(violations));
    }

    Ok(Laser {
        params: *p,
        tau_n: carrier_lifetime(p),
        n_th: threshold_density(p),
        i_th: threshold_current(p),
    })
}

/// A validated parameter set with derived threshold quantities.
///
/// Immutable once built; cheap to copy into concurrent simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Laser {
    params: LaserParams,
    tau_n: f64,
    n_th: f64,
    i_th: f64,
}

impl Laser {
    pub fn new(params: LaserParams) -> Result<Self, ParamError> {
        validate(&params)
    }

    pub fn params(&self) -> &LaserParams {
        &self.params
    }

    /// Carrier lifetime τ_n, s.
    pub fn tau_n(&self) -> f64 {
        self.tau_n
    }

    /// Threshold carrier density n_th, m⁻³.
    pub fn n_th(&self) -> f64 {
        self.n_th
    }

    /// Threshold current I_th, A.
    pub fn i_th(&self) -> f64 {
        self.i_th
    }

    /// Charge-volume product q·V used to turn currents into density rates.
    pub fn qv(&self) -> f64 {
        self.params.q_charge * self.params.volume
    }
}

impl Default for Laser {
    fn default() -> Self {
        validate(&LaserParams::default()).expect("default parameter set is valid")
    }
}

impl LaserParams {
    /// Parses the flat `key = value` format. Keys not present keep their
    /// default values; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ParamError> {
        let mut p = LaserParams::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ParamError::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| ParamError::Parse {
                line: line_no,
                msg: format!("`{}` is not a number", value.trim()),
            })?;
            let slot = match key {
                "gamma" => &mut p.gamma,
                "a_gain" => &mut p.a_gain,
                "n_transparency" => &mut p.n_transparency,
                "epsilon" => &mut p.epsilon,
                "beta" => &mut p.beta,
                "tau_p" => &mut p.tau_p,
                "tau_nr" => &mut p.tau_nr,
                "tau_mode" => &mut p.tau_mode,
                "volume" => &mut p.volume,
                "thickness" => &mut p.thickness,
                "q_charge" => &mut p.q_charge,
                other => {
                    return Err(ParamError::Parse {
                        line: line_no,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            };
            *slot = value;
        }
        Ok(p)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Renders the parameter set in the same `key = value` format `parse` reads.
    pub fn to_text(&self) -> String {
        format!(
            "gamma = {:e}\na_gain = {:e}\nn_transparency = {:e}\nepsilon = {:e}\nbeta = {:e}\n\
             tau_p = {:e}\ntau_nr = {:e}\ntau_mode = {:e}\nvolume = {:e}\nthickness = {:e}\nq_charge = {:e}\n",
            self.gamma,
            self.a_gain,
            self.n_transparency,
            self.epsilon,
            self.beta,
            self.tau_p,
            self.tau_nr,
            self.tau_mode,
            self.volume,
            self.thickness,
            self.q_charge
        )
    }
}
