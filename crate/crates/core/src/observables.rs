//! Pointwise diagnostics of a wave function: IPR, height field and surface width.

use crate::dynamics::WaveState;
use crate::error::{Error, Result};

/// Default floor on `|ψ_j|²` before taking the logarithm, just above f64 underflow.
pub const DEFAULT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observable {
    /// Spatial standard deviation of the height field.
    Width,
    /// Inverse participation ratio `Σ|ψ|⁴`.
    Ipr,
    /// Spatial mean of the height field.
    MeanHeight,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::Width, Observable::Ipr, Observable::MeanHeight];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::Width => "width",
            Observable::Ipr => "ipr",
            Observable::MeanHeight => "mean_height",
        }
    }

    pub fn needs_height(&self) -> bool {
        matches!(self, Observable::Width | Observable::MeanHeight)
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Observable::ALL
            .into_iter()
            .find(|o| o.name() == s.trim())
            .ok_or_else(|| Error::contract(format!("unknown observable '{s}'")))
    }
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `h_j = log(max(|ψ_j|², floor)) / √γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub values: Vec<f64>,
    pub gamma_used: f64,
    pub floored_count: usize,
}

pub fn ipr(state: &WaveState) -> f64 {
    state.amplitudes.iter().map(|a| a.norm_sqr().powi(2)).sum()
}

pub fn height_field(state: &WaveState, gamma: f64, floor: f64) -> Result<HeightField> {
    if !(gamma > 0.0) {
        return Err(Error::contract(format!(
            "height field needs gamma > 0, got {gamma}"
        )));
    }
    if !(floor > 0.0) {
        return Err(Error::contract(format!(
            "amplitude floor must be > 0, got {floor}"
        )));
    }
    let inv_sqrt_g = 1.0 / gamma.sqrt();
    let mut floored_count = 0;
    let values = state
        .amplitudes
        .iter()
        .map(|a| {
            let p = a.norm_sqr();
            let p = if p < floor {
                floored_count += 1;
                floor
            } else {
                p
            };
            p.ln() * inv_sqrt_g
        })
        .collect();
    Ok(HeightField {
        values,
        gamma_used: gamma,
        floored_count,
    })
}

pub fn mean_height(h: &HeightField) -> f64 {
    if h.values.is_empty() {
        return 0.0;
    }
    h.values.iter().sum::<f64>() / h.values.len() as f64
}

/// Population standard deviation of the heights (divides by V).
pub fn width(h: &HeightField) -> f64 {
    if h.values.is_empty() {
        return 0.0;
    }
    let mean = mean_height(h);
    let var = h.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / h.values.len() as f64;
    var.sqrt()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub floored: u64,
}

/// Evaluates `observables` in order; the height field is built at most once.
///
/// Panics if a height observable is requested with `gamma <= 0`; callers validate first.
pub fn evaluate(
    state: &WaveState,
    gamma: f64,
    floor: f64,
    observables: &[Observable],
) -> Evaluation {
    let height = if observables.iter().any(|o| o.needs_height()) {
        Some(height_field(state, gamma, floor).expect("validated gamma and floor"))
    } else {
        None
    };
    let values = observables
        .iter()
        .map(|o| match o {
            Observable::Width => width(height.as_ref().unwrap()),
            Observable::MeanHeight => mean_height(height.as_ref().unwrap()),
            Observable::Ipr => ipr(state),
        })
        .collect();
    Evaluation {
        values,
        floored: height.map_or(0, |h| h.floored_count as u64),
    }
}
