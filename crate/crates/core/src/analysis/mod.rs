//! Exponent extraction from ensemble width series.
//!
//! The width is expected to follow `w ∝ V^α f(t / V^{α/β})` with
//! `f(x) ∝ x^β` at early times and `f → const` after saturation. Everything
//! here is a straight-line fit in log–log coordinates over an explicit window.

use serde::Serialize;

use crate::ensemble::EnsembleSeries;
use crate::error::{Error, Result};
use crate::observables::Observable;
use crate::stats::RunningStats;

pub mod collapse;

pub use collapse::{
    collapse_cost, family_vicsek_rescale, fit_collapse, CollapseResult, COLLAPSE_PENALTY,
};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Abscissa range actually used, `(min, max)`.
    pub window: (f64, f64),
    pub point_count: usize,
}

impl LogLogFit {
    /// Standard error of the slope from the fit residuals (0 for two points).
    pub fn slope_stderr(&self) -> f64 {
        if self.point_count <= 2 || self.r_squared >= 1.0 || self.r_squared <= 0.0 {
            return 0.0;
        }
        self.slope.abs() * ((1.0 / self.r_squared - 1.0) / (self.point_count - 2) as f64).sqrt()
    }
}

/// A fitted exponent with its envelope uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponent {
    pub value: f64,
    pub uncertainty: f64,
    pub fit: LogLogFit,
}

/// Ordinary least squares on `(ln x, ln y)` for points with `x` inside `window`.
pub fn fit_loglog(points: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<LogLogFit> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let selected: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| x >= lo && x <= hi)
        .collect();
    if selected.len() < 2 {
        return Err(Error::contract(format!(
            "log-log fit needs >= 2 points in window [{lo}, {hi}], found {}",
            selected.len()
        )));
    }
    if let Some(&(x, y)) = selected.iter().find(|&&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(Error::contract(format!(
            "log-log fit needs positive values, got ({x}, {y})"
        )));
    }
    let logs: Vec<(f64, f64)> = selected.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(lx, ly) in &logs {
        sxx += (lx - mx) * (lx - mx);
        sxy += (lx - mx) * (ly - my);
        syy += (ly - my) * (ly - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::contract(
            "log-log fit needs at least two distinct abscissae",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs
        .iter()
        .map(|&(lx, ly)| (ly - intercept - slope * lx).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let xmin = selected.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = selected
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
        window: (xmin, xmax),
        point_count: selected.len(),
    })
}

/// Fits `(x, mean ± stderr)` and attaches an envelope uncertainty.
///
/// The envelopes tilt from `−σ` at the smallest in-window abscissa to `+σ` at
/// the largest (and the mirror image), which are the ±1 standard-error curves
/// with the largest effect on the slope. The uncertainty combines half the
/// spread of the two refitted slopes with the residual slope error.
pub fn fit_with_envelope(
    points: &[(f64, f64, Option<f64>)],
    window: Option<(f64, f64)>,
) -> Result<Exponent> {
    let central: Vec<(f64, f64)> = points.iter().map(|&(x, y, _)| (x, y)).collect();
    let fit = fit_loglog(&central, window)?;
    let (lo, hi) = (fit.window.0.ln(), fit.window.1.ln());
    let span = hi - lo;
    let tilted = |sign: f64| -> Vec<(f64, f64)> {
        points
            .iter()
            .map(|&(x, y, se)| {
                let s = se.unwrap_or(0.0);
                let u = if span > 0.0 {
                    2.0 * (x.ln() - lo) / span - 1.0
                } else {
                    0.0
                };
                // keep the envelope positive so the log stays defined
                (x, (y + sign * u.clamp(-1.0, 1.0) * s).max(y * 1e-6))
            })
            .collect()
    };
    let up = fit_loglog(&tilted(1.0), window)?;
    let down = fit_loglog(&tilted(-1.0), window)?;
    let envelope = 0.5 * (up.slope - down.slope).abs();
    Ok(Exponent {
        value: fit.slope,
        uncertainty: envelope.hypot(fit.slope_stderr()),
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaConvention {
    /// Fit `log w` against `log V`.
    PerVolume,
    /// Fit `log w` against `log N`.
    PerLinearSize,
}

impl std::str::FromStr for AlphaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_volume" | "volume" | "V" => Ok(AlphaConvention::PerVolume),
            "per_linear_size" | "linear" | "N" => Ok(AlphaConvention::PerLinearSize),
            other => Err(Error::contract(format!(
                "unknown alpha convention '{other}'"
            ))),
        }
    }
}

/// Plateau width of one system size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizePlateau {
    pub volume: usize,
    pub width: f64,
    pub stderr: Option<f64>,
}

/// Roughness exponent from saturated widths at several sizes.
pub fn extract_alpha(
    plateaus: &[SizePlateau],
    convention: AlphaConvention,
    dim: usize,
) -> Result<Exponent> {
    if plateaus.len() < 2 {
        return Err(Error::contract(
            "alpha needs plateaus for at least two sizes",
        ));
    }
    if dim < 1 {
        return Err(Error::contract("dimension must be >= 1"));
    }
    let pts: Vec<(f64, f64, Option<f64>)> = plateaus
        .iter()
        .map(|p| {
            let v = p.volume as f64;
            let x = match convention {
                AlphaConvention::PerVolume => v,
                AlphaConvention::PerLinearSize => v.powf(1.0 / dim as f64),
            };
            (x, p.width, p.stderr)
        })
        .collect();
    fit_with_envelope(&pts, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateauEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub saturated: bool,
    pub points: usize,
}

/// Averages the last `tail_fraction` of record times of one observable.
///
/// The pooled standard error is the RMS of the per-time standard errors,
/// i.e. it treats the tail points as fully correlated. The saturation
/// guard compares the means of the two halves of the tail.
pub fn plateau_value(
    series: &EnsembleSeries,
    observable: Observable,
    tail_fraction: f64,
) -> Result<PlateauEstimate> {
    let stats = series
        .series(observable)
        .ok_or_else(|| Error::contract(format!("series has no '{observable}' observable")))?;
    plateau_from_stats(stats, tail_fraction)
}

pub fn plateau_from_stats(stats: &[RunningStats], tail_fraction: f64) -> Result<PlateauEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::contract(format!(
            "tail fraction must be in (0, 1], got {tail_fraction}"
        )));
    }
    if stats.is_empty() {
        return Err(Error::contract("empty series"));
    }
    let k = ((stats.len() as f64 * tail_fraction).ceil() as usize).clamp(1, stats.len());
    let tail = &stats[stats.len() - k..];
    let summarize = |s: &[RunningStats]| {
        let n = s.len() as f64;
        let mean = s.iter().map(|x| x.mean).sum::<f64>() / n;
        let se = (s
            .iter()
            .map(|x| x.stderr().unwrap_or(0.0).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        (mean, se)
    };
    let (mean, stderr) = summarize(tail);
    let saturated = if tail.len() >= 2 {
        let (a, b) = tail.split_at(tail.len() / 2);
        let (ma, sa) = summarize(a);
        let (mb, sb) = summarize(b);
        (mb - ma).abs() <= 2.0 * sa.hypot(sb)
    } else {
        true
    };
    Ok(PlateauEstimate {
        mean,
        stderr,
        saturated,
        points: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthExponents {
    pub beta: Exponent,
    pub nu: Exponent,
}

/// Default early-time window: the decade `[0.1/γ, 1/γ]`, with the lower edge
/// raised to `20·dt` when the step is coarse.
///
/// Below `~0.1/γ` the sites still grow independently (`w ∝ t^{1/2}`), so a
/// window ending there measures that trivial regime rather than β.
pub fn default_early_window(gamma: f64, dt: f64) -> (f64, f64) {
    ((0.1 / gamma).max(20.0 * dt), 1.0 / gamma)
}

/// Default crossover window: one decade centred (geometrically) between
/// `1/γ` and the saturation onset `t_sat`, shifted up if needed so that it
/// starts no earlier than `1/γ`.
pub fn default_crossover_window(gamma: f64, t_sat: f64) -> (f64, f64) {
    let half = 10f64.sqrt();
    let lo = ((t_sat / gamma).sqrt() / half).max(1.0 / gamma);
    (lo, lo * 10.0)
}

/// First record time at which the mean width reaches `fraction` of its plateau.
pub fn saturation_onset(series: &EnsembleSeries, fraction: f64, tail_fraction: f64) -> Result<f64> {
    let plateau = plateau_value(series, Observable::Width, tail_fraction)?;
    let stats = series.series(Observable::Width).unwrap();
    series
        .record_times
        .iter()
        .zip(stats)
        .find(|(_, s)| s.mean >= fraction * plateau.mean)
        .map(|(&t, _)| t)
        .ok_or_else(|| Error::contract("width never reaches its plateau"))
}

fn width_points(series: &EnsembleSeries) -> Result<Vec<(f64, f64, Option<f64>)>> {
    let stats = series
        .series(Observable::Width)
        .ok_or_else(|| Error::contract("series has no width observable"))?;
    Ok(series
        .record_times
        .iter()
        .zip(stats)
        .filter(|(&t, s)| t > 0.0 && s.mean > 0.0)
        .map(|(&t, s)| (t, s.mean, s.stderr()))
        .collect())
}

/// Growth exponent β (early window) and crossover exponent ν (later window).
pub fn extract_growth_exponents(
    series: &EnsembleSeries,
    early_window: (f64, f64),
    crossover_window: (f64, f64),
) -> Result<GrowthExponents> {
    let (e0, e1) = early_window;
    let (c0, c1) = crossover_window;
    if !(e0 < e1) || !(c0 < c1) {
        return Err(Error::contract("fit windows must have min < max"));
    }
    if e1 > c0 && c1 > e0 {
        return Err(Error::contract(format!(
            "early window [{e0}, {e1}] overlaps crossover window [{c0}, {c1}]"
        )));
    }
    let pts = width_points(series)?;
    Ok(GrowthExponents {
        beta: fit_with_envelope(&pts, Some(early_window))?,
        nu: fit_with_envelope(&pts, Some(crossover_window))?,
    })
}

/// Fit of one exponent in a single window of the width series.
pub fn width_growth_exponent(series: &EnsembleSeries, window: (f64, f64)) -> Result<Exponent> {
    fit_with_envelope(&width_points(series)?, Some(window))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IprPhase {
    Delocalized,
    Localized,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IprThresholds {
    /// Slopes below this are delocalized.
    pub delocalized_below: f64,
    /// Slopes above this are localized.
    pub localized_above: f64,
}

impl Default for IprThresholds {
    fn default() -> Self {
        Self {
            delocalized_below: -0.5,
            localized_above: -0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IprClassification {
    pub phase: IprPhase,
    pub slope: f64,
    pub fit: LogLogFit,
}

/// Classifies the volume scaling of the saturated IPR: `∝ 1/V` is delocalized, `∝ 1` localized.
pub fn classify_ipr_scaling(
    points: &[(usize, f64)],
    thresholds: IprThresholds,
) -> Result<IprClassification> {
    if points.len() < 2 {
        return Err(Error::contract("IPR scaling needs at least two sizes"));
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|&(v, ipr)| (v as f64, ipr)).collect();
    let fit = fit_loglog(&pts, None)?;
    let phase = if fit.slope < thresholds.delocalized_below {
        IprPhase::Delocalized
    } else if fit.slope > thresholds.localized_above {
        IprPhase::Localized
    } else {
        IprPhase::Undetermined
    };
    Ok(IprClassification {
        phase,
        slope: fit.slope,
        fit,
    })
}
