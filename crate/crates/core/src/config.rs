//! Experiment configuration: flat `key = value` text with dotted keys.
//!
//! ```text
//! # 1d local sweep
//! lattice.d = 1
//! lattice.N = 32, 64, 128
//! sim.model = local
//! sweep.gammas = 1, 2, 4
//! ensemble.M = 500
//! ensemble.record = log:0.01:200:60
//! ```
//!
//! Blank lines and `#` comments are ignored. Later assignments (command-line
//! overrides) replace earlier ones; repeating a key inside one file is an error.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use crate::analysis::{AlphaConvention, IprThresholds};
use crate::dynamics::{self, Model, ObserverConfig, SimParams};
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::observables::Observable;

/// Every key the parser accepts, with its default (empty = no default).
pub const KEYS: &[(&str, &str)] = &[
    ("lattice.d", "1"),
    ("lattice.N", "32"),
    ("sim.tau", "1"),
    ("sim.gamma", "1"),
    ("sim.dt", "0.001"),
    ("sim.model", "nonlocal"),
    ("sim.renormalize_local", "true"),
    ("sweep.gammas", ""),
    ("sweep.models", ""),
    ("ensemble.M", "100"),
    ("ensemble.seed", "0"),
    ("ensemble.t_max", "10"),
    ("ensemble.record", "log:0.01:t_max:50+linear:0:t_max:41"),
    ("ensemble.record_zero", "true"),
    ("ensemble.observables", "width, ipr, mean_height"),
    ("observer.floor", "1e-300"),
    ("analysis.input", ""),
    ("analysis.convention", "per_volume"),
    ("analysis.early_window", ""),
    ("analysis.crossover_window", ""),
    ("analysis.tail_fraction", "0.25"),
    ("analysis.saturation_fraction", "0.9"),
    ("analysis.ipr_delocalized_below", "-0.5"),
    ("analysis.ipr_localized_above", "-0.25"),
    ("collapse.input", ""),
    ("collapse.model", ""),
    ("collapse.gamma_grid", "linear:1:8:71"),
    ("collapse.xi_grid", "linear:0:2:41"),
    ("rg.d", "1, 2, 3"),
    ("rg.gamma0", "1"),
    ("rg.cutoff", "pi"),
    ("rg.diffusion", "1"),
    ("rg.lambda2", ""),
    (
        "rg.lambda2_factors",
        "0.25, 0.5, 0.9, 0.99, 1, 1.01, 1.1, 1.5, 2",
    ),
    ("rg.lambda1", ""),
    ("rg.l_max", "40"),
    ("rg.dl", "0.01"),
    ("output.dir", "out"),
    ("run.workers", "0"),
];

/// Raw key/value assignments, in canonical (sorted) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::contract(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            check_key(key)?;
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::contract(format!(
                    "config line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(Self { values })
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::contract(format!("override '{assignment}' is not key=value")))?;
        self.set_value(key.trim(), value.trim())
    }

    pub fn set_value(&mut self, key: &str, value: &str) -> Result<()> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> &str {
        match self.values.get(key) {
            Some(v) => v,
            None => KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .unwrap_or(""),
        }
    }

    /// Every key with its effective value, defaults included.
    pub fn effective(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|(k, _)| (k.to_string(), self.get(k).to_string()))
            .collect()
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(Error::contract(format!("unknown config key '{key}'")))
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::contract(format!("{key} = '{value}': {why}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| bad(key, value, "not a valid number"))
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    match value.trim() {
        "pi" => Ok(PI),
        v => {
            let x: f64 = parse_num(key, v)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(bad(key, value, "must be finite"))
            }
        }
    }
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_window(key: &str, value: &str) -> Result<Option<(f64, f64)>> {
    if value.trim().is_empty() {
        return Ok(None);
    }
    match parse_list(key, value, parse_real)?.as_slice() {
        &[a, b] if a > 0.0 && b > a => Ok(Some((a, b))),
        _ => Err(bad(key, value, "expected 'lo, hi' with 0 < lo < hi")),
    }
}

/// `linear:a:b:n`, `log:a:b:n`, a `+`-joined union of those, or an explicit
/// comma list; `t_max` may stand for the end point.
pub fn parse_grid(key: &str, value: &str, t_max: Option<f64>) -> Result<Vec<f64>> {
    let v = value.trim();
    if v.contains('+') && v.contains(':') {
        // union of grids, sorted and deduplicated
        let mut all = Vec::new();
        for part in v.split('+') {
            all.extend(parse_grid(key, part, t_max)?);
        }
        all.sort_by(f64::total_cmp);
        all.dedup();
        return Ok(all);
    }
    let real = |s: &str| match (s.trim(), t_max) {
        ("t_max", Some(t)) => Ok(t),
        (s, _) => parse_real(key, s),
    };
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        [kind @ ("linear" | "log"), a, b, n] => {
            let (a, b) = (real(a)?, real(b)?);
            let n: usize = parse_num(key, n)?;
            if n == 0 {
                return Err(bad(key, value, "grid needs at least one point"));
            }
            if n == 1 {
                return Ok(vec![a]);
            }
            if !(b > a) {
                return Err(bad(key, value, "grid end must exceed its start"));
            }
            let f = |i: usize| i as f64 / (n - 1) as f64;
            if *kind == "linear" {
                Ok((0..n)
                    .map(|i| if i == n - 1 { b } else { a + (b - a) * f(i) })
                    .collect())
            } else {
                if !(a > 0.0) {
                    return Err(bad(key, value, "log grid must start above 0"));
                }
                let (la, lb) = (a.ln(), b.ln());
                Ok((0..n)
                    .map(|i| {
                        if i == n - 1 {
                            b
                        } else {
                            (la + (lb - la) * f(i)).exp()
                        }
                    })
                    .collect())
            }
        }
        [_] => parse_list(key, v, |k, s| {
            real(s).map_err(|_| bad(k, s, "not a number"))
        }),
        _ => Err(bad(
            key,
            value,
            "expected linear:a:b:n, log:a:b:n or a list",
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Sweep,
    Analyze,
    RgFlow,
    Collapse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub input: PathBuf,
    pub convention: AlphaConvention,
    pub early_window: Option<(f64, f64)>,
    pub crossover_window: Option<(f64, f64)>,
    pub tail_fraction: f64,
    pub saturation_fraction: f64,
    pub ipr_thresholds: IprThresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseSettings {
    pub input: PathBuf,
    pub model: Option<Model>,
    pub gamma_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgSettings {
    pub dims: Vec<u32>,
    pub gamma0: f64,
    pub cutoff: f64,
    pub diffusion: f64,
    /// Explicit λ₀^II values; when empty, `lambda2_factors` × critical value per dimension.
    pub lambda2: Vec<f64>,
    pub lambda2_factors: Vec<f64>,
    /// λ₀^I; `None` means equal to λ₀^II.
    pub lambda1: Option<f64>,
    pub l_max: f64,
    pub dl: f64,
}

/// Typed, validated view of a [`RawConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub params: SimParams,
    pub gammas: Vec<f64>,
    pub models: Vec<Model>,
    pub trajectories: u64,
    pub base_seed: u64,
    pub t_max: f64,
    /// Record times snapped to completed steps, strictly increasing.
    pub record_times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub observer: ObserverConfig,
    pub analysis: AnalysisSettings,
    pub collapse: CollapseSettings,
    pub rg: RgSettings,
    pub out: PathBuf,
    pub workers: usize,
    pub raw: RawConfig,
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let g = |k: &str| raw.get(k).to_string();
        let dim: usize = parse_num("lattice.d", &g("lattice.d"))?;
        let sizes = parse_list("lattice.N", &g("lattice.N"), parse_num::<usize>)?;
        if sizes.is_empty() {
            return Err(bad("lattice.N", &g("lattice.N"), "needs at least one size"));
        }
        for &n in &sizes {
            LatticeGeometry::new(dim, n)?;
        }
        let model: Model = g("sim.model").parse()?;
        let mut params = SimParams::new(
            parse_real("sim.tau", &g("sim.tau"))?,
            parse_real("sim.gamma", &g("sim.gamma"))?,
            parse_real("sim.dt", &g("sim.dt"))?,
            model,
        );
        params.renormalize_local =
            parse_bool("sim.renormalize_local", &g("sim.renormalize_local"))?;
        params.validate(dim).map_err(|e| prefix_sim(e))?;

        let gammas = match g("sweep.gammas").trim() {
            "" => vec![params.gamma],
            v => parse_grid("sweep.gammas", v, None)?,
        };
        if gammas.is_empty() {
            return Err(bad("sweep.gammas", &g("sweep.gammas"), "grid is empty"));
        }
        let models = match g("sweep.models").trim() {
            "" => vec![model],
            v => parse_list("sweep.models", v, |_, s| s.parse::<Model>())?,
        };

        let trajectories: u64 = parse_num("ensemble.M", &g("ensemble.M"))?;
        if trajectories < 1 {
            return Err(bad("ensemble.M", &g("ensemble.M"), "must be >= 1"));
        }
        let base_seed: u64 = parse_num("ensemble.seed", &g("ensemble.seed"))?;
        let t_max = parse_real("ensemble.t_max", &g("ensemble.t_max"))?;
        if !(t_max >= 0.0) {
            return Err(bad("ensemble.t_max", &g("ensemble.t_max"), "must be >= 0"));
        }
        let mut grid = parse_grid("ensemble.record", &g("ensemble.record"), Some(t_max))?;
        if parse_bool("ensemble.record_zero", &g("ensemble.record_zero"))? {
            grid.insert(0, 0.0);
        }
        let record_times = snap_record_times(&grid, params.dt, t_max)
            .map_err(|e| Error::contract(format!("ensemble.record: {}", strip(e))))?;
        let observables = parse_list(
            "ensemble.observables",
            &g("ensemble.observables"),
            |_, s| s.parse::<Observable>(),
        )?;
        if observables.is_empty() {
            return Err(bad(
                "ensemble.observables",
                "",
                "needs at least one observable",
            ));
        }
        let floor = parse_real("observer.floor", &g("observer.floor"))?;
        if !(floor > 0.0) {
            return Err(bad("observer.floor", &g("observer.floor"), "must be > 0"));
        }

        let out = PathBuf::from(g("output.dir"));
        let input_or_out = |k: &str| match g(k).trim() {
            "" => out.clone(),
            v => PathBuf::from(v),
        };
        let fraction = |k: &str| -> Result<f64> {
            let x = parse_real(k, &g(k))?;
            if x > 0.0 && x <= 1.0 {
                Ok(x)
            } else {
                Err(bad(k, &g(k), "must be in (0, 1]"))
            }
        };
        let analysis = AnalysisSettings {
            input: input_or_out("analysis.input"),
            convention: g("analysis.convention").parse()?,
            early_window: parse_window("analysis.early_window", &g("analysis.early_window"))?,
            crossover_window: parse_window(
                "analysis.crossover_window",
                &g("analysis.crossover_window"),
            )?,
            tail_fraction: fraction("analysis.tail_fraction")?,
            saturation_fraction: fraction("analysis.saturation_fraction")?,
            ipr_thresholds: IprThresholds {
                delocalized_below: parse_real(
                    "analysis.ipr_delocalized_below",
                    &g("analysis.ipr_delocalized_below"),
                )?,
                localized_above: parse_real(
                    "analysis.ipr_localized_above",
                    &g("analysis.ipr_localized_above"),
                )?,
            },
        };
        if analysis.ipr_thresholds.delocalized_below > analysis.ipr_thresholds.localized_above {
            return Err(Error::contract(
                "analysis.ipr_delocalized_below must not exceed analysis.ipr_localized_above",
            ));
        }

        let collapse = CollapseSettings {
            input: input_or_out("collapse.input"),
            model: match g("collapse.model").trim() {
                "" => None,
                v => Some(v.parse()?),
            },
            gamma_grid: parse_grid("collapse.gamma_grid", &g("collapse.gamma_grid"), None)?,
            xi_grid: parse_grid("collapse.xi_grid", &g("collapse.xi_grid"), None)?,
        };

        let rg = RgSettings {
            dims: parse_list("rg.d", &g("rg.d"), parse_num::<u32>)?,
            gamma0: parse_real("rg.gamma0", &g("rg.gamma0"))?,
            cutoff: parse_real("rg.cutoff", &g("rg.cutoff"))?,
            diffusion: parse_real("rg.diffusion", &g("rg.diffusion"))?,
            lambda2: parse_list("rg.lambda2", &g("rg.lambda2"), parse_real)?,
            lambda2_factors: parse_list(
                "rg.lambda2_factors",
                &g("rg.lambda2_factors"),
                parse_real,
            )?,
            lambda1: match g("rg.lambda1").trim() {
                "" => None,
                v => Some(parse_real("rg.lambda1", v)?),
            },
            l_max: parse_real("rg.l_max", &g("rg.l_max"))?,
            dl: parse_real("rg.dl", &g("rg.dl"))?,
        };
        if rg.dims.iter().any(|&d| d < 1) {
            return Err(bad("rg.d", &g("rg.d"), "dimensions must be >= 1"));
        }
        if !(rg.dl > 0.0) {
            return Err(bad("rg.dl", &g("rg.dl"), "must be > 0"));
        }
        if !(rg.l_max >= 0.0) {
            return Err(bad("rg.l_max", &g("rg.l_max"), "must be >= 0"));
        }

        let workers: usize = parse_num("run.workers", &g("run.workers"))?;
        Ok(Self {
            dim,
            sizes,
            params,
            gammas,
            models,
            trajectories,
            base_seed,
            t_max,
            record_times,
            observables,
            observer: ObserverConfig { floor },
            analysis,
            collapse,
            rg,
            out,
            workers,
            raw,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    /// Ensemble for one lattice size and parameter set.
    pub fn ensemble_spec(&self, n: usize, params: SimParams) -> Result<EnsembleSpec> {
        Ok(EnsembleSpec {
            geometry: LatticeGeometry::new(self.dim, n)?,
            params,
            base_seed: self.base_seed,
            trajectories: self.trajectories,
            t_max: self.t_max,
            record_times: self.record_times.clone(),
            observables: self.observables.clone(),
            observer: self.observer,
        })
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Contract(m) => m,
        other => other.to_string(),
    }
}

fn prefix_sim(e: Error) -> Error {
    match e {
        Error::Contract(m) => Error::Contract(format!("sim: {m}")),
        other => other,
    }
}

/// Rounds record times to completed steps and drops duplicates.
pub fn snap_record_times(times: &[f64], dt: f64, t_max: f64) -> Result<Vec<f64>> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    dynamics::validate_record_times(&sorted, t_max)?;
    let last = dynamics::step_index(t_max, dt);
    let mut steps: Vec<u64> = sorted
        .iter()
        .map(|&t| dynamics::step_index(t, dt).min(last))
        .collect();
    steps.dedup();
    Ok(steps.into_iter().map(|s| s as f64 * dt).collect())
}
