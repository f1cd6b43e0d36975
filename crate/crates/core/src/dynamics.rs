//! Euler–Maruyama integration of the monitored tight-binding walker.
//!
//! Two models share one integrator:
//!
//! * [`Model::NonLocal`], the exact norm-preserving measurement dynamics
//!   `dψ_j = iτ Σ_e ψ_{j+e} dt − (γ/2) ψ_j (1 − 2|ψ_j|² + Σ_m |ψ_m|⁴) dt
//!          + √γ ψ_j (dB_j − Σ_m |ψ_m|² dB_m)`,
//!   followed by projection back onto the unit sphere;
//! * [`Model::Local`], its linearisation around the flat profile
//!   `dψ_j = (iτ Σ_e ψ_{j+e} − (γ/2) ψ_j) dt + √γ ψ_j dB_j`,
//!   optionally rescaled to unit norm after each step.
//!
//! Both are explicit Itô steps: every right-hand side term is evaluated on the
//! state at the start of the step.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::noise::NoiseStream;
use crate::observables::{self, Observable};

pub mod checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    NonLocal,
    Local,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::NonLocal => "nonlocal",
            Model::Local => "local",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nonlocal" | "non-local" | "nl" => Ok(Model::NonLocal),
            "local" | "l" => Ok(Model::Local),
            other => Err(Error::contract(format!("unknown model '{other}'"))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimParams {
    pub tau: f64,
    pub gamma: f64,
    pub dt: f64,
    pub model: Model,
    pub renormalize_local: bool,
}

impl SimParams {
    pub fn new(tau: f64, gamma: f64, dt: f64, model: Model) -> Self {
        Self {
            tau,
            gamma,
            dt,
            model,
            renormalize_local: true,
        }
    }

    /// Checks parameter ranges and the explicit-step stability guard.
    ///
    /// `γ·dt` and `2dτ·dt` above 0.5 produce a warning, above 1 an error.
    pub fn validate(&self, dim: usize) -> Result<Vec<String>> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::contract(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::contract(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::contract(format!("dt must be > 0, got {}", self.dt)));
        }
        let mut warnings = Vec::new();
        let checks = [
            ("gamma*dt", self.gamma * self.dt),
            ("2*d*tau*dt", 2.0 * dim as f64 * self.tau * self.dt),
        ];
        for (name, value) in checks {
            if value > 1.0 {
                return Err(Error::contract(format!(
                    "stability guard: {name} = {value} exceeds 1"
                )));
            }
            if value > 0.5 {
                warnings.push(format!("stability guard: {name} = {value} exceeds 0.5"));
            }
        }
        Ok(warnings)
    }
}

/// Amplitudes `ψ_j` in flattened site order plus the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
    pub step: u64,
}

impl WaveState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Flat initial condition `ψ_j = V^{-1/2}`.
pub fn uniform_initial_state(geom: &LatticeGeometry) -> WaveState {
    let v = geom.volume();
    let a = 1.0 / (v as f64).sqrt();
    WaveState {
        amplitudes: vec![Complex64::new(a, 0.0); v],
        time: 0.0,
        step: 0,
    }
}

/// Stepper with a cached neighbour table and scratch buffer.
#[derive(Debug, Clone)]
pub struct Integrator {
    geom: LatticeGeometry,
    params: SimParams,
    neighbors: Vec<u32>,
    scratch: Vec<Complex64>,
}

impl Integrator {
    pub fn new(geom: LatticeGeometry, params: SimParams) -> Result<Self> {
        params.validate(geom.dim())?;
        let v = geom.volume();
        if v > u32::MAX as usize {
            return Err(Error::contract("lattice too large for the neighbour table"));
        }
        let mut table = Vec::with_capacity(2 * geom.dim());
        let mut neighbors = Vec::with_capacity(v * 2 * geom.dim());
        for site in 0..v {
            table.clear();
            geom.neighbors_into(site, &mut table);
            neighbors.extend(table.iter().map(|&s| s as u32));
        }
        Ok(Self {
            geom,
            params,
            neighbors,
            scratch: vec![Complex64::new(0.0, 0.0); v],
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geom
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Advances `state` by one step of the configured model.
    pub fn step(&mut self, state: &mut WaveState, dw: &[f64]) -> Result<()> {
        match self.params.model {
            Model::NonLocal => self.step_nonlocal(state, dw),
            Model::Local => self.step_local(state, dw),
        }
    }

    fn check_len(&self, state: &WaveState, dw: &[f64]) -> Result<()> {
        let v = self.geom.volume();
        if state.amplitudes.len() != v || dw.len() != v {
            return Err(Error::contract(format!(
                "state/noise length ({}, {}) does not match lattice volume {v}",
                state.amplitudes.len(),
                dw.len()
            )));
        }
        Ok(())
    }

    pub fn step_nonlocal(&mut self, state: &mut WaveState, dw: &[f64]) -> Result<()> {
        self.check_len(state, dw)?;
        let SimParams { tau, gamma, dt, .. } = self.params;
        let psi = &state.amplitudes;

        // Global reductions, fixed left-to-right order.
        let mut s4 = 0.0;
        let mut sb = 0.0;
        for (a, &w) in psi.iter().zip(dw) {
            let p = a.norm_sqr();
            s4 += p * p;
            sb += p * w;
        }

        let hop = Complex64::new(0.0, tau * dt);
        let half_gdt = 0.5 * gamma * dt;
        let sqrt_g = gamma.sqrt();
        let mut norm = 0.0;
        for (j, out) in self.scratch.iter_mut().enumerate() {
            let a = psi[j];
            let nb_sum = neighbor_sum(&self.neighbors, psi, j, self.geom.dim());
            let factor = 1.0 - half_gdt * (1.0 - 2.0 * a.norm_sqr() + s4) + sqrt_g * (dw[j] - sb);
            let next = a * factor + hop * nb_sum;
            norm += next.norm_sqr();
            *out = next;
        }
        self.finish(state, norm, true)
    }

    pub fn step_local(&mut self, state: &mut WaveState, dw: &[f64]) -> Result<()> {
        self.check_len(state, dw)?;
        let SimParams { tau, gamma, dt, .. } = self.params;
        let psi = &state.amplitudes;
        let hop = Complex64::new(0.0, tau * dt);
        let decay = 1.0 - 0.5 * gamma * dt;
        let sqrt_g = gamma.sqrt();
        let mut norm = 0.0;
        for (j, out) in self.scratch.iter_mut().enumerate() {
            let nb_sum = neighbor_sum(&self.neighbors, psi, j, self.geom.dim());
            let next = psi[j] * (decay + sqrt_g * dw[j]) + hop * nb_sum;
            norm += next.norm_sqr();
            *out = next;
        }
        let renormalize = self.params.renormalize_local;
        self.finish(state, norm, renormalize)
    }

    fn finish(&mut self, state: &mut WaveState, norm: f64, project: bool) -> Result<()> {
        let next_step = state.step + 1;
        if !norm.is_finite() {
            return Err(Error::BlowUp {
                step: next_step,
                trajectory_id: None,
                detail: format!("non-finite norm {norm}"),
            });
        }
        if project {
            if norm <= 0.0 {
                return Err(Error::BlowUp {
                    step: next_step,
                    trajectory_id: None,
                    detail: "state collapsed to zero norm".into(),
                });
            }
            let inv = 1.0 / norm.sqrt();
            for a in self.scratch.iter_mut() {
                *a *= inv;
            }
        }
        std::mem::swap(&mut state.amplitudes, &mut self.scratch);
        state.step = next_step;
        state.time = next_step as f64 * self.params.dt;
        Ok(())
    }
}

#[inline(always)]
fn sum_fixed<const Z: usize>(neighbors: &[u32], psi: &[Complex64], j: usize) -> Complex64 {
    let nb: &[u32; Z] = neighbors[j * Z..(j + 1) * Z].try_into().unwrap();
    let mut acc = Complex64::new(0.0, 0.0);
    for &k in nb {
        acc += psi[k as usize];
    }
    acc
}

/// Sum of the `2d` neighbour amplitudes of site `j`, in table order.
#[inline(always)]
fn neighbor_sum(neighbors: &[u32], psi: &[Complex64], j: usize, dim: usize) -> Complex64 {
    match dim {
        1 => sum_fixed::<2>(neighbors, psi, j),
        2 => sum_fixed::<4>(neighbors, psi, j),
        _ => sum_fixed::<6>(neighbors, psi, j),
    }
}

/// One non-local step on a copy of `state`.
pub fn step_nonlocal(
    geom: &LatticeGeometry,
    state: &WaveState,
    params: &SimParams,
    dw: &[f64],
) -> Result<WaveState> {
    let mut integ = Integrator::new(
        *geom,
        SimParams {
            model: Model::NonLocal,
            ..*params
        },
    )?;
    let mut next = state.clone();
    integ.step_nonlocal(&mut next, dw)?;
    Ok(next)
}

/// One local step on a copy of `state`.
pub fn step_local(
    geom: &LatticeGeometry,
    state: &WaveState,
    params: &SimParams,
    dw: &[f64],
) -> Result<WaveState> {
    let mut integ = Integrator::new(
        *geom,
        SimParams {
            model: Model::Local,
            ..*params
        },
    )?;
    let mut next = state.clone();
    integ.step_local(&mut next, dw)?;
    Ok(next)
}

/// Observable time series of a single trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub trajectory_id: u64,
    pub record_times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// `values[o][k]` is observable `o` at record time `k`.
    pub values: Vec<Vec<f64>>,
    pub floored_total: u64,
    pub final_state: WaveState,
}

/// Options for observable evaluation during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverConfig {
    pub floor: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            floor: observables::DEFAULT_FLOOR,
        }
    }
}

/// Index of the completed step nearest to time `t`.
pub fn step_index(t: f64, dt: f64) -> u64 {
    (t / dt).round() as u64
}

pub fn validate_record_times(record_times: &[f64], t_max: f64) -> Result<()> {
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::contract(format!("t_max must be >= 0, got {t_max}")));
    }
    for w in record_times.windows(2) {
        if !(w[1] >= w[0]) {
            return Err(Error::contract("record times must be sorted"));
        }
    }
    if let (Some(&first), Some(&last)) = (record_times.first(), record_times.last()) {
        if first < 0.0 || last > t_max * (1.0 + 1e-12) {
            return Err(Error::contract(format!(
                "record times must lie in [0, {t_max}]"
            )));
        }
    }
    Ok(())
}

/// Integrates one trajectory from the flat state to `t_max`, sampling
/// `observables` at the completed step nearest to each record time.
pub fn run_trajectory(
    geom: &LatticeGeometry,
    params: &SimParams,
    stream: &mut NoiseStream,
    t_max: f64,
    record_times: &[f64],
    observables: &[Observable],
    observer: ObserverConfig,
) -> Result<TrajectoryRecord> {
    validate_record_times(record_times, t_max)?;
    if observables.iter().any(|o| o.needs_height()) && !(params.gamma > 0.0) {
        return Err(Error::contract(
            "height-based observables require gamma > 0",
        ));
    }
    let trajectory_id = stream.trajectory_id();
    let mut integ = Integrator::new(*geom, *params)?;
    let mut state = uniform_initial_state(geom);
    let total_steps = step_index(t_max, params.dt);
    let mut dw = vec![0.0; geom.volume()];
    let mut values = vec![Vec::with_capacity(record_times.len()); observables.len()];
    let mut floored_total = 0;

    let mut next_record = 0;
    let record = |state: &WaveState, values: &mut Vec<Vec<f64>>, floored: &mut u64| {
        let eval = observables::evaluate(state, params.gamma, observer.floor, observables);
        *floored += eval.floored;
        for (slot, v) in values.iter_mut().zip(eval.values) {
            slot.push(v);
        }
    };

    loop {
        while next_record < record_times.len()
            && step_index(record_times[next_record], params.dt).min(total_steps) == state.step
        {
            record(&state, &mut values, &mut floored_total);
            next_record += 1;
        }
        if state.step >= total_steps {
            break;
        }
        stream
            .fill_step_increments(params.dt, &mut dw)
            .map_err(|e| e.with_trajectory(trajectory_id))?;
        integ
            .step(&mut state, &dw)
            .map_err(|e| e.with_trajectory(trajectory_id))?;
    }

    Ok(TrajectoryRecord {
        trajectory_id,
        record_times: record_times.to_vec(),
        observables: observables.to_vec(),
        values,
        floored_total,
        final_state: state,
    })
}
