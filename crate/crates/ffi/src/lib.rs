//! C ABI for single trajectories, ensembles and the RG flow solver.
//!
//! Every fallible function returns a [`WalkerStatus`]; on failure the message
//! is available from [`walker_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. Panics never
//! cross the boundary: they are reported as `WALKER_STATUS_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use num_complex::Complex64;
use walker_core::dynamics::checkpoint::Checkpoint;
use walker_core::dynamics::{self, Integrator, Model, ObserverConfig, SimParams, WaveState};
use walker_core::ensemble::{self, EnsembleSpec};
use walker_core::lattice::LatticeGeometry;
use walker_core::noise::NoiseStream;
use walker_core::observables::{self, Observable};
use walker_core::rgflow::{self, FlowTrajectory, PhaseClass, RGParams, Terminal};
use walker_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkerStatus {
    Ok = 0,
    ErrNull = 1,
    ErrInvalid = 2,
    ErrRuntime = 3,
    ErrIo = 4,
    ErrPanic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkerModel {
    NonLocal = 0,
    Local = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkerPhase {
    AlwaysRough = 0,
    Divergent = 1,
    ConvergentFinite = 2,
    ConvergentZero = 3,
}

/// Parameters of one trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WalkerSimParams {
    pub dim: u32,
    pub n: u64,
    pub tau: f64,
    pub gamma: f64,
    pub dt: f64,
    pub model: WalkerModel,
    pub renormalize_local: bool,
    pub base_seed: u64,
    pub trajectory_id: u64,
    /// Floor on `|ψ|²` inside logarithms; `<= 0` selects the default.
    pub floor: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WalkerObservables {
    pub width: f64,
    pub ipr: f64,
    pub mean_height: f64,
    /// Sites clipped at the floor in this evaluation.
    pub floored: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WalkerRgParams {
    pub lambda1_re: f64,
    pub lambda1_im: f64,
    pub lambda2: f64,
    pub gamma0: f64,
    pub diffusion: f64,
    pub cutoff: f64,
    pub dim: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WalkerRgSample {
    pub l: f64,
    pub lambda1_re: f64,
    pub lambda1_im: f64,
    pub lambda2: f64,
    pub gamma: f64,
}

/// One trajectory: lattice, integrator, state and its private noise stream.
pub struct WalkerSimulator {
    geometry: LatticeGeometry,
    integrator: Integrator,
    state: WaveState,
    stream: NoiseStream,
    dw: Vec<f64>,
    floor: f64,
}

/// An integrated RG flow trajectory.
pub struct WalkerRgFlow {
    flow: FlowTrajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WalkerStatus {
    match e.exit_code() {
        2 => WalkerStatus::ErrInvalid,
        3 => WalkerStatus::ErrRuntime,
        _ => WalkerStatus::ErrIo,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (WalkerStatus, String)>) -> WalkerStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WalkerStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            WalkerStatus::ErrPanic
        }
    }
}

fn core(e: Error) -> (WalkerStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (WalkerStatus, String) {
    (WalkerStatus::ErrNull, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (WalkerStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (WalkerStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (WalkerStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (WalkerStatus::ErrInvalid, "path is not UTF-8".to_string()))
}

fn sim_params(p: &WalkerSimParams) -> Result<(LatticeGeometry, SimParams), (WalkerStatus, String)> {
    let geometry = LatticeGeometry::new(p.dim as usize, p.n as usize).map_err(core)?;
    let model = match p.model {
        WalkerModel::NonLocal => Model::NonLocal,
        WalkerModel::Local => Model::Local,
    };
    let mut params = SimParams::new(p.tau, p.gamma, p.dt, model);
    params.renormalize_local = p.renormalize_local;
    params.validate(geometry.dim()).map_err(core)?;
    Ok((geometry, params))
}

fn floor_of(p: &WalkerSimParams) -> f64 {
    if p.floor > 0.0 {
        p.floor
    } else {
        observables::DEFAULT_FLOOR
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn walker_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn walker_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a trajectory in the uniform initial state.
///
/// # Safety
/// `params` must point to a valid struct and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_new(
    params: *const WalkerSimParams,
    out: *mut *mut WalkerSimulator,
) -> WalkerStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let out = deref_mut(out, "out")?;
        let (geometry, sp) = sim_params(p)?;
        let sim = WalkerSimulator {
            geometry,
            integrator: Integrator::new(geometry, sp).map_err(core)?,
            state: dynamics::uniform_initial_state(&geometry),
            stream: NoiseStream::new(p.base_seed, p.trajectory_id),
            dw: vec![0.0; geometry.volume()],
            floor: floor_of(p),
        };
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// Restores a trajectory from a checkpoint file. `params` supplies the rates,
/// which must describe the same lattice and model as the checkpoint.
///
/// # Safety
/// Pointers must be valid; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_restore(
    params: *const WalkerSimParams,
    path: *const c_char,
    out: *mut *mut WalkerSimulator,
) -> WalkerStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let out = deref_mut(out, "out")?;
        let path = path_arg(path)?;
        let (geometry, sp) = sim_params(p)?;
        let file = std::fs::File::open(&path).map_err(|e| core(Error::io(&path, e)))?;
        let ck = Checkpoint::read_from(std::io::BufReader::new(file)).map_err(core)?;
        if ck.geometry != geometry || ck.model != sp.model {
            return Err((
                WalkerStatus::ErrInvalid,
                "checkpoint lattice or model differs from params".to_string(),
            ));
        }
        let sim = WalkerSimulator {
            geometry,
            integrator: Integrator::new(geometry, sp).map_err(core)?,
            stream: ck.noise_stream(),
            state: ck.state,
            dw: vec![0.0; geometry.volume()],
            floor: floor_of(p),
        };
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_free(sim: *mut WalkerSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances the trajectory by `steps` Euler–Maruyama steps.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_step(
    sim: *mut WalkerSimulator,
    steps: u64,
) -> WalkerStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        let dt = s.integrator.params().dt;
        let id = s.stream.trajectory_id();
        for _ in 0..steps {
            s.stream.fill_step_increments(dt, &mut s.dw).map_err(core)?;
            s.integrator
                .step(&mut s.state, &s.dw)
                .map_err(|e| core(e.with_trajectory(id)))?;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_time(
    sim: *const WalkerSimulator,
    out: *mut f64,
) -> WalkerStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(sim, "sim")?.state.time;
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_volume(
    sim: *const WalkerSimulator,
    out: *mut u64,
) -> WalkerStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(sim, "sim")?.geometry.volume() as u64;
        Ok(())
    })
}

/// Copies the amplitudes as interleaved `(re, im)` pairs; `len` is the
/// buffer length in doubles and must be at least `2 * volume`.
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_amplitudes(
    sim: *const WalkerSimulator,
    buf: *mut f64,
    len: usize,
) -> WalkerStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let amps = &s.state.amplitudes;
        if len < 2 * amps.len() {
            return Err((
                WalkerStatus::ErrInvalid,
                format!("buffer holds {len} doubles, need {}", 2 * amps.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, 2 * amps.len());
        for (pair, a) in out.chunks_exact_mut(2).zip(amps) {
            pair[0] = a.re;
            pair[1] = a.im;
        }
        Ok(())
    })
}

/// Width, IPR and mean height of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_observables(
    sim: *const WalkerSimulator,
    out: *mut WalkerObservables,
) -> WalkerStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        let out = deref_mut(out, "out")?;
        let gamma = s.integrator.params().gamma;
        if !(gamma > 0.0) {
            return Err((
                WalkerStatus::ErrInvalid,
                "height observables need gamma > 0".to_string(),
            ));
        }
        let ev = observables::evaluate(
            &s.state,
            gamma,
            s.floor,
            &[Observable::Width, Observable::Ipr, Observable::MeanHeight],
        );
        *out = WalkerObservables {
            width: ev.values[0],
            ipr: ev.values[1],
            mean_height: ev.values[2],
            floored: ev.floored,
        };
        Ok(())
    })
}

/// Writes a binary checkpoint (state plus noise position).
///
/// # Safety
/// `sim` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn walker_simulator_save_checkpoint(
    sim: *const WalkerSimulator,
    path: *const c_char,
) -> WalkerStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        let path = path_arg(path)?;
        let ck = Checkpoint::capture(s.geometry, s.integrator.params().model, &s.state, &s.stream);
        std::fs::write(&path, ck.to_bytes()).map_err(|e| core(Error::io(&path, e)))
    })
}

/// Runs `trajectories` trajectories (ids `0..trajectories`) and writes, for
/// each record time, the ensemble mean and standard error of width, IPR and
/// mean height. Output arrays hold `3 * n_times` doubles laid out as
/// `[observable][time]`; a standard error that is undefined (one trajectory)
/// is written as NaN.
///
/// # Safety
/// `record_times` must hold `n_times` doubles; `means` and `stderrs` must
/// hold `3 * n_times` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn walker_ensemble_run(
    params: *const WalkerSimParams,
    trajectories: u64,
    t_max: f64,
    record_times: *const f64,
    n_times: usize,
    workers: u32,
    means: *mut f64,
    stderrs: *mut f64,
) -> WalkerStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if n_times > 0 && (record_times.is_null() || means.is_null() || stderrs.is_null()) {
            return Err(null("array argument"));
        }
        let (geometry, sp) = sim_params(p)?;
        let times = if n_times == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(record_times, n_times).to_vec()
        };
        let obs = [Observable::Width, Observable::Ipr, Observable::MeanHeight];
        let spec = EnsembleSpec {
            geometry,
            params: sp,
            base_seed: p.base_seed,
            trajectories,
            t_max,
            record_times: times,
            observables: obs.to_vec(),
            observer: ObserverConfig { floor: floor_of(p) },
        };
        let series = ensemble::run_ensemble(&spec, workers as usize).map_err(core)?;
        if n_times == 0 {
            return Ok(());
        }
        let m = std::slice::from_raw_parts_mut(means, 3 * n_times);
        let e = std::slice::from_raw_parts_mut(stderrs, 3 * n_times);
        for (o, row) in series.stats.iter().enumerate() {
            for (k, st) in row.iter().enumerate() {
                m[o * n_times + k] = st.mean;
                e[o * n_times + k] = st.stderr().unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

fn rg_params(p: &WalkerRgParams) -> Result<RGParams, (WalkerStatus, String)> {
    let params = RGParams {
        lambda1_0: Complex64::new(p.lambda1_re, p.lambda1_im),
        lambda2_0: p.lambda2,
        gamma0: p.gamma0,
        diffusion: p.diffusion,
        cutoff: p.cutoff,
        dim: p.dim,
    };
    params.validate().map_err(core)?;
    Ok(params)
}

/// `K_d = Λ^d / (Γ(d/2) 2^{d−1} π^{d/2})`; NaN for `d = 0`.
#[no_mangle]
pub extern "C" fn walker_rg_k_d(cutoff: f64, dim: u32) -> f64 {
    if dim == 0 {
        return f64::NAN;
    }
    rgflow::k_d(cutoff, dim)
}

/// Phase of the closed-form λ^II flow. `value` receives the pole `l*`
/// (divergent phases, `+inf` when there is none), the finite limit
/// (`ConvergentFinite`) or 0 (`ConvergentZero`).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn walker_rg_classify(
    params: *const WalkerRgParams,
    phase: *mut WalkerPhase,
    value: *mut f64,
) -> WalkerStatus {
    guard(|| {
        let rp = rg_params(deref(params, "params")?)?;
        let phase = deref_mut(phase, "phase")?;
        let value = deref_mut(value, "value")?;
        (*phase, *value) = match rgflow::classify_phase(&rp) {
            PhaseClass::AlwaysRough => (
                WalkerPhase::AlwaysRough,
                rgflow::pole_location(rp.ratio(), rp.dim).unwrap_or(f64::INFINITY),
            ),
            PhaseClass::Divergent { l_star } => (WalkerPhase::Divergent, l_star),
            PhaseClass::ConvergentFinite { limit } => (WalkerPhase::ConvergentFinite, limit),
            PhaseClass::ConvergentZero => (WalkerPhase::ConvergentZero, 0.0),
        };
        Ok(())
    })
}

/// Integrates the coupled flow from `l = 0` to `l_max` with RK4 step `dl`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn walker_rg_integrate(
    params: *const WalkerRgParams,
    l_max: f64,
    dl: f64,
    out: *mut *mut WalkerRgFlow,
) -> WalkerStatus {
    guard(|| {
        let rp = rg_params(deref(params, "params")?)?;
        let out = deref_mut(out, "out")?;
        let flow = rgflow::integrate_flow(&rp, l_max, dl).map_err(core)?;
        *out = Box::into_raw(Box::new(WalkerRgFlow { flow }));
        Ok(())
    })
}

/// # Safety
/// `flow` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn walker_rg_flow_free(flow: *mut WalkerRgFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Number of stored samples (0 for a null handle).
///
/// # Safety
/// `flow` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn walker_rg_flow_len(flow: *const WalkerRgFlow) -> usize {
    flow.as_ref().map_or(0, |f| f.flow.samples.len())
}

/// # Safety
/// `flow` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn walker_rg_flow_sample(
    flow: *const WalkerRgFlow,
    index: usize,
    out: *mut WalkerRgSample,
) -> WalkerStatus {
    guard(|| {
        let f = deref(flow, "flow")?;
        let out = deref_mut(out, "out")?;
        let s = f.flow.samples.get(index).ok_or_else(|| {
            (
                WalkerStatus::ErrInvalid,
                format!(
                    "sample {index} out of range ({} samples)",
                    f.flow.samples.len()
                ),
            )
        })?;
        *out = WalkerRgSample {
            l: s.l,
            lambda1_re: s.lambda1.re,
            lambda1_im: s.lambda1.im,
            lambda2: s.lambda2,
            gamma: s.gamma,
        };
        Ok(())
    })
}

/// `diverged` is set to 1 if the couplings crossed the overflow threshold,
/// with `l_end` the refined crossing scale; otherwise 0 and the last `l`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn walker_rg_flow_terminal(
    flow: *const WalkerRgFlow,
    diverged: *mut i32,
    l_end: *mut f64,
) -> WalkerStatus {
    guard(|| {
        let f = deref(flow, "flow")?;
        let diverged = deref_mut(diverged, "diverged")?;
        let l_end = deref_mut(l_end, "l_end")?;
        match f.flow.terminal {
            Terminal::Completed => {
                *diverged = 0;
                *l_end = f.flow.samples.last().map_or(0.0, |s| s.l);
            }
            Terminal::DivergedAt(l) => {
                *diverged = 1;
                *l_end = l;
            }
        }
        Ok(())
    })
}
