//! One-loop renormalization-group flow of the complex stochastic heat equation
//! `dφ = (iD∇²φ − γ/2 φ) dt + √λ φ dη`.
//!
//! The quadratic part is not renormalized at one loop, which pins `z = 2` and
//! `χ + χ̄ + d = 0`; the mass then flows as `γ(l) = γ₀ e^{2l}`. The two quartic
//! couplings obey
//!
//! ```text
//! dλ¹/dl = (2 − d) λ¹ + K_d (λ¹)² / (γ + 2iDΛ²)
//! dλ²/dl = (2 − d) λ² + K_d (λ²)² / γ
//! ```
//!
//! with `K_d = Λ^d / (Γ(d/2) 2^{d−1} π^{d/2})`. The λ² equation has the closed
//! form implemented in [`lambda2_exact`], used as the oracle for the numerical
//! integrator.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dynamic exponent fixed by stationarity of the `∂_t` and `∇²` terms.
pub const DYNAMIC_EXPONENT: f64 = 2.0;

/// Coupling magnitude treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Relative slack below `r = 1` still classified as the critical (divergent) point.
pub const RATIO_TOLERANCE: f64 = 1e-12;

/// `χ + χ̄`, fixed to `−d`.
pub fn field_exponent_sum(d: u32) -> f64 {
    -(d as f64)
}

/// `Γ(d/2)` for a positive integer `d`, by recursion from `Γ(1) = 1`, `Γ(1/2) = √π`.
pub fn gamma_half_integer(d: u32) -> f64 {
    assert!(d >= 1, "Γ(d/2) needs d >= 1");
    let (mut value, mut x) = if d % 2 == 0 {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    let target = d as f64 / 2.0;
    while x < target {
        value *= x;
        x += 1.0;
    }
    value
}

/// Momentum-shell factor `K_d = Λ^d / (Γ(d/2) 2^{d−1} π^{d/2})`.
pub fn k_d(cutoff: f64, d: u32) -> f64 {
    let df = d as f64;
    cutoff.powi(d as i32) / (gamma_half_integer(d) * 2f64.powi(d as i32 - 1) * PI.powf(df / 2.0))
}

/// Continuum couplings of the lattice model: `D = b²τ`, `λ = γ b^d`.
pub fn map_continuum(tau: f64, gamma: f64, spacing: f64, d: u32) -> Result<(f64, f64)> {
    if !(spacing > 0.0) {
        return Err(Error::contract(format!(
            "lattice spacing must be > 0, got {spacing}"
        )));
    }
    Ok((spacing * spacing * tau, gamma * spacing.powi(d as i32)))
}

/// `γ(l) = γ₀ e^{2l}`.
pub fn gamma_of_l(gamma0: f64, l: f64) -> f64 {
    gamma0 * (2.0 * l).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RGParams {
    /// Initial λ¹ (complex in general).
    pub lambda1_0: Complex64,
    /// Initial λ² (real, positive).
    pub lambda2_0: f64,
    /// Bare mass γ₀.
    pub gamma0: f64,
    /// Diffusion constant D.
    pub diffusion: f64,
    /// Momentum cutoff Λ.
    pub cutoff: f64,
    pub dim: u32,
}

impl RGParams {
    /// Microscopic starting point with `λ¹ = λ² = λ`.
    pub fn symmetric(lambda: f64, gamma0: f64, diffusion: f64, cutoff: f64, dim: u32) -> Self {
        Self {
            lambda1_0: Complex64::new(lambda, 0.0),
            lambda2_0: lambda,
            gamma0,
            diffusion,
            cutoff,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) {
            return Err(Error::contract(format!(
                "gamma0 must be > 0, got {}",
                self.gamma0
            )));
        }
        if !(self.cutoff > 0.0) {
            return Err(Error::contract(format!(
                "cutoff must be > 0, got {}",
                self.cutoff
            )));
        }
        if !(self.lambda2_0 > 0.0) {
            return Err(Error::contract(format!(
                "lambda2_0 must be > 0, got {}",
                self.lambda2_0
            )));
        }
        if self.dim < 1 {
            return Err(Error::contract("dimension must be >= 1"));
        }
        if !self.diffusion.is_finite()
            || !self.lambda1_0.re.is_finite()
            || !self.lambda1_0.im.is_finite()
        {
            return Err(Error::contract("non-finite RG parameter"));
        }
        Ok(())
    }

    pub fn k_d(&self) -> f64 {
        k_d(self.cutoff, self.dim)
    }

    /// Control ratio `r = K_d λ₀² / (d γ₀)`.
    pub fn ratio(&self) -> f64 {
        self.k_d() * self.lambda2_0 / (self.dim as f64 * self.gamma0)
    }
}

/// Critical initial coupling `λ₀² = d γ₀ / K_d` (where `r = 1`).
pub fn critical_lambda2(d: u32, gamma0: f64, cutoff: f64) -> f64 {
    d as f64 * gamma0 / k_d(cutoff, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda2 {
    Finite(f64),
    /// The closed form's denominator has crossed zero; `pole` is where it vanishes.
    Diverged {
        pole: f64,
    },
}

/// Closed-form `λ²(l) = λ₀² e^{(2−d)l} / (1 − r (1 − e^{−dl}))`.
pub fn lambda2_exact(l: f64, params: &RGParams) -> Lambda2 {
    let d = params.dim as f64;
    let r = params.ratio();
    let denom = 1.0 - r * (1.0 - (-d * l).exp());
    if denom <= 0.0 {
        Lambda2::Diverged {
            pole: pole_location(r, params.dim).unwrap_or(l),
        }
    } else {
        Lambda2::Finite(params.lambda2_0 * ((2.0 - d) * l).exp() / denom)
    }
}

/// Finite pole `l* = −(1/d) ln(1 − 1/r)` of the closed form, defined for `r > 1`.
pub fn pole_location(r: f64, d: u32) -> Option<f64> {
    (r > 1.0).then(|| -(1.0 / d as f64) * (1.0 - 1.0 / r).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub l: f64,
    pub lambda1: Complex64,
    pub lambda2: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    Completed,
    DivergedAt(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    pub terminal: Terminal,
}

type State = [f64; 3];

fn axpy(a: &State, h: f64, k: &State) -> State {
    [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2]]
}

fn rk4_step(rhs: &impl Fn(f64, &State) -> State, l: f64, y: &State, h: f64) -> State {
    let k1 = rhs(l, y);
    let k2 = rhs(l + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = rhs(l + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = rhs(l + h, &axpy(y, h, &k3));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn exceeds(y: &State) -> bool {
    let m1 = y[0].hypot(y[1]);
    !(m1 < DIVERGENCE_THRESHOLD) || !(y[2].abs() < DIVERGENCE_THRESHOLD)
}

/// Fixed-step RK4 over `[0, l_max]` on the packed state `(Re λ¹, Im λ¹, λ²)`.
fn drive(
    rhs: impl Fn(f64, &State) -> State,
    init: State,
    gamma0: f64,
    l_max: f64,
    dl: f64,
) -> Result<FlowTrajectory> {
    if !(dl > 0.0) {
        return Err(Error::contract(format!("dl must be > 0, got {dl}")));
    }
    if !(l_max >= 0.0) || !l_max.is_finite() {
        return Err(Error::contract(format!("l_max must be >= 0, got {l_max}")));
    }
    let sample = |l: f64, y: &State| FlowSample {
        l,
        lambda1: Complex64::new(y[0], y[1]),
        lambda2: y[2],
        gamma: gamma_of_l(gamma0, l),
    };
    let steps = (l_max / dl - 1e-9).ceil().max(0.0) as u64;
    let mut samples = Vec::with_capacity(steps as usize + 1);
    let mut y = init;
    samples.push(sample(0.0, &y));
    for i in 0..steps {
        let l = i as f64 * dl;
        let h = dl.min(l_max - l);
        let next = rk4_step(&rhs, l, &y, h);
        if exceeds(&next) {
            // One bisection of the crossing step.
            let half = rk4_step(&rhs, l, &y, 0.5 * h);
            let l_star = if exceeds(&half) {
                l + 0.25 * h
            } else {
                l + 0.75 * h
            };
            return Ok(FlowTrajectory {
                samples,
                terminal: Terminal::DivergedAt(l_star),
            });
        }
        y = next;
        samples.push(sample(l + h, &y));
    }
    Ok(FlowTrajectory {
        samples,
        terminal: Terminal::Completed,
    })
}

/// Integrates the coupled complex λ¹ / real λ² flow with `γ(l) = γ₀e^{2l}`.
pub fn integrate_flow(params: &RGParams, l_max: f64, dl: f64) -> Result<FlowTrajectory> {
    params.validate()?;
    let d = params.dim as f64;
    let kd = params.k_d();
    let shift = 2.0 * params.diffusion * params.cutoff * params.cutoff;
    let g0 = params.gamma0;
    let rhs = move |l: f64, y: &State| -> State {
        let gamma = gamma_of_l(g0, l);
        let lam1 = Complex64::new(y[0], y[1]);
        let dlam1 = (2.0 - d) * lam1 + kd * lam1 * lam1 / Complex64::new(gamma, shift);
        let dlam2 = (2.0 - d) * y[2] + kd * y[2] * y[2] / gamma;
        [dlam1.re, dlam1.im, dlam2]
    };
    let init = [params.lambda1_0.re, params.lambda1_0.im, params.lambda2_0];
    drive(rhs, init, g0, l_max, dl)
}

/// Integrates the real/imaginary split form of the λ¹ flow with an explicit `D_e`:
///
/// ```text
/// dλ¹_R/dl = (2−d)λ¹_R + K_d ((λ¹_R² − λ¹_I²) γ + 2 D_e λ¹_R λ¹_I) / (γ² + D_e²)
/// dλ¹_I/dl = (2−d)λ¹_I + K_d ((λ¹_I² − λ¹_R²) D_e + 2 λ¹_R λ¹_I γ) / (γ² + D_e²)
/// ```
///
/// `D_e = 2DΛ²` reproduces [`integrate_flow`].
pub fn integrate_flow_split(
    params: &RGParams,
    de: f64,
    l_max: f64,
    dl: f64,
) -> Result<FlowTrajectory> {
    params.validate()?;
    if !de.is_finite() {
        return Err(Error::contract("D_e must be finite"));
    }
    let d = params.dim as f64;
    let kd = params.k_d();
    let g0 = params.gamma0;
    let rhs = move |l: f64, y: &State| -> State {
        let gamma = gamma_of_l(g0, l);
        let (re, im) = (y[0], y[1]);
        let den = gamma * gamma + de * de;
        let dre = (2.0 - d) * re + kd * ((re * re - im * im) * gamma + 2.0 * de * re * im) / den;
        let dim_ = (2.0 - d) * im + kd * ((im * im - re * re) * de + 2.0 * re * im * gamma) / den;
        let dlam2 = (2.0 - d) * y[2] + kd * y[2] * y[2] / gamma;
        [dre, dim_, dlam2]
    };
    let init = [params.lambda1_0.re, params.lambda1_0.im, params.lambda2_0];
    drive(rhs, init, g0, l_max, dl)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseClass {
    /// d = 1: λ² grows without bound for every starting point.
    AlwaysRough,
    /// `r ≥ 1`; `l_star` is the pole (infinite at `r = 1`).
    Divergent { l_star: f64 },
    /// d = 2, `r < 1`: λ² tends to `λ₀² / (1 − r)`.
    ConvergentFinite { limit: f64 },
    /// d ≥ 3, `r < 1`: λ² tends to zero.
    ConvergentZero,
}

impl PhaseClass {
    pub fn label(&self) -> &'static str {
        match self {
            PhaseClass::AlwaysRough => "always_rough",
            PhaseClass::Divergent { .. } => "divergent",
            PhaseClass::ConvergentFinite { .. } => "convergent_finite",
            PhaseClass::ConvergentZero => "convergent_zero",
        }
    }

    /// True for the rough (λ² → ∞) side.
    pub fn diverges(&self) -> bool {
        matches!(self, PhaseClass::AlwaysRough | PhaseClass::Divergent { .. })
    }
}

pub fn classify_phase(params: &RGParams) -> PhaseClass {
    if params.dim == 1 {
        return PhaseClass::AlwaysRough;
    }
    let r = params.ratio();
    // r is a product of rounded factors; a critical input may land an ulp below 1
    if r >= 1.0 - RATIO_TOLERANCE {
        PhaseClass::Divergent {
            l_star: pole_location(r, params.dim).unwrap_or(f64::INFINITY),
        }
    } else if params.dim == 2 {
        PhaseClass::ConvergentFinite {
            limit: params.lambda2_0 / (1.0 - r),
        }
    } else {
        PhaseClass::ConvergentZero
    }
}
