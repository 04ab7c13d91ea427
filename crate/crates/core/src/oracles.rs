//! Closed-form and semiclassical reference solutions used to cross-check the
//! full simulation: phase-space centroids under the first-order equations of
//! motion, the constant-phase closed forms, the thermal dephasing channel and
//! the randomized-benchmarking saturation law.
//!
//! Phase-space units: `x` in units of the zero-point width `x₀` and `p` in
//! units of `ħ/(2x₀)`, so the coherent amplitude is `α = (x + ip)/2`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, ONE, ZERO};
use crate::model::SystemParams;
use crate::propagator::StepPropagator;
use crate::pulse::PulseShape;

/// Initial Bloch vector with the x axis as zenith:
/// `⟨σx⟩ = cos θ`, `⟨σy⟩ = sin θ sin φ`, `⟨σz⟩ = sin θ cos φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochInit {
    pub theta: f64,
    pub phi_b: f64,
}

impl BlochInit {
    pub fn new(theta: f64, phi_b: f64) -> Self {
        Self { theta, phi_b }
    }

    pub fn bloch_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi_b.sin_cos();
        [ct, st * sp, st * cp]
    }

    /// Pure qubit state with this Bloch vector (global phase fixed by a real
    /// `|0⟩` amplitude).
    pub fn state(&self) -> [C64; 2] {
        let [x, y, z] = self.bloch_vector();
        let polar = z.clamp(-1.0, 1.0).acos();
        let azimuth = y.atan2(x);
        [C64::from((polar / 2.0).cos()), C64::from_polar((polar / 2.0).sin(), azimuth)]
    }

    /// Bloch parameters of a pure state.
    pub fn from_state(psi: &[C64; 2]) -> Self {
        let norm = psi[0].norm_sqr() + psi[1].norm_sqr();
        let off = psi[0].conj() * psi[1] / norm;
        let x = 2.0 * off.re;
        let y = 2.0 * off.im;
        let z = (psi[0].norm_sqr() - psi[1].norm_sqr()) / norm;
        Self { theta: x.clamp(-1.0, 1.0).acos(), phi_b: y.atan2(z) }
    }

    /// The tomography inputs `|0⟩, |1⟩, |+⟩, |+i⟩`.
    pub fn tomography() -> [Self; 4] {
        [Self::new(PI / 2.0, 0.0), Self::new(PI / 2.0, PI), Self::new(0.0, 0.0), Self::new(PI / 2.0, PI / 2.0)]
    }
}

/// Phase-space centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub const ORIGIN: Self = Self { x: 0.0, p: 0.0 };

    pub fn from_alpha(alpha: C64) -> Self {
        Self { x: 2.0 * alpha.re, p: 2.0 * alpha.im }
    }

    pub fn alpha(&self) -> C64 {
        C64::new(self.x, self.p) / 2.0
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.x - other.x).hypot(self.p - other.p)
    }
}

/// Centroid under the first-order equations of motion, starting from
/// `(x, p) = (0, 0)`.
pub fn semiclassical_trajectory(pulse: &PulseShape, params: &SystemParams, init: BlochInit, t_grid: &[f64]) -> Result<Vec<PhasePoint>> {
    semiclassical_trajectory_from(pulse, params, init, PhasePoint::ORIGIN, t_grid)
}

/// Centroid under the first-order equations of motion from an arbitrary
/// starting point. The Bloch vector follows the zeroth-order drive
/// (`ṙ = w × r`, `w = (Ω cos φ, Ω sin φ, δ)`) and the oscillator obeys
/// `ẋ = ωp`, `ṗ = −ωx − η ∂ₜ⟨σz⟩`. Integrated with classical RK4 on an
/// internal grid of at least 400 steps per fastest period.
pub fn semiclassical_trajectory_from(
    pulse: &PulseShape,
    params: &SystemParams,
    init: BlochInit,
    start: PhasePoint,
    t_grid: &[f64],
) -> Result<Vec<PhasePoint>> {
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidParameter("time grid must be nondecreasing and start at t ≥ 0".into()));
    }
    if let Some(&last) = t_grid.last() {
        if last > pulse.duration * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("t = {last} beyond pulse duration {}", pulse.duration)));
        }
    }
    let (omega, trap, eta, delta) = (params.omega_rabi, params.omega_trap, params.eta, params.detuning);
    let h_max = 2.0 * PI / omega.max(trap).max(delta.abs()) / 400.0;
    let deriv = |t: f64, s: &[f64; 5]| -> [f64; 5] {
        let phi = pulse.phase_unchecked(t.clamp(0.0, pulse.duration));
        let w = [omega * phi.cos(), omega * phi.sin(), delta];
        let r = [s[0], s[1], s[2]];
        let dr = [w[1] * r[2] - w[2] * r[1], w[2] * r[0] - w[0] * r[2], w[0] * r[1] - w[1] * r[0]];
        [dr[0], dr[1], dr[2], trap * s[4], -trap * s[3] - eta * dr[2]]
    };
    let [bx, by, bz] = init.bloch_vector();
    let mut state = [bx, by, bz, start.x, start.p];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let n = (span / h_max).ceil() as usize;
            let h = span / n as f64;
            for _ in 0..n {
                let k1 = deriv(t, &state);
                let k2 = deriv(t + h / 2.0, &add(&state, &k1, h / 2.0));
                let k3 = deriv(t + h / 2.0, &add(&state, &k2, h / 2.0));
                let k4 = deriv(t + h, &add(&state, &k3, h));
                for i in 0..5 {
                    state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                t += h;
            }
            t = target;
        }
        out.push(PhasePoint { x: state[3], p: state[4] });
    }
    Ok(out)
}

fn add(s: &[f64; 5], k: &[f64; 5], h: f64) -> [f64; 5] {
    std::array::from_fn(|i| s[i] + h * k[i])
}

fn check_off_resonance(xi: f64) -> Result<()> {
    if (xi - 1.0).abs() < 1e-6 {
        return Err(Error::DegenerateParameters(format!("trap and Rabi frequencies coincide (ξ = {xi})")));
    }
    Ok(())
}

/// Closed-form centroid under a constant-phase (`φ = 0`) drive at time `t`.
///
/// With `K = η sin θ ωΩ/(ω² − Ω²)`:
/// `x = K[sin(Ωt − φ) + sin φ cos ωt − (Ω/ω) cos φ sin ωt]` and
/// `p = K[(Ω/ω) cos(Ωt − φ) − sin φ sin ωt − (Ω/ω) cos φ cos ωt]`.
pub fn mossbauer_trajectory(params: &SystemParams, init: BlochInit, t: f64) -> Result<PhasePoint> {
    let (omega, trap) = (params.omega_rabi, params.omega_trap);
    check_off_resonance(trap / omega)?;
    let k = params.eta * init.theta.sin() * trap * omega / (trap * trap - omega * omega);
    let r = omega / trap;
    let (sp, cp) = init.phi_b.sin_cos();
    let x = k * ((omega * t - init.phi_b).sin() + sp * (trap * t).cos() - r * cp * (trap * t).sin());
    let p = k * (r * (omega * t - init.phi_b).cos() - sp * (trap * t).sin() - r * cp * (trap * t).cos());
    Ok(PhasePoint { x, p })
}

/// Centroid at the end of a constant-phase π/2 pulse (`T = π/(2Ω)`) as a
/// function of `ξ = ω/Ω`.
pub fn mossbauer_endpoint(xi: f64, eta: f64, init: BlochInit) -> Result<PhasePoint> {
    check_off_resonance(xi)?;
    let c = eta * init.theta.sin() / (xi * xi - 1.0);
    let (sp, cp) = init.phi_b.sin_cos();
    let (s, co) = (PI * xi / 2.0).sin_cos();
    Ok(PhasePoint { x: c * (xi * cp + xi * sp * co - cp * s), p: c * (sp - xi * sp * s - cp * co) })
}

/// `⟨|α(T)|²⟩` over the four tomography states after a constant-phase π/2
/// pulse: `(3/16)(ξ² − 2ξ sin(πξ/2) + 1)/(ξ² − 1)² · η²`.
pub fn mossbauer_alpha_sq_avg(xi: f64, eta: f64) -> Result<f64> {
    check_off_resonance(xi)?;
    Ok(3.0 / 16.0 * (xi * xi - 2.0 * xi * (PI * xi / 2.0).sin() + 1.0) / (xi * xi - 1.0).powi(2) * eta * eta)
}

/// Coherent state `|α⟩` truncated to `n_fock` levels.
pub fn coherent_state(alpha: C64, n_fock: usize) -> DVector<C64> {
    let mut v = DVector::from_element(n_fock, ZERO);
    let mut amp = C64::from((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..n_fock {
        if n > 0 {
            amp *= alpha / (n as f64).sqrt();
        }
        v[n] = amp;
    }
    v
}

/// Fock state `|n⟩`.
pub fn fock_state(n: usize, n_fock: usize) -> DVector<C64> {
    let mut v = DVector::from_element(n_fock, ZERO);
    v[n] = ONE;
    v
}

/// `|q⟩ ⊗ |m⟩` in the joint ordering (qubit index slow).
pub fn product_state(qubit: &[C64; 2], motion: &DVector<C64>) -> DVector<C64> {
    let nf = motion.len();
    DVector::from_fn(2 * nf, |r, _| qubit[r / nf] * motion[r % nf])
}

/// Centroid `⟨a⟩` of a joint state, as a phase point.
pub fn joint_centroid(psi: &DVector<C64>, n_fock: usize) -> PhasePoint {
    let mut a = ZERO;
    for q in 0..2 {
        for n in 1..n_fock {
            a += psi[q * n_fock + n - 1].conj() * psi[q * n_fock + n] * (n as f64).sqrt();
        }
    }
    PhasePoint::from_alpha(a)
}

/// Centroid of the fully simulated state at the end of every `record_every`
/// steps (and at `t = 0`). Returns `(t, point)` pairs.
pub fn simulated_centroid(
    pulse: &PulseShape,
    params: &SystemParams,
    initial: &DVector<C64>,
    n_steps: usize,
    record_every: usize,
) -> Result<Vec<(f64, PhasePoint)>> {
    let nf = params.n_fock;
    if initial.len() != 2 * nf {
        return Err(Error::InvalidDimension(format!("state of length {} for n_fock {nf}", initial.len())));
    }
    let dt = pulse.duration / n_steps as f64;
    let step = StepPropagator::new(params, dt, true)?;
    let phases = pulse.midpoint_phases(n_steps);
    let mut x = ComplexMatrix::from_column_slice(2 * nf, 1, initial.as_slice());
    let mut scratch = x.clone();
    let every = record_every.max(1);
    let mut out = vec![(0.0, joint_centroid(initial, nf))];
    for (k, &phi) in phases.iter().enumerate() {
        step.apply(phi, &mut x, &mut scratch);
        if (k + 1) % every == 0 || k + 1 == n_steps {
            let v = DVector::from_column_slice(x.as_slice());
            out.push(((k + 1) as f64 * dt, joint_centroid(&v, nf)));
        }
    }
    Ok(out)
}

/// Dephasing channel of `exp(iθ/2 a†a σₙ)` on a thermal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalChannel {
    /// χ in the basis `(σ₀, σₙ)`.
    pub chi: [[C64; 2]; 2],
    /// `χ± = ½(1 ± p₀|z|)`, `z = 1/(1 − δp e^{iθ})`.
    pub eigenvalues: [f64; 2],
    /// `(1/3)(1 − p₀|z|)`.
    pub j_ent: f64,
}

pub fn thermal_channel(theta: f64, n_axis: [f64; 3], p0: f64) -> Result<ThermalChannel> {
    let norm = n_axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("rotation axis must be a unit vector, |n| = {norm}")));
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("p0 must lie in (0, 1], got {p0}")));
    }
    let dp = 1.0 - p0;
    let z = ONE / (ONE - C64::from_polar(dp, theta));
    let h = p0 / 2.0;
    let chi = [
        [C64::from(0.5 + h * z.re), C64::new(0.0, -h * z.im)],
        [C64::new(0.0, h * z.im), C64::from(0.5 - h * z.re)],
    ];
    let m = p0 * z.norm();
    Ok(ThermalChannel { chi, eigenvalues: [0.5 * (1.0 + m), 0.5 * (1.0 - m)], j_ent: (1.0 - m) / 3.0 })
}

/// Leading small-angle behaviour of the thermal `J_ent`: `δp θ²/(6p₀²)`.
pub fn thermal_j_ent_small_angle(theta: f64, p0: f64) -> f64 {
    (1.0 - p0) * theta * theta / (6.0 * p0 * p0)
}

/// Leading behaviour in `δp` at fixed θ: `(2/3) sin²(θ/2) δp`.
pub fn thermal_j_ent_first_order(theta: f64, p0: f64) -> f64 {
    2.0 / 3.0 * (theta / 2.0).sin().powi(2) * (1.0 - p0)
}

/// Haar density of the SU(2) rotation angle on `[0, 2π]`.
pub fn haar_theta_pdf(theta: f64) -> f64 {
    (theta / 2.0).sin().powi(2) / PI
}

/// Cumulative distribution of [`haar_theta_pdf`].
pub fn haar_theta_cdf(theta: f64) -> f64 {
    let t = theta.clamp(0.0, 2.0 * PI);
    (t - t.sin()) / (2.0 * PI)
}

/// Entanglement infidelity to first order in `1 − p₀` for a two-level
/// mixture `p₀ρ + (1−p₀)U_rρU_r†` with rotation angle θ.
pub fn rb_j_ent_theta(theta: f64, p0: f64) -> f64 {
    2.0 / 3.0 * (1.0 - p0) * (theta / 2.0).sin().powi(2)
}

/// Exact entanglement infidelity of the same mixture:
/// `(1/3)(1 − √(1 − 4p₀(1−p₀) sin²(θ/2)))`.
pub fn rb_j_ent_theta_exact(theta: f64, p0: f64) -> f64 {
    let s2 = (theta / 2.0).sin().powi(2);
    (1.0 - (1.0 - 4.0 * p0 * (1.0 - p0) * s2).max(0.0).sqrt()) / 3.0
}

/// Haar average of [`rb_j_ent_theta`]: `(1 − p₀)/2`.
pub fn rb_saturation(p0: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("p0 must lie in (0, 1], got {p0}")));
    }
    Ok((1.0 - p0) / 2.0)
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Haar average of [`rb_j_ent_theta_exact`].
pub fn rb_saturation_exact(p0: f64) -> f64 {
    simpson(|t| rb_j_ent_theta_exact(t, p0) * haar_theta_pdf(t), 0.0, 2.0 * PI, 4000)
}
