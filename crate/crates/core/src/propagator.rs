//! Time-ordered propagation of the joint Hamiltonian with the midpoint rule.
//!
//! The drive phase enters only through a frame rotation,
//! `H(φ) = R(φ) H(0) R(φ)†` with `R(φ) = Rz(φ) ⊗ I`, so every step
//! `exp(−iH(φ_k)Δt) = R(φ_k) E R(φ_k)†` reuses one exponential
//! `E = exp(−iH(0)Δt)` and costs a single matrix product.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{build_operators, gemm_into, hermitian_exponential, kron, rz, ComplexMatrix, JointOperator, Mat2, C64, ONE};
use crate::model::{hamiltonian_exact, hamiltonian_expanded, SystemParams};
use crate::pulse::PulseShape;

/// Population allowed in the two highest Fock levels after propagation.
pub const LEAKAGE_LIMIT: f64 = 1e-8;
/// Fock levels added when the leakage guard trips.
pub const FOCK_ESCALATION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Number of time steps; `None` selects [`default_n_steps`].
    pub n_steps: Option<usize>,
    /// Target for the step-halving difference.
    pub tolerance: f64,
    pub use_exact_hamiltonian: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { n_steps: None, tolerance: 1e-9, use_exact_hamiltonian: true }
    }
}

impl PropagationConfig {
    pub fn with_steps(n_steps: usize) -> Self {
        Self { n_steps: Some(n_steps), ..Self::default() }
    }

    pub fn steps_for(&self, pulse: &PulseShape, params: &SystemParams) -> Result<usize> {
        let n = self.n_steps.unwrap_or_else(|| default_n_steps(pulse, params));
        if n < 16 {
            return Err(Error::InvalidParameter(format!("n_steps must be at least 16, got {n}")));
        }
        Ok(n)
    }
}

/// Default grid: at least 256 steps, 40 per period of the fastest of Ω and ω,
/// and 20 per Fourier harmonic of the phase.
pub fn default_n_steps(pulse: &PulseShape, params: &SystemParams) -> usize {
    let fastest = params.omega_rabi.max(params.omega_trap);
    let by_freq = (40.0 * pulse.duration * fastest / (2.0 * PI)).ceil() as usize;
    256.max(by_freq).max(20 * pulse.n_c)
}

/// Cached step exponential for one parameter set and step length.
#[derive(Debug, Clone)]
pub struct StepPropagator {
    n_fock: usize,
    dt: f64,
    step: ComplexMatrix,
    step_adj: ComplexMatrix,
}

impl StepPropagator {
    pub fn new(params: &SystemParams, dt: f64, exact: bool) -> Result<Self> {
        params.validate()?;
        let ops = build_operators(params.n_fock, params.eta)?;
        let h = if exact { hamiltonian_exact(params, 0.0, &ops)? } else { hamiltonian_expanded(params, 0.0, &ops, 2)? };
        let step = hermitian_exponential(h.matrix(), C64::new(0.0, -dt))?;
        let step_adj = step.adjoint();
        Ok(Self { n_fock: params.n_fock, dt, step, step_adj })
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn dim(&self) -> usize {
        2 * self.n_fock
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Scale the qubit-0 rows by `z` and the qubit-1 rows by `conj(z)`.
    fn rotate_rows(&self, x: &mut ComplexMatrix, z: C64) {
        let nf = self.n_fock;
        let zc = z.conj();
        for mut col in x.column_iter_mut() {
            for v in col.rows_mut(0, nf).iter_mut() {
                *v *= z;
            }
            for v in col.rows_mut(nf, nf).iter_mut() {
                *v *= zc;
            }
        }
    }

    fn apply_with(&self, e: &ComplexMatrix, phi: f64, x: &mut ComplexMatrix, scratch: &mut ComplexMatrix) {
        // R(φ) = diag(e^{−iφ/2}, e^{iφ/2}) ⊗ I.
        let r = C64::from_polar(1.0, -phi / 2.0);
        self.rotate_rows(x, r.conj());
        gemm_into(scratch, e, x);
        std::mem::swap(x, scratch);
        self.rotate_rows(x, r);
    }

    /// `X ← exp(−iH(φ)Δt) X`.
    pub fn apply(&self, phi: f64, x: &mut ComplexMatrix, scratch: &mut ComplexMatrix) {
        self.apply_with(&self.step, phi, x, scratch);
    }

    /// `X ← exp(−iH(φ)Δt)† X`.
    pub fn apply_adjoint(&self, phi: f64, x: &mut ComplexMatrix, scratch: &mut ComplexMatrix) {
        self.apply_with(&self.step_adj, phi, x, scratch);
    }

    /// Apply the steps for `phases` in temporal order.
    pub fn propagate(&self, phases: &[f64], x: &mut ComplexMatrix) {
        let mut scratch = ComplexMatrix::zeros(x.nrows(), x.ncols());
        for &phi in phases {
            self.apply(phi, x, &mut scratch);
        }
    }

    /// Adjoint-method gradient. Given the propagated columns `y` (after all
    /// steps) and `g = ∂f/∂conj(Y)` in the convention `δf = Re Σ conj(G)·δY`,
    /// returns `∂f/∂φ_k` for every step.
    pub fn phase_gradient(&self, phases: &[f64], y: &ComplexMatrix, g: &ComplexMatrix) -> Vec<f64> {
        let nf = self.n_fock;
        let n = phases.len();
        let mut x = y.clone();
        let mut lam = g.clone();
        let mut scratch = ComplexMatrix::zeros(x.nrows(), x.ncols());
        // a = Tr(Λ† S X) with S = σz ⊗ I.
        let overlap = |lam: &ComplexMatrix, x: &ComplexMatrix| -> f64 {
            let mut acc = C64::new(0.0, 0.0);
            for (lc, xc) in lam.column_iter().zip(x.column_iter()) {
                for r in 0..nf {
                    acc += lc[r].conj() * xc[r];
                }
                for r in nf..2 * nf {
                    acc -= lc[r].conj() * xc[r];
                }
            }
            acc.im
        };
        let mut grad = vec![0.0; n];
        let mut a_after = overlap(&lam, &x);
        for k in (0..n).rev() {
            self.apply_adjoint(phases[k], &mut x, &mut scratch);
            self.apply_adjoint(phases[k], &mut lam, &mut scratch);
            let a_before = overlap(&lam, &x);
            // dU/dφ = (i/2)[U, S] for R(φ) = exp(−iφS/2).
            grad[k] = 0.5 * (a_after - a_before);
            a_after = a_before;
        }
        grad
    }
}

/// Columns of the identity on the joint space for inputs `|q⟩|n⟩`,
/// `q ∈ {0,1}`, `n ≤ n_max`, ordered `(0,0..n_max), (1,0..n_max)`.
pub fn tomography_columns(n_fock: usize, n_max: usize) -> Vec<usize> {
    (0..2).flat_map(|q| (0..=n_max).map(move |n| q * n_fock + n)).collect()
}

fn identity_columns(dim: usize, cols: &[usize]) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(dim, cols.len());
    for (j, &c) in cols.iter().enumerate() {
        x[(c, j)] = ONE;
    }
    x
}

/// Largest population in the two highest Fock levels over the columns.
pub fn top_level_population(x: &ComplexMatrix, n_fock: usize) -> f64 {
    x.column_iter()
        .map(|col| {
            [n_fock - 2, n_fock - 1, 2 * n_fock - 2, 2 * n_fock - 1].iter().map(|&r| col[r].norm_sqr()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn leakage_error(pop: f64, n_fock: usize) -> Error {
    Error::Truncation(format!("population {pop:.3e} in the top Fock levels at n_fock = {n_fock} after escalation"))
}

/// Runs `attempt` at the configured cutoff and, if the leakage guard trips,
/// once more with `FOCK_ESCALATION` extra levels.
fn with_escalation<T>(params: &SystemParams, mut attempt: impl FnMut(&SystemParams) -> Result<(T, f64)>) -> Result<T> {
    let (out, pop) = attempt(params)?;
    if pop <= LEAKAGE_LIMIT {
        return Ok(out);
    }
    log::warn!("leakage {pop:.3e} at n_fock = {}; escalating", params.n_fock);
    let bigger = params.with_n_fock(params.n_fock + FOCK_ESCALATION)?;
    let (out, pop) = attempt(&bigger)?;
    if pop <= LEAKAGE_LIMIT {
        Ok(out)
    } else {
        Err(leakage_error(pop, bigger.n_fock))
    }
}

fn check_pulse(pulse: &PulseShape) -> Result<()> {
    pulse.validate()
}

/// Full joint unitary of a pulse. The returned operator may carry a larger
/// Fock cutoff than `params` if the leakage guard escalated.
pub fn evolve(pulse: &PulseShape, params: &SystemParams, cfg: &PropagationConfig) -> Result<JointOperator> {
    check_pulse(pulse)?;
    let n_steps = cfg.steps_for(pulse, params)?;
    with_escalation(params, |p| {
        let u = evolve_fixed(pulse, p, n_steps, cfg.use_exact_hamiltonian)?;
        let cols = tomography_columns(p.n_fock, p.n_thermal_max);
        let sub = u.matrix().select_columns(cols.iter());
        let pop = top_level_population(&sub, p.n_fock);
        Ok((u, pop))
    })
}

/// Full joint unitary at a fixed cutoff and step count, without the guard.
pub fn evolve_fixed(pulse: &PulseShape, params: &SystemParams, n_steps: usize, exact: bool) -> Result<JointOperator> {
    let prop = StepPropagator::new(params, pulse.duration / n_steps as f64, exact)?;
    let d = prop.dim();
    let mut x = ComplexMatrix::identity(d, d);
    prop.propagate(&pulse.midpoint_phases(n_steps), &mut x);
    JointOperator::new(params.n_fock, x)
}

/// Propagated tomography columns (see [`tomography_columns`]) together with
/// the cutoff they were computed at.
pub fn evolve_columns(pulse: &PulseShape, params: &SystemParams, cfg: &PropagationConfig) -> Result<(ComplexMatrix, usize)> {
    check_pulse(pulse)?;
    let n_steps = cfg.steps_for(pulse, params)?;
    with_escalation(params, |p| {
        let prop = StepPropagator::new(p, pulse.duration / n_steps as f64, cfg.use_exact_hamiltonian)?;
        let mut x = identity_columns(prop.dim(), &tomography_columns(p.n_fock, p.n_thermal_max));
        prop.propagate(&pulse.midpoint_phases(n_steps), &mut x);
        let pop = top_level_population(&x, p.n_fock);
        Ok(((x, p.n_fock), pop))
    })
}

/// `max |U(n) − U(2n)|` over the tomography columns.
pub fn step_halving_error(pulse: &PulseShape, params: &SystemParams, n_steps: usize, exact: bool) -> Result<f64> {
    let cfg1 = PropagationConfig { n_steps: Some(n_steps), tolerance: 0.0, use_exact_hamiltonian: exact };
    let cfg2 = PropagationConfig { n_steps: Some(2 * n_steps), ..cfg1 };
    let (a, _) = evolve_columns(pulse, params, &cfg1)?;
    let (b, _) = evolve_columns(pulse, params, &cfg2)?;
    if a.shape() != b.shape() {
        return Err(Error::NumericalConsistency("cutoff changed between step counts".into()));
    }
    Ok(crate::linalg::max_abs_diff(&a, &b))
}

/// Element of a gate program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Pulse(PulseShape),
    /// Instantaneous `exp(−iθσz/2) ⊗ I`.
    ZRotation { angle: f64 },
    /// Laser off: only the trap acts.
    FreeEvolution { duration: f64 },
}

/// `q ⊗ I` for a qubit operator.
pub fn qubit_operator(q: &Mat2, n_fock: usize) -> JointOperator {
    kron(q, &ComplexMatrix::identity(n_fock, n_fock)).expect("square identity")
}

fn free_evolution(params: &SystemParams, duration: f64) -> JointOperator {
    let nf = params.n_fock;
    let mut m = ComplexMatrix::zeros(2 * nf, 2 * nf);
    for q in 0..2 {
        for n in 0..nf {
            m[(q * nf + n, q * nf + n)] = C64::from_polar(1.0, -params.omega_trap * duration * n as f64);
        }
    }
    JointOperator::new(nf, m).expect("square")
}

/// Product of the segment unitaries in temporal order.
pub fn evolve_sequence(segments: &[Segment], params: &SystemParams, cfg: &PropagationConfig) -> Result<JointOperator> {
    if segments.is_empty() {
        return Err(Error::InvalidParameter("empty segment list".into()));
    }
    with_escalation(params, |p| {
        let mut total = JointOperator::identity(p.n_fock);
        for seg in segments {
            let u = match seg {
                Segment::Pulse(pulse) => {
                    check_pulse(pulse)?;
                    evolve_fixed(pulse, p, cfg.steps_for(pulse, p)?, cfg.use_exact_hamiltonian)?
                }
                Segment::ZRotation { angle } => qubit_operator(&rz(*angle), p.n_fock),
                Segment::FreeEvolution { duration } => free_evolution(p, *duration),
            };
            total = u.compose(&total)?;
        }
        let cols = tomography_columns(p.n_fock, p.n_thermal_max);
        let pop = top_level_population(&total.matrix().select_columns(cols.iter()), p.n_fock);
        Ok((total, pop))
    })
}
