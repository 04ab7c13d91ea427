//! Physical parameters and the qubit–motion Hamiltonian, exact and expanded
//! in the Lamb-Dicke parameter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, pauli, sigma_plus, ComplexMatrix, JointOperator, Mat2, OperatorSet, C64, I};

/// Extra Fock levels kept above the thermal truncation.
pub const FOCK_MARGIN: usize = 12;

/// Thermal tail mass left out of the tomography inputs.
pub const THERMAL_TAIL: f64 = 1e-10;

/// Physical configuration. Frequencies are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_rabi: f64,
    pub omega_trap: f64,
    pub eta: f64,
    pub p0: f64,
    pub probe_shift_coeff: f64,
    pub detuning: f64,
    pub n_fock: usize,
    pub n_thermal_max: usize,
}

/// Smallest `N` with `(1−p0)^N ≤ THERMAL_TAIL`, which leaves a tail
/// `Σ_{n>N} p0(1−p0)ⁿ = (1−p0)^{N+1}` below the threshold.
pub fn thermal_cutoff(p0: f64) -> usize {
    if p0 >= 1.0 {
        return 0;
    }
    // ceil(ln(tail)/ln(1−p0)), evaluated so that exact powers do not round up.
    let q = 1.0 - p0;
    let mut n = 0;
    while q.powi(n as i32) > THERMAL_TAIL * (1.0 + 1e-9) {
        n += 1;
    }
    n
}

impl SystemParams {
    /// Parameters with zero detuning, no probe shift and the default cutoffs.
    pub fn new(omega_rabi: f64, omega_trap: f64, eta: f64, p0: f64) -> Result<Self> {
        let n_thermal_max = if p0 > 0.0 && p0 <= 1.0 { thermal_cutoff(p0) } else { 0 };
        let params = Self {
            omega_rabi,
            omega_trap,
            eta,
            p0,
            probe_shift_coeff: 0.0,
            detuning: 0.0,
            n_fock: (n_thermal_max + FOCK_MARGIN).max(2),
            n_thermal_max,
        };
        params.validate()?;
        Ok(params)
    }

    /// The ⁸⁸Sr configuration: Ω = 2π·20 kHz, ω = 2π·100 kHz, η = 0.22,
    /// p0 = 0.95 and probe-shift coefficient 11.7.
    pub fn sr88() -> Self {
        let mut p = Self::new(2.0 * PI * 20e3, 2.0 * PI * 100e3, 0.22, 0.95).expect("valid preset");
        p.probe_shift_coeff = SR88_PROBE_SHIFT;
        p
    }

    pub fn with_p0(mut self, p0: f64) -> Result<Self> {
        let margin = self.n_fock.saturating_sub(self.n_thermal_max);
        self.p0 = p0;
        self.validate_ranges()?;
        self.n_thermal_max = thermal_cutoff(p0);
        self.n_fock = (self.n_thermal_max + margin).max(2);
        Ok(self)
    }

    pub fn with_n_fock(mut self, n_fock: usize) -> Result<Self> {
        self.n_fock = n_fock;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        self.eta = eta;
        self.validate()?;
        Ok(self)
    }

    /// Trap-to-Rabi frequency ratio ξ = ω/Ω.
    pub fn xi(&self) -> f64 {
        self.omega_trap / self.omega_rabi
    }

    /// Dressed Rabi frequency Ω(1 − η²/2).
    pub fn dressed_rabi(&self) -> f64 {
        self.omega_rabi * (1.0 - self.eta * self.eta / 2.0)
    }

    /// Renormalized thermal weights `p_n ∝ p0(1−p0)ⁿ`, `n ≤ n_thermal_max`.
    pub fn thermal_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..=self.n_thermal_max).map(|n| self.p0 * (1.0 - self.p0).powi(n as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    fn validate_ranges(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v} is out of range")));
        if !(self.omega_rabi > 0.0 && self.omega_rabi.is_finite()) {
            return bad("omega_rabi", self.omega_rabi);
        }
        if !(self.omega_trap > 0.0 && self.omega_trap.is_finite()) {
            return bad("omega_trap", self.omega_trap);
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad("eta", self.eta);
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return bad("p0", self.p0);
        }
        if !self.detuning.is_finite() {
            return bad("detuning", self.detuning);
        }
        if !self.probe_shift_coeff.is_finite() {
            return bad("probe_shift_coeff", self.probe_shift_coeff);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_ranges()?;
        if self.n_thermal_max < thermal_cutoff(self.p0) {
            return Err(Error::InvalidParameter(format!(
                "n_thermal_max = {} leaves a thermal tail above {THERMAL_TAIL:e}; need at least {}",
                self.n_thermal_max,
                thermal_cutoff(self.p0)
            )));
        }
        if self.n_fock < 2 || self.n_fock <= self.n_thermal_max + 1 {
            return Err(Error::InvalidDimension(format!(
                "n_fock = {} must exceed n_thermal_max + 1 = {}",
                self.n_fock,
                self.n_thermal_max + 1
            )));
        }
        Ok(())
    }
}

/// Probe-shift coefficient of the ⁸⁸Sr clock transition.
pub const SR88_PROBE_SHIFT: f64 = 11.7;

/// Relative laser-intensity deviation δI/I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityDeviation {
    pub rel_dev: f64,
}

impl IntensityDeviation {
    pub fn new(rel_dev: f64) -> Result<Self> {
        if !(rel_dev.abs() <= 0.1) {
            return Err(Error::InvalidParameter(format!("relative intensity deviation {rel_dev} exceeds 0.1")));
        }
        Ok(Self { rel_dev })
    }
}

/// Intensity-perturbed parameters: the probe shift adds
/// `probe_shift_coeff·Ω·δI/I` to the detuning and the Rabi frequency follows
/// the field amplitude, `Ω' = Ω√(1 + δI/I)`.
pub fn apply_intensity_deviation(params: &SystemParams, dev: IntensityDeviation) -> Result<SystemParams> {
    if 1.0 + dev.rel_dev <= 0.0 {
        return Err(Error::InvalidParameter(format!("1 + rel_dev must be positive, got {}", 1.0 + dev.rel_dev)));
    }
    let mut out = *params;
    out.detuning = params.detuning + params.probe_shift_coeff * params.omega_rabi * dev.rel_dev;
    out.omega_rabi = params.omega_rabi * (1.0 + dev.rel_dev).sqrt();
    Ok(out)
}

/// `h0(φ) = σx cos φ + σy sin φ`.
pub fn h0(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    pauli(1) * C64::from(c) + pauli(2) * C64::from(s)
}

/// `h1(φ) = σy cos φ − σx sin φ`.
pub fn h1(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    pauli(2) * C64::from(c) - pauli(1) * C64::from(s)
}

fn check_ops(params: &SystemParams, ops: &OperatorSet) -> Result<()> {
    if ops.n_fock != params.n_fock {
        return Err(Error::InvalidDimension(format!(
            "operator set has n_fock = {}, parameters have {}",
            ops.n_fock, params.n_fock
        )));
    }
    if (ops.eta - params.eta).abs() > 1e-15 {
        return Err(Error::InvalidParameter(format!("operator set built for eta = {}, parameters have {}", ops.eta, params.eta)));
    }
    Ok(())
}

fn add(acc: &mut ComplexMatrix, op: &JointOperator) {
    *acc += op.matrix();
}

fn trap_and_detuning(params: &SystemParams, ops: &OperatorSet) -> Result<ComplexMatrix> {
    let id = ComplexMatrix::identity(ops.n_fock, ops.n_fock);
    let mut h = kron(&pauli(0), &(&ops.n_op * C64::from(params.omega_trap)))?.into_matrix();
    if params.detuning != 0.0 {
        add(&mut h, &kron(&(pauli(3) * C64::from(params.detuning / 2.0)), &id)?);
    }
    Ok(h)
}

/// `H = (Ω/2)(e^{iφ} e^{iη(a†+a)} σ⁺ + H.c.) + ω a†a + (δ/2)σz`, in rad/s.
pub fn hamiltonian_exact(params: &SystemParams, phi: f64, ops: &OperatorSet) -> Result<JointOperator> {
    check_ops(params, ops)?;
    let mut h = trap_and_detuning(params, ops)?;
    let drive = kron(&(sigma_plus() * (C64::from_polar(params.omega_rabi / 2.0, phi))), &ops.displacement)?;
    add(&mut h, &drive);
    h += drive.matrix().adjoint();
    JointOperator::new(params.n_fock, h)
}

/// Hamiltonian expanded to the given order in η. The zeroth-order drive
/// carries the dressed Rabi frequency Ω(1 − η²/2).
pub fn hamiltonian_expanded(params: &SystemParams, phi: f64, ops: &OperatorSet, order: u8) -> Result<JointOperator> {
    check_ops(params, ops)?;
    if order > 2 {
        return Err(Error::InvalidParameter(format!("expansion order must be 0, 1 or 2, got {order}")));
    }
    let nf = ops.n_fock;
    let half = params.omega_rabi / 2.0;
    let eta = params.eta;
    let id = ComplexMatrix::identity(nf, nf);
    let mut h = trap_and_detuning(params, ops)?;
    add(&mut h, &kron(&(h0(phi) * C64::from(half * (1.0 - eta * eta / 2.0))), &id)?);
    if order >= 1 {
        let x = &ops.a + &ops.a_dag;
        add(&mut h, &kron(&(h1(phi) * C64::from(eta * half)), &x)?);
    }
    if order >= 2 {
        let sq = &ops.a * &ops.a + &ops.a_dag * &ops.a_dag;
        let motion = sq * C64::from(0.5) + &ops.n_op;
        add(&mut h, &kron(&(h0(phi) * C64::from(-eta * eta * half)), &motion)?);
    }
    JointOperator::new(nf, h)
}

/// Antiunitary time reversal `τ = iσy K` applied as `τ⁻¹ H τ`.
pub fn time_reverse(h: &JointOperator) -> JointOperator {
    let nf = h.n_fock();
    let u = kron(&(pauli(2) * I), &ComplexMatrix::identity(nf, nf)).expect("square identity");
    let conj = h.matrix().map(|z| z.conj());
    JointOperator::new(nf, u.matrix().adjoint() * conj * u.matrix()).expect("same shape")
}
