//! Arbitrary single-qubit gates from two Mikado pulses and three local
//! z rotations, `U_g = Rz(θ₃)·R_Mik[φ+π]·Rz(θ₂)·R_Mik[φ]·Rz(θ₁)`, with
//! z angles corrected for the pulse-angle deviations at each site.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{euler_zxz, projective_distance, ry, rz, Mat2, C64};
use crate::model::{apply_intensity_deviation, IntensityDeviation, SystemParams};
use crate::optimizer::MikadoOutcome;
use crate::propagator::{evolve, evolve_sequence, PropagationConfig, Segment};
use crate::pulse::PulseShape;
use crate::tomography::{j_uni_mikado, process_tomography, ProcessResult};

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// `U ∝ Rz(θ₃)Ry(θ₂)Rz(θ₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl EulerAngles {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta2) {
            return Err(Error::Domain(format!("theta2 = {theta2} outside [0, π]")));
        }
        Ok(Self { theta1: wrap(theta1), theta2, theta3: wrap(theta3) })
    }

    pub fn unitary(&self) -> Mat2 {
        rz(self.theta3) * ry(self.theta2) * rz(self.theta1)
    }
}

/// z-y-z decomposition of a 2×2 unitary, ignoring its global phase. For
/// `θ₂ ∈ {0, π}` the rotation is assigned to `θ₃` and `θ₁ = 0`.
pub fn euler_zyz(u: &Mat2) -> EulerAngles {
    let det = u.determinant();
    let v = u * C64::from_polar(1.0, -det.arg() / 2.0);
    let c = v[(0, 0)].norm();
    let s = v[(1, 0)].norm();
    let theta2 = (2.0 * s.atan2(c)).clamp(0.0, PI);
    // Phase-free combinations: U₁₁/U₀₀ = e^{i(θ₁+θ₃)}, −U₁₀/U₀₁ = e^{i(θ₃−θ₁)}.
    let eps = 1e-13;
    let (sum, diff) = if s <= eps {
        ((v[(1, 1)] * v[(0, 0)].conj()).arg(), 0.0)
    } else if c <= eps {
        let d = (-v[(1, 0)] * v[(0, 1)].conj()).arg();
        (d, d)
    } else {
        ((v[(1, 1)] * v[(0, 0)].conj()).arg(), (-v[(1, 0)] * v[(0, 1)].conj()).arg())
    };
    let candidates = if s <= eps || c <= eps {
        vec![(0.0, sum)]
    } else {
        // Halving the angles leaves a π ambiguity in θ₁ and θ₃ together.
        vec![((sum - diff) / 2.0, (sum + diff) / 2.0), ((sum - diff) / 2.0 + PI, (sum + diff) / 2.0 + PI)]
    };
    candidates
        .into_iter()
        .map(|(t1, t3)| EulerAngles { theta1: wrap(t1), theta2, theta3: wrap(t3) })
        .min_by(|a, b| projective_distance(&a.unitary(), u).total_cmp(&projective_distance(&b.unitary(), u)))
        .expect("nonempty")
}

/// Mikado pulse at one site: `R(α+δα, π/2+δθ, β+δβ)` with
/// `R(a, θ, b) = Rz(b)Rx(θ)Rz(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MikadoCalibration {
    pub alpha: f64,
    pub beta: f64,
    pub delta_alpha: f64,
    pub delta_beta: f64,
    pub delta_theta: f64,
}

impl MikadoCalibration {
    pub fn ideal(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, delta_alpha: 0.0, delta_beta: 0.0, delta_theta: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.delta_alpha, self.delta_beta, self.delta_theta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite calibration {all:?}")));
        }
        if self.delta_theta.abs() >= FRAC_PI_2 {
            return Err(Error::Domain(format!("delta_theta = {} outside (−π/2, π/2)", self.delta_theta)));
        }
        Ok(())
    }

    /// Calibration read off a pulse operator against nominal angles.
    pub fn from_operator(op: &Mat2, alpha: f64, beta: f64) -> Self {
        let fit = j_uni_mikado(op);
        Self { alpha, beta, delta_alpha: wrap(fit.alpha - alpha), delta_beta: wrap(fit.beta - beta), delta_theta: fit.delta_theta }
    }

    /// `(2/3)sin²(δθ/2)`.
    pub fn j_uni_mikado(&self) -> f64 {
        2.0 / 3.0 * (self.delta_theta / 2.0).sin().powi(2)
    }

    /// The pulse unitary; `shifted` selects the π-shifted pulse, whose
    /// rotation angle changes sign.
    pub fn pulse_unitary(&self, shifted: bool) -> Mat2 {
        let theta = FRAC_PI_2 + self.delta_theta;
        euler_zxz(self.alpha + self.delta_alpha, if shifted { -theta } else { theta }, self.beta + self.delta_beta)
    }
}

/// Calibrations keyed by relative intensity deviation, linearly
/// interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    entries: Vec<(f64, MikadoCalibration)>,
}

impl CalibrationTable {
    pub fn new(mut entries: Vec<(f64, MikadoCalibration)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("empty calibration table".into()));
        }
        for (_, c) in &entries {
            c.validate()?;
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter("duplicate intensity deviation in calibration table".into()));
        }
        Ok(Self { entries })
    }

    /// Table from a Mikado optimization, using the re-evaluated dominant
    /// Kraus operator of every grid point.
    pub fn from_mikado(outcome: &MikadoOutcome) -> Result<Self> {
        let entries = outcome
            .deviations
            .iter()
            .zip(&outcome.points)
            .map(|(&d, p)| (d, MikadoCalibration::from_operator(&p.kraus_ops[0], outcome.alpha, outcome.beta)))
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(f64, MikadoCalibration)] {
        &self.entries
    }

    pub fn lookup(&self, rel_dev: f64) -> Result<MikadoCalibration> {
        let (lo, hi) = (self.entries[0].0, self.entries[self.entries.len() - 1].0);
        if rel_dev < lo - 1e-12 || rel_dev > hi + 1e-12 {
            return Err(Error::Domain(format!("intensity deviation {rel_dev} outside the calibrated range [{lo}, {hi}]")));
        }
        let i = self.entries.partition_point(|e| e.0 <= rel_dev).clamp(1, self.entries.len().max(2) - 1);
        if self.entries.len() == 1 {
            return Ok(self.entries[0].1);
        }
        let (x0, c0) = self.entries[i - 1];
        let (x1, c1) = self.entries[i];
        let t = ((rel_dev - x0) / (x1 - x0)).clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| a + t * wrap(b - a);
        Ok(MikadoCalibration {
            alpha: c0.alpha,
            beta: c0.beta,
            delta_alpha: lerp(c0.delta_alpha, c1.delta_alpha),
            delta_beta: lerp(c0.delta_beta, c1.delta_beta),
            delta_theta: lerp(c0.delta_theta, c1.delta_theta),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Exact correction.
    J8,
    /// Partial correction for large angle errors.
    J9,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeGate {
    pub target: EulerAngles,
    pub calibration: MikadoCalibration,
    /// `(θ̃₁, θ̃₂, θ̃₃)`.
    pub corrected: [f64; 3],
    pub branch: Branch,
    pub s: i8,
}

impl CompositeGate {
    /// The 2×2 product of the program with the calibrated pulse unitaries.
    pub fn ideal_unitary(&self) -> Mat2 {
        let [t1, t2, t3] = self.corrected;
        let cal = &self.calibration;
        rz(t3) * cal.pulse_unitary(true) * rz(t2) * cal.pulse_unitary(false) * rz(t1)
    }
}

/// Corrected z angles. The exact branch needs a positive radicand
/// `cos²(θ₂ᵍ/2) − sin²δθ`; otherwise the partial correction is used.
pub fn corrected_angles(target: &EulerAngles, cal: &MikadoCalibration, s: i8) -> Result<CompositeGate> {
    if s != 1 && s != -1 {
        return Err(Error::InvalidParameter(format!("s must be ±1, got {s}")));
    }
    cal.validate()?;
    let sf = f64::from(s);
    let a = cal.alpha + cal.delta_alpha;
    let b = cal.beta + cal.delta_beta;
    let (half_s, half_c) = (target.theta2 / 2.0).sin_cos();
    let radicand = half_c * half_c - cal.delta_theta.sin().powi(2);
    let (corrected, branch) = if radicand > 0.0 {
        let root = radicand.sqrt();
        let t = (half_s * cal.delta_theta.sin()).atan2(root);
        let t2 = 2.0 * sf * half_s.atan2(root);
        (
            [
                target.theta1 - a + sf * t + FRAC_PI_2 * (sf - 1.0),
                t2 - a - b,
                target.theta3 - b + sf * t - FRAC_PI_2 * (sf - 1.0),
            ],
            Branch::J8,
        )
    } else {
        ([target.theta1 - a + FRAC_PI_2, PI - a - b, target.theta3 - b + FRAC_PI_2], Branch::J9)
    };
    Ok(CompositeGate { target: *target, calibration: *cal, corrected: corrected.map(wrap), branch, s })
}

/// Five-segment program realizing a target gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateProgram {
    pub gate: CompositeGate,
    pub segments: Vec<Segment>,
}

/// Serialized program element; pulses are referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProgramElement {
    Z { angle: f64 },
    Pulse { pulse_ref: String, phase_offset: f64 },
}

impl GateProgram {
    pub fn elements(&self, pulse_ref: &str) -> Vec<ProgramElement> {
        let [t1, t2, t3] = self.gate.corrected;
        vec![
            ProgramElement::Z { angle: t1 },
            ProgramElement::Pulse { pulse_ref: pulse_ref.to_string(), phase_offset: 0.0 },
            ProgramElement::Z { angle: t2 },
            ProgramElement::Pulse { pulse_ref: pulse_ref.to_string(), phase_offset: PI },
            ProgramElement::Z { angle: t3 },
        ]
    }

    pub fn to_json(&self, pulse_ref: &str) -> String {
        serde_json::to_string_pretty(&self.elements(pulse_ref)).expect("program serializes")
    }
}

/// Builds the program for `u_g`; the second pulse is `mikado` shifted by π.
pub fn assemble(u_g: &Mat2, cal: &MikadoCalibration, mikado: &PulseShape, s: i8) -> Result<GateProgram> {
    let target = euler_zyz(u_g);
    let gate = corrected_angles(&target, cal, s)?;
    let [t1, t2, t3] = gate.corrected;
    let segments = vec![
        Segment::ZRotation { angle: t1 },
        Segment::Pulse(mikado.clone()),
        Segment::ZRotation { angle: t2 },
        Segment::Pulse(mikado.shift_phase(PI)),
        Segment::ZRotation { angle: t3 },
    ];
    Ok(GateProgram { gate, segments })
}

/// Calibration of a single pulse from its own tomography at the given
/// parameters; the nominal angles are those of the fitted pulse.
pub fn calibrate_pulse(pulse: &PulseShape, params: &SystemParams, cfg: &PropagationConfig) -> Result<MikadoCalibration> {
    let u = evolve(pulse, params, cfg)?;
    let res = process_tomography(&u, &params.with_n_fock(u.n_fock())?, &Mat2::identity(), true)?;
    let fit = res.mikado.expect("Mikado-scored result");
    Ok(MikadoCalibration::from_operator(&res.kraus_ops[0], fit.alpha, fit.beta))
}

/// Composite `Ry(θ_g)` gate at one intensity deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateGridPoint {
    pub theta_g: f64,
    pub rel_dev: f64,
    pub branch: Branch,
    pub j_ent: f64,
    pub j_uni: f64,
    pub j_mot: f64,
}

/// Composite `Ry(θ_g)` gates over a grid of rotation angles and intensity
/// deviations. At every deviation the pulse is calibrated from its own
/// tomography there, so the z angles are those optimal for that site.
pub fn gate_grid(pulse: &PulseShape, params: &SystemParams, thetas: &[f64], deviations: &[f64], cfg: &PropagationConfig) -> Result<Vec<GateGridPoint>> {
    let sites = deviations
        .par_iter()
        .map(|&d| {
            let p = apply_intensity_deviation(params, IntensityDeviation::new(d)?)?;
            Ok((d, p, calibrate_pulse(pulse, &p, cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(f64, usize)> = sites.iter().enumerate().flat_map(|(i, _)| thetas.iter().map(move |&t| (t, i))).collect();
    jobs.par_iter()
        .map(|&(theta_g, i)| {
            let (rel_dev, p, cal) = &sites[i];
            let u_g = ry(theta_g);
            let prog = assemble(&u_g, cal, pulse, 1)?;
            let res = verify_composite(&prog, p, &u_g, cfg)?;
            Ok(GateGridPoint { theta_g, rel_dev: *rel_dev, branch: prog.gate.branch, j_ent: res.j_ent, j_uni: res.j_uni, j_mot: res.j_mot })
        })
        .collect()
}

/// Full joint-space propagation of the program and tomography against `u_g`.
pub fn verify_composite(program: &GateProgram, params: &SystemParams, u_g: &Mat2, cfg: &PropagationConfig) -> Result<ProcessResult> {
    let u = evolve_sequence(&program.segments, params, cfg)?;
    process_tomography(&u, &params.with_n_fock(u.n_fock())?, u_g, false)
}
