//! Randomized benchmarking with Haar-random SU(2) circuits. Every gate is a
//! composite of two global pulses and three local z rotations, and the
//! motional state is carried through the whole circuit.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::{calibrate_pulse, corrected_angles, euler_zyz, MikadoCalibration};
use crate::error::{Error, Result};
use crate::linalg::{gemm_into, pauli, rz, ComplexMatrix, JointOperator, Mat2, C64};
use crate::model::SystemParams;
use crate::propagator::{evolve, tomography_columns, top_level_population, PropagationConfig, FOCK_ESCALATION, LEAKAGE_LIMIT};
use crate::pulse::PulseShape;
use crate::stats::mean_stderr;
use crate::tomography::{chi_matrix, decompose_chi, j_uni, process_tomography_columns, Target};

/// Haar-random SU(2) element from a uniformly distributed unit quaternion.
pub fn sample_haar_su2<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let (a, b) = (C64::new(q[0], q[3]), C64::new(q[2], q[1]));
    Mat2::new(a, -b.conj(), b, a.conj())
}

/// Rotation angle `θ ∈ [0, 2π]` of an SU(2) element `exp(−iθσ_n/2)`.
pub fn rotation_angle(u: &Mat2) -> f64 {
    let det = u.determinant();
    let v = u * C64::from_polar(1.0, -det.arg() / 2.0);
    // For SU(2), Tr = 2cos(θ/2); the sign choice of the square root maps θ to 2π − θ.
    2.0 * (v.trace().re / 2.0).clamp(-1.0, 1.0).acos()
}

/// Rotation axis of an SU(2) element (zero vector for the identity).
pub fn rotation_axis(u: &Mat2) -> [f64; 3] {
    let det = u.determinant();
    let v = u * C64::from_polar(1.0, -det.arg() / 2.0);
    // v = cos(θ/2)I − i sin(θ/2) n·σ.
    let comp = |k: usize| -((pauli(k) * v).trace() / 2.0).im;
    let n = [comp(1), comp(2), comp(3)];
    let norm = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-15 {
        [0.0; 3]
    } else {
        n.map(|x| x / norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    Mikado,
    Mossbauer,
    #[serde(rename = "idealized-L4")]
    IdealizedL4,
}

impl std::str::FromStr for GateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mikado" => Ok(Self::Mikado),
            "mossbauer" => Ok(Self::Mossbauer),
            "idealized-L4" | "idealized-l4" => Ok(Self::IdealizedL4),
            other => Err(Error::InvalidParameter(format!("unknown gate mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for GateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mikado => "mikado",
            Self::Mossbauer => "mossbauer",
            Self::IdealizedL4 => "idealized-L4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RBConfig {
    pub depth_max: usize,
    pub n_circuits: usize,
    pub seed: u64,
    pub p0: f64,
    pub gate_mode: GateMode,
    pub record_depths: Vec<usize>,
}

impl RBConfig {
    pub fn new(gate_mode: GateMode, depth_max: usize, n_circuits: usize, p0: f64, seed: u64) -> Self {
        Self { depth_max, n_circuits, seed, p0, gate_mode, record_depths: default_depths(depth_max) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth_max == 0 {
            return Err(Error::InvalidParameter("depth_max must be at least 1".into()));
        }
        if self.n_circuits == 0 {
            return Err(Error::InvalidParameter("n_circuits must be at least 1".into()));
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(Error::InvalidParameter(format!("p0 must lie in (0, 1], got {}", self.p0)));
        }
        if self.record_depths.is_empty() {
            return Err(Error::InvalidParameter("record_depths is empty".into()));
        }
        if self.record_depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("record_depths must be strictly increasing".into()));
        }
        if self.record_depths[0] < 1 || *self.record_depths.last().expect("nonempty") > self.depth_max {
            return Err(Error::InvalidParameter(format!("record_depths must lie in [1, {}]", self.depth_max)));
        }
        Ok(())
    }
}

/// Roughly logarithmic depths from 1 to `depth_max`.
pub fn default_depths(depth_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut d = 1.0f64;
    while (d.round() as usize) < depth_max {
        let v = d.round() as usize;
        if out.last() != Some(&v) {
            out.push(v);
        }
        d *= 1.5;
    }
    out.push(depth_max);
    out
}

/// Averages at one depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub n: usize,
    pub j_ent: f64,
    pub j_ent_err: f64,
    pub j_uni: f64,
    pub j_uni_err: f64,
    pub j_mot: f64,
    pub j_mot_err: f64,
    pub n_circuits_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RBSeries {
    pub gate_mode: GateMode,
    pub records: Vec<DepthRecord>,
    /// Circuits dropped for truncation or non-finite metrics.
    pub excluded: usize,
}

impl RBSeries {
    pub fn at(&self, n: usize) -> Option<&DepthRecord> {
        self.records.iter().find(|r| r.n == n)
    }
}

/// Gate resources for a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub enum GateResources {
    /// A global pulse, simulated in the joint space, with its calibration.
    Pulse { pulse: PulseShape, calibration: MikadoCalibration },
    /// Two-level motional model: the pulse acts as `r_mik` on `|0⟩` and as
    /// `r_mik·r_ent` on `|1⟩`.
    Idealized { r_mik: Mat2, r_ent: Mat2 },
}

/// Constant-phase π/2 pulse at the dressed Rabi frequency.
pub fn mossbauer_pulse(params: &SystemParams) -> Result<PulseShape> {
    PulseShape::constant(PI / (2.0 * params.dressed_rabi()), 0.0)
}

/// Constant-phase π/2 pulse and its calibration.
pub fn mossbauer_resources(params: &SystemParams, prop: &PropagationConfig) -> Result<GateResources> {
    let pulse = mossbauer_pulse(params)?;
    let calibration = calibrate_pulse(&pulse, params, prop)?;
    Ok(GateResources::Pulse { pulse, calibration })
}

pub fn pulse_resources(pulse: &PulseShape, params: &SystemParams, prop: &PropagationConfig) -> Result<GateResources> {
    Ok(GateResources::Pulse { pulse: pulse.clone(), calibration: calibrate_pulse(pulse, params, prop)? })
}

/// Entangling angle `2η²|B|` for η = 0.22 and `|B| = π/4`, the size of the
/// second-order entangling term of a recoil-free pulse. The saturation level
/// does not depend on it; it sets how many gates are needed before the
/// excited branch is randomized (several hundred at this value).
pub const DEFAULT_THETA_ENT: f64 = 2.0 * 0.22 * 0.22 * std::f64::consts::FRAC_PI_4;

/// Ideal `Rx(π/2)` pulse with `R_ent = exp(−iθ_ent σx/2)` on the excited
/// motional level.
pub fn idealized_resources(theta_ent: f64) -> GateResources {
    GateResources::Idealized { r_mik: crate::linalg::rx(FRAC_PI_2), r_ent: crate::linalg::rx(theta_ent) }
}

/// One composite gate in the two-level motional model. Returns the sampled
/// target and the gate restricted to `|0⟩` and `|1⟩`.
pub fn idealized_step<R: Rng + ?Sized>(u_mik_ideal: &Mat2, r_ent: &Mat2, rng: &mut R) -> Result<(Mat2, [Mat2; 2])> {
    let u_g = sample_haar_su2(rng);
    let fit = crate::tomography::j_uni_mikado(u_mik_ideal);
    let cal = MikadoCalibration::from_operator(u_mik_ideal, fit.alpha, fit.beta);
    let gate = corrected_angles(&euler_zyz(&u_g), &cal, 1)?;
    let [t1, t2, t3] = gate.corrected;
    // The π-shifted pulse is the σz conjugate of the pulse on both levels.
    let sz = pauli(3);
    let p0 = *u_mik_ideal;
    let p1 = u_mik_ideal * r_ent;
    let block = |p: &Mat2| rz(t3) * (sz * p * sz) * rz(t2) * p * rz(t1);
    Ok((u_g, [block(&p0), block(&p1)]))
}

struct PulsePair {
    n_fock: usize,
    pulse: ComplexMatrix,
    shifted: ComplexMatrix,
}

fn pulse_pair(pulse: &PulseShape, params: &SystemParams, prop: &PropagationConfig) -> Result<PulsePair> {
    let u = evolve(pulse, params, prop)?;
    let p = params.with_n_fock(u.n_fock())?;
    let s = evolve(&pulse.shift_phase(PI), &p, prop)?;
    if s.n_fock() != u.n_fock() {
        return Err(Error::InconsistentState("shifted pulse escalated the cutoff differently".into()));
    }
    Ok(PulsePair { n_fock: u.n_fock(), pulse: u.into_matrix(), shifted: s.into_matrix() })
}

fn apply_rz(y: &mut ComplexMatrix, n_fock: usize, angle: f64) {
    let lo = C64::from_polar(1.0, -angle / 2.0);
    let hi = lo.conj();
    for mut col in y.column_iter_mut() {
        for r in 0..n_fock {
            col[r] *= lo;
        }
        for r in n_fock..2 * n_fock {
            col[r] *= hi;
        }
    }
}

type CircuitMetrics = Vec<(f64, f64, f64)>;

enum CircuitOutcome {
    Done(CircuitMetrics),
    Leaked,
    Failed(String),
}

fn run_pulse_circuit(
    cfg: &RBConfig,
    params: &SystemParams,
    pair: &PulsePair,
    cal: &MikadoCalibration,
    circuit: u64,
) -> Result<CircuitOutcome> {
    let mut rng = circuit_rng(cfg.seed, circuit);
    let nf = pair.n_fock;
    let p = params.with_n_fock(nf)?;
    let cols = tomography_columns(nf, p.n_thermal_max);
    let mut y = ComplexMatrix::zeros(2 * nf, cols.len());
    for (j, &c) in cols.iter().enumerate() {
        y[(c, j)] = C64::new(1.0, 0.0);
    }
    let mut scratch = y.clone();
    let mut ideal = Mat2::identity();
    let mut out = Vec::with_capacity(cfg.record_depths.len());
    let mut next = 0;
    for depth in 1..=cfg.depth_max {
        let u_g = sample_haar_su2(&mut rng);
        let [t1, t2, t3] = corrected_angles(&euler_zyz(&u_g), cal, 1)?.corrected;
        apply_rz(&mut y, nf, t1);
        gemm_into(&mut scratch, &pair.pulse, &y);
        std::mem::swap(&mut y, &mut scratch);
        apply_rz(&mut y, nf, t2);
        gemm_into(&mut scratch, &pair.shifted, &y);
        std::mem::swap(&mut y, &mut scratch);
        apply_rz(&mut y, nf, t3);
        ideal = u_g * ideal;
        if cfg.record_depths[next] == depth {
            if top_level_population(&y, nf) > LEAKAGE_LIMIT {
                return Ok(CircuitOutcome::Leaked);
            }
            let res = match process_tomography_columns(&y, nf, &p, &Target::Unitary(ideal)) {
                Ok(r) => r,
                Err(e) => return Ok(CircuitOutcome::Failed(e.to_string())),
            };
            if ![res.j_ent, res.j_uni, res.j_mot].iter().all(|v| v.is_finite()) {
                return Ok(CircuitOutcome::Failed("non-finite metrics".into()));
            }
            out.push((res.j_ent, res.j_uni, res.j_mot));
            next += 1;
            if next == cfg.record_depths.len() {
                break;
            }
        }
    }
    Ok(CircuitOutcome::Done(out))
}

fn run_idealized_circuit(cfg: &RBConfig, r_mik: &Mat2, r_ent: &Mat2, circuit: u64) -> Result<CircuitOutcome> {
    let mut rng = circuit_rng(cfg.seed, circuit);
    let mut branches = [Mat2::identity(); 2];
    let mut ideal = Mat2::identity();
    let weights = [cfg.p0, 1.0 - cfg.p0];
    let mut out = Vec::with_capacity(cfg.record_depths.len());
    let mut next = 0;
    for depth in 1..=cfg.depth_max {
        let (u_g, gate) = idealized_step(r_mik, r_ent, &mut rng)?;
        branches = [gate[0] * branches[0], gate[1] * branches[1]];
        ideal = u_g * ideal;
        if cfg.record_depths[next] == depth {
            let kraus: Vec<Mat2> = branches.iter().zip(&weights).map(|(b, w)| b * C64::from(w.sqrt())).collect();
            let d = decompose_chi(&chi_matrix(&kraus), Some(&ideal))?;
            let j_ent = crate::tomography::j_ent(&d.eigenvalues);
            out.push((j_ent, j_uni(&d.kraus, &ideal), 0.0));
            next += 1;
            if next == cfg.record_depths.len() {
                break;
            }
        }
    }
    Ok(CircuitOutcome::Done(out))
}

/// Independent stream per circuit, so results do not depend on scheduling.
pub fn circuit_rng(seed: u64, circuit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(circuit);
    rng
}

/// Runs `cfg.n_circuits` random circuits and averages the tomography
/// metrics at every recorded depth.
pub fn run_rb(cfg: &RBConfig, params: &SystemParams, resources: &GateResources, prop: &PropagationConfig) -> Result<RBSeries> {
    cfg.validate()?;
    let params = params.with_p0(cfg.p0)?;
    let outcomes: Vec<CircuitOutcome> = match resources {
        GateResources::Idealized { r_mik, r_ent } => {
            if cfg.gate_mode != GateMode::IdealizedL4 {
                return Err(Error::InvalidParameter(format!("{} mode needs pulse resources", cfg.gate_mode)));
            }
            (0..cfg.n_circuits as u64)
                .into_par_iter()
                .map(|c| run_idealized_circuit(cfg, r_mik, r_ent, c))
                .collect::<Result<Vec<_>>>()?
        }
        GateResources::Pulse { pulse, calibration } => {
            if cfg.gate_mode == GateMode::IdealizedL4 {
                return Err(Error::InvalidParameter("idealized-L4 mode needs idealized resources".into()));
            }
            let pair = pulse_pair(pulse, &params, prop)?;
            let first = (0..cfg.n_circuits as u64)
                .into_par_iter()
                .map(|c| run_pulse_circuit(cfg, &params, &pair, calibration, c))
                .collect::<Result<Vec<_>>>()?;
            if first.iter().any(|o| matches!(o, CircuitOutcome::Leaked)) {
                // Re-run leaking circuits once at a larger cutoff.
                let bigger = params.with_n_fock(pair.n_fock + FOCK_ESCALATION)?;
                let pair2 = pulse_pair(pulse, &bigger, prop)?;
                first
                    .into_iter()
                    .enumerate()
                    .map(|(c, o)| match o {
                        CircuitOutcome::Leaked => run_pulse_circuit(cfg, &bigger, &pair2, calibration, c as u64),
                        other => Ok(other),
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                first
            }
        }
    };
    let mut used: Vec<CircuitMetrics> = Vec::new();
    let mut excluded = 0;
    for o in outcomes {
        match o {
            CircuitOutcome::Done(m) => used.push(m),
            CircuitOutcome::Leaked => {
                log::warn!("circuit dropped: leakage after cutoff escalation");
                excluded += 1;
            }
            CircuitOutcome::Failed(msg) => {
                log::warn!("circuit dropped: {msg}");
                excluded += 1;
            }
        }
    }
    let records = cfg
        .record_depths
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let pick = |f: fn(&(f64, f64, f64)) -> f64| mean_stderr(&used.iter().map(|m| f(&m[i])).collect::<Vec<_>>());
            let (j_ent, j_ent_err) = pick(|m| m.0);
            let (j_uni, j_uni_err) = pick(|m| m.1);
            let (j_mot, j_mot_err) = pick(|m| m.2);
            DepthRecord { n, j_ent, j_ent_err, j_uni, j_uni_err, j_mot, j_mot_err, n_circuits_used: used.len() }
        })
        .collect();
    Ok(RBSeries { gate_mode: cfg.gate_mode, records, excluded })
}

/// Deviation between the excited-level branch and the ideal circuit after
/// `depth` idealized gates, as a rotation angle.
pub fn idealized_deviation_angle(r_mik: &Mat2, r_ent: &Mat2, depth: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut branch = Mat2::identity();
    let mut ideal = Mat2::identity();
    for _ in 0..depth {
        let (u_g, gate) = idealized_step(r_mik, r_ent, rng)?;
        branch = gate[1] * branch;
        ideal = u_g * ideal;
    }
    Ok(rotation_angle(&(ideal.adjoint() * branch)))
}

/// Joint-space unitary of one composite gate with pulse resources, for
/// single-gate checks.
pub fn composite_joint(u_g: &Mat2, pulse: &PulseShape, cal: &MikadoCalibration, params: &SystemParams, prop: &PropagationConfig) -> Result<JointOperator> {
    let prog = crate::composite::assemble(u_g, cal, pulse, 1)?;
    crate::propagator::evolve_sequence(&prog.segments, params, prop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projective_distance;
    use crate::oracles::{haar_theta_cdf, rb_j_ent_theta, rb_j_ent_theta_exact, rb_saturation_exact};
    use crate::stats::ks_test;

    #[test]
    fn haar_samples_are_special_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = sample_haar_su2(&mut rng);
            assert!((u.determinant() - C64::new(1.0, 0.0)).norm() < 1e-12);
            assert!((u.adjoint() * u - Mat2::identity()).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn haar_angle_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let angles: Vec<f64> = (0..20000).map(|_| rotation_angle(&sample_haar_su2(&mut rng))).collect();
        let (_, p) = ks_test(&angles, haar_theta_cdf);
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn haar_axis_isotropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let a = rotation_axis(&sample_haar_su2(&mut rng));
            for k in 0..3 {
                mean[k] += a[k] / n as f64;
            }
        }
        let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.02 + 3.0 / (n as f64).sqrt(), "{mean:?}");
    }

    #[test]
    fn rotation_angle_and_axis() {
        let u = crate::linalg::ry(0.7);
        assert!((rotation_angle(&u) - 0.7).abs() < 1e-12);
        let a = rotation_axis(&u);
        assert!((a[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RBConfig::new(GateMode::IdealizedL4, 10, 5, 0.99, 0);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.record_depths.last(), Some(&10));
        cfg.record_depths = vec![3, 2];
        assert!(cfg.validate().is_err());
        cfg.record_depths = vec![11];
        assert!(cfg.validate().is_err());
        assert_eq!("idealized-L4".parse::<GateMode>().unwrap(), GateMode::IdealizedL4);
    }

    #[test]
    fn idealized_without_entangler_is_exact() {
        let cfg = RBConfig::new(GateMode::IdealizedL4, 50, 5, 0.95, 4);
        let series = run_rb(&cfg, &SystemParams::sr88(), &idealized_resources(0.0), &PropagationConfig::default()).unwrap();
        for r in &series.records {
            assert!(r.j_ent < 1e-12 && r.j_uni < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn idealized_step_ideal_branch_is_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r_mik = crate::linalg::euler_zxz(0.3, FRAC_PI_2, -0.4);
        let (u_g, gate) = idealized_step(&r_mik, &crate::linalg::rx(0.07), &mut rng).unwrap();
        assert!(projective_distance(&gate[0], &u_g) < 1e-12);
        assert!(projective_distance(&gate[1], &u_g) > 1e-6);
    }

    #[test]
    fn fixed_deviation_matches_closed_form() {
        // Two-level channel p0·ρ + (1−p0)·UρU† with U a rotation by θ.
        for &p0 in &[0.9f64, 0.99] {
            for &theta in &[0.3, 1.2, 2.5] {
                let u = crate::linalg::rx(theta);
                let kraus = [Mat2::identity() * C64::from(p0.sqrt()), u * C64::from((1.0 - p0).sqrt())];
                let d = decompose_chi(&chi_matrix(&kraus), Some(&Mat2::identity())).unwrap();
                let j = crate::tomography::j_ent(&d.eigenvalues);
                assert!((j - rb_j_ent_theta_exact(theta, p0)).abs() < 1e-12);
                // First order in 1 − p0.
                let first = rb_j_ent_theta(theta, p0);
                assert!((j - first).abs() < 2.0 * (1.0 - p0) * (1.0 - p0));
            }
        }
    }

    #[test]
    fn deviation_becomes_haar_random() {
        let r_ent = crate::linalg::rx(DEFAULT_THETA_ENT);
        let r_mik = crate::linalg::rx(FRAC_PI_2);
        let angles = |depth: usize| -> Vec<f64> {
            (0..400).map(|c| idealized_deviation_angle(&r_mik, &r_ent, depth, &mut circuit_rng(9, c)).unwrap()).collect()
        };
        let (_, p) = ks_test(&angles(1000), haar_theta_cdf);
        assert!(p > 0.01, "KS p = {p}");
        // Two hundred gates are not yet enough at this angle.
        let (_, p) = ks_test(&angles(200), haar_theta_cdf);
        assert!(p < 1e-3, "KS p = {p}");
    }

    #[test]
    fn idealized_saturation() {
        let mut cfg = RBConfig::new(GateMode::IdealizedL4, 300, 60, 0.99, 1);
        cfg.record_depths = vec![1, 300];
        // A larger entangling angle mixes within a few dozen gates.
        let series = run_rb(&cfg, &SystemParams::sr88(), &idealized_resources(0.3), &PropagationConfig::default()).unwrap();
        let deep = series.at(300).unwrap();
        let target = rb_saturation_exact(0.99);
        assert!((deep.j_ent - target).abs() < 0.2 * target, "{deep:?} vs {target}");
        assert!(series.at(1).unwrap().j_ent < 0.1 * deep.j_ent);
    }

    #[test]
    fn deterministic_series() {
        let cfg = RBConfig::new(GateMode::IdealizedL4, 20, 8, 0.95, 3);
        let res = idealized_resources(0.1);
        let a = run_rb(&cfg, &SystemParams::sr88(), &res, &PropagationConfig::default()).unwrap();
        let b = run_rb(&cfg, &SystemParams::sr88(), &res, &PropagationConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_eta_pulse_circuits_are_ideal() {
        let params = SystemParams::new(2.0 * PI * 20e3, 2.0 * PI * 100e3, 0.0, 0.99).unwrap().with_n_fock(8).unwrap();
        let prop = PropagationConfig::with_steps(128);
        let res = mossbauer_resources(&params, &prop).unwrap();
        let cfg = RBConfig { record_depths: vec![1, 5, 10], ..RBConfig::new(GateMode::Mossbauer, 10, 3, 0.99, 0) };
        let series = run_rb(&cfg, &params, &res, &prop).unwrap();
        assert_eq!(series.excluded, 0);
        for r in &series.records {
            assert!(r.j_ent < 1e-12 && r.j_mot < 1e-12 && r.j_uni < 1e-9, "{r:?}");
        }
    }
}
