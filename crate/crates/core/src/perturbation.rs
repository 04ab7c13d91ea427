//! Second-order Lamb-Dicke expansion of the gate unitary,
//! `U(T) = U₀(T)[1 + ηV₁ + η²V₂] + O(η³)`, evaluated by quadrature in the
//! interaction picture of the dressed qubit propagator `U_q`.
//!
//! Writing `V₁(t) = a†R(t) − aR(t)†` with
//! `R(t) = −i(Ω/2)∫₀ᵗ e^{iωs} h₁ᴵ(s) ds`, every nested double integral of
//! the second-order term reduces to single integrals of products `r(t)R(t)`
//! with `r = Ṙ`, so the whole report costs `O(n_t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{annihilation, kron, pauli, pauli_coefficients, ComplexMatrix, JointOperator, Mat2, C64, I, ZERO};
use crate::model::{h0, h1, SystemParams};
use crate::oracles::thermal_channel;
use crate::pulse::PulseShape;
use crate::tomography::mat2_pairs;

/// Default number of quadrature intervals.
pub const DEFAULT_INTERVALS: usize = 2048;
/// Magnus substeps per quadrature interval for the qubit propagator.
const SUBSTEPS: usize = 4;

/// `exp(−iH)` for a Hermitian 2×2 `H`.
fn expm_herm2(h: &Mat2) -> Mat2 {
    let c = pauli_coefficients(h);
    let v = [c[1].re, c[2].re, c[3].re];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let phase = C64::from_polar(1.0, -c[0].re);
    if n == 0.0 {
        return Mat2::identity() * phase;
    }
    let s = n.sin() / n;
    let gen = pauli(1) * C64::from(v[0]) + pauli(2) * C64::from(v[1]) + pauli(3) * C64::from(v[2]);
    (Mat2::identity() * C64::from(n.cos()) - gen * (I * s)) * phase
}

/// Interaction-picture drive operators sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct InteractionFrame {
    pub times: Vec<f64>,
    /// Dressed zeroth-order qubit propagator `U_q(t)`.
    pub u_q: Vec<Mat2>,
    /// `U_q†(t) h₀(t) U_q(t)`.
    pub h0: Vec<Mat2>,
    /// `U_q†(t) h₁(t) U_q(t)`.
    pub h1: Vec<Mat2>,
}

/// Samples `U_q`, `h₀ᴵ` and `h₁ᴵ` on `n_intervals + 1` equally spaced times.
/// `U_q` solves `i∂ₜU_q = [(Ω̃/2)h₀(t) + (δ/2)σz] U_q` with the dressed Rabi
/// frequency, integrated by fourth-order Magnus steps.
pub fn interaction_frame_ops(pulse: &PulseShape, params: &SystemParams, n_intervals: usize) -> Result<InteractionFrame> {
    if n_intervals < 16 || n_intervals % 2 != 0 {
        return Err(Error::InvalidParameter(format!("need an even number of at least 16 intervals, got {n_intervals}")));
    }
    let dressed = params.dressed_rabi();
    let ham = |t: f64| {
        let phi = pulse.phase_unchecked(t.clamp(0.0, pulse.duration));
        h0(phi) * C64::from(dressed / 2.0) + pauli(3) * C64::from(params.detuning / 2.0)
    };
    let dt = pulse.duration / n_intervals as f64;
    let h = dt / SUBSTEPS as f64;
    let g = 3f64.sqrt() / 6.0;
    let mut u = Mat2::identity();
    let mut frame = InteractionFrame { times: Vec::new(), u_q: Vec::new(), h0: Vec::new(), h1: Vec::new() };
    for k in 0..=n_intervals {
        let t = k as f64 * dt;
        if k > 0 {
            let t0 = t - dt;
            for j in 0..SUBSTEPS {
                let ts = t0 + j as f64 * h;
                let (a1, a2) = (ham(ts + (0.5 - g) * h), ham(ts + (0.5 + g) * h));
                let comm = a1 * a2 - a2 * a1;
                let gen = (a1 + a2) * C64::from(h / 2.0) + comm * (I * (3f64.sqrt() * h * h / 12.0));
                u = expm_herm2(&gen) * u;
            }
        }
        let phi = pulse.phase_unchecked(t);
        frame.times.push(t);
        frame.u_q.push(u);
        frame.h0.push(u.adjoint() * h0(phi) * u);
        frame.h1.push(u.adjoint() * h1(phi) * u);
    }
    Ok(frame)
}

/// Fourth-order cumulative integral on a uniform grid.
fn cumulative(f: &[Mat2], dt: f64) -> Vec<Mat2> {
    let n = f.len() - 1;
    let mut out = vec![Mat2::zeros(); n + 1];
    for k in 0..n {
        // Cubic interpolation through four neighbouring samples; one-sided
        // at the ends.
        let piece = if k == 0 {
            (f[0] * C64::from(9.0) + f[1] * C64::from(19.0) - f[2] * C64::from(5.0) + f[3]) * C64::from(dt / 24.0)
        } else if k == n - 1 {
            (f[n] * C64::from(9.0) + f[n - 1] * C64::from(19.0) - f[n - 2] * C64::from(5.0) + f[n - 3]) * C64::from(dt / 24.0)
        } else {
            ((f[k] + f[k + 1]) * C64::from(13.0) - f[k - 1] - f[k + 2]) * C64::from(dt / 24.0)
        };
        out[k + 1] = out[k] + piece;
    }
    out
}

/// Composite Simpson integral of uniformly sampled operators.
fn simpson(f: &[Mat2], dt: f64) -> Mat2 {
    let n = f.len() - 1;
    let mut s = f[0] + f[n];
    for (k, v) in f.iter().enumerate().take(n).skip(1) {
        s += v * C64::from(if k % 2 == 1 { 4.0 } else { 2.0 });
    }
    s * C64::from(dt / 3.0)
}

/// Second-order operators not captured by the recoil and entanglement terms:
/// `∫₀ᵀ[∂ₜV₁, V₁]dt = −iδV − i a†a V'_ent + (a†² V'_rec − H.c.)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrder {
    pub delta_v: Mat2,
    pub v_ent2_prime: Mat2,
    pub v_rec2_prime: Mat2,
}

/// Operators of the second-order expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub v_rec1: Mat2,
    pub v_rec2: Mat2,
    pub v_ent2: Mat2,
    pub second_order: SecondOrder,
    pub bloch_len_v_ent2: f64,
    /// `U_q(T)`.
    pub u_q: Mat2,
    /// Coefficients of `a†², a², a†a, 1` in `V₂`.
    v2_terms: [Mat2; 4],
    duration: f64,
    n_intervals: usize,
}

/// JSON form of an [`ExpansionReport`]; operators as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub v_rec1: [[f64; 2]; 4],
    pub v_rec2: [[f64; 2]; 4],
    pub v_ent2: [[f64; 2]; 4],
    pub delta_v: [[f64; 2]; 4],
    pub v_ent2_prime: [[f64; 2]; 4],
    pub v_rec2_prime: [[f64; 2]; 4],
    pub norm_v_rec1: f64,
    pub norm_v_rec2: f64,
    pub bloch_len_v_ent2: f64,
    pub n_intervals: usize,
}

impl ExpansionReport {
    pub fn record(&self) -> ExpansionRecord {
        ExpansionRecord {
            v_rec1: mat2_pairs(&self.v_rec1),
            v_rec2: mat2_pairs(&self.v_rec2),
            v_ent2: mat2_pairs(&self.v_ent2),
            delta_v: mat2_pairs(&self.second_order.delta_v),
            v_ent2_prime: mat2_pairs(&self.second_order.v_ent2_prime),
            v_rec2_prime: mat2_pairs(&self.second_order.v_rec2_prime),
            norm_v_rec1: self.v_rec1.norm(),
            norm_v_rec2: self.v_rec2.norm(),
            bloch_len_v_ent2: self.bloch_len_v_ent2,
            n_intervals: self.n_intervals,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }
}

/// Expansion operators with the default quadrature grid.
pub fn expansion_report(pulse: &PulseShape, params: &SystemParams) -> Result<ExpansionReport> {
    expansion_report_with(pulse, params, DEFAULT_INTERVALS)
}

pub fn expansion_report_with(pulse: &PulseShape, params: &SystemParams, n_intervals: usize) -> Result<ExpansionReport> {
    let frame = interaction_frame_ops(pulse, params, n_intervals)?;
    let dt = pulse.duration / n_intervals as f64;
    let (omega, trap) = (params.omega_rabi, params.omega_trap);
    let phase = |t: f64, m: f64| C64::from_polar(1.0, m * trap * t);

    let r: Vec<Mat2> = frame.times.iter().zip(&frame.h1).map(|(t, h)| h * (-I * (omega / 2.0) * phase(*t, 1.0))).collect();
    let big_r = cumulative(&r, dt);
    let rec2: Vec<Mat2> = frame.times.iter().zip(&frame.h0).map(|(t, h)| h * (-I * (omega / 4.0) * phase(*t, 2.0))).collect();
    let v_rec1 = big_r[n_intervals];
    let v_rec2 = simpson(&rec2, dt);
    let v_ent2 = simpson(&frame.h0, dt) * C64::from(omega / 2.0);

    let prod = |f: &dyn Fn(&Mat2, &Mat2) -> Mat2| -> Mat2 {
        let vals: Vec<Mat2> = r.iter().zip(&big_r).map(|(a, b)| f(a, b)).collect();
        simpson(&vals, dt)
    };
    // ∫ V₁'V₁ = a†²∫rR + a²∫r†R† − a†a∫(rR† + r†R) − ∫r†R
    let p_rr = prod(&|a, b| a * b);
    let p_rr_rev = prod(&|a, b| b * a);
    let q_rr = prod(&|a, b| a.adjoint() * b.adjoint());
    let n_fw = prod(&|a, b| a * b.adjoint() + a.adjoint() * b);
    let n_bw = prod(&|a, b| b * a.adjoint() + b.adjoint() * a);
    let c_fw = prod(&|a, b| a.adjoint() * b);
    let c_bw = prod(&|a, b| b.adjoint() * a);

    let second_order = SecondOrder {
        delta_v: (c_bw - c_fw) * I,
        v_ent2_prime: (n_bw - n_fw) * I,
        v_rec2_prime: p_rr - p_rr_rev,
    };
    // V₂ = −i∫U₀†H₂U₀ + ∫V₁'V₁; the first part contributes
    // −(a†²V_rec⁽²⁾ − H.c.) + i a†a V_ent⁽²⁾.
    let v2_terms = [p_rr - v_rec2, q_rr + v_rec2.adjoint(), v_ent2 * I - n_fw, -c_fw];
    Ok(ExpansionReport {
        v_rec1,
        v_rec2,
        v_ent2,
        second_order,
        bloch_len_v_ent2: norm3(&bloch_map(&v_ent2)?),
        u_q: frame.u_q[n_intervals],
        v2_terms,
        duration: pulse.duration,
        n_intervals,
    })
}

/// Running `V_ent⁽²⁾(t)` on the quadrature grid.
pub fn v_ent2_cumulative(pulse: &PulseShape, params: &SystemParams, n_intervals: usize) -> Result<(Vec<f64>, Vec<Mat2>)> {
    let frame = interaction_frame_ops(pulse, params, n_intervals)?;
    let dt = pulse.duration / n_intervals as f64;
    let c = cumulative(&frame.h0, dt).into_iter().map(|m| m * C64::from(params.omega_rabi / 2.0)).collect();
    Ok((frame.times, c))
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn motion_diag(n_fock: usize, f: impl Fn(usize) -> C64) -> ComplexMatrix {
    ComplexMatrix::from_fn(n_fock, n_fock, |r, c| if r == c { f(r) } else { ZERO })
}

/// `U₀(T) = U_q(T) ⊗ exp(−iωT a†a)`.
pub fn zeroth_order_unitary(report: &ExpansionReport, params: &SystemParams) -> Result<JointOperator> {
    let wt = params.omega_trap * report.duration;
    kron(&report.u_q, &motion_diag(params.n_fock, |n| C64::from_polar(1.0, -wt * n as f64)))
}

/// `U₀(T)[1 + ηV₁ + η²V₂]` on the joint space.
pub fn reconstruct_unitary(report: &ExpansionReport, params: &SystemParams) -> Result<JointOperator> {
    let nf = params.n_fock;
    let a = annihilation(nf);
    let ad = a.adjoint();
    let n_op = motion_diag(nf, |n| C64::from(n as f64));
    let eta = C64::from(params.eta);
    let v1 = kron(&report.v_rec1, &ad)?.into_matrix() - kron(&report.v_rec1.adjoint(), &a)?.into_matrix();
    let [c_add2, c_a2, c_n, c_1] = report.v2_terms;
    let v2 = kron(&c_add2, &(&ad * &ad))?.into_matrix()
        + kron(&c_a2, &(&a * &a))?.into_matrix()
        + kron(&c_n, &n_op)?.into_matrix()
        + kron(&c_1, &ComplexMatrix::identity(nf, nf))?.into_matrix();
    let inner = ComplexMatrix::identity(2 * nf, 2 * nf) + v1 * eta + v2 * (eta * eta);
    let u0 = zeroth_order_unitary(report, params)?;
    JointOperator::new(nf, u0.matrix() * inner)
}

/// `U₀(T)[1 + iη² a†a V_ent⁽²⁾]`, the form left when both recoil operators
/// vanish.
pub fn reconstruct_entangling_only(report: &ExpansionReport, params: &SystemParams) -> Result<JointOperator> {
    let nf = params.n_fock;
    let n_op = motion_diag(nf, |n| C64::from(n as f64));
    let inner = ComplexMatrix::identity(2 * nf, 2 * nf) + kron(&(report.v_ent2 * I), &n_op)?.into_matrix() * C64::from(params.eta.powi(2));
    let u0 = zeroth_order_unitary(report, params)?;
    JointOperator::new(nf, u0.matrix() * inner)
}

/// `B(A) = (Tr(Aσx), Tr(Aσy), Tr(Aσz))/2` for Hermitian `A`.
pub fn bloch_map(a: &Mat2) -> Result<[f64; 3]> {
    let defect = (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if defect > 1e-8 {
        return Err(Error::Domain(format!("operator is not Hermitian (defect {defect:.3e})")));
    }
    let c = pauli_coefficients(a);
    Ok([c[1].re, c[2].re, c[3].re])
}

/// Recoil norms above which the entanglement prediction is unreliable.
pub const RECOIL_FREE_TOL: f64 = 1e-2;

/// `J_ent` of a recoil-free pulse from `V_ent⁽²⁾`: the thermal dephasing
/// channel with rotation angle `θ = 2η²|B(V_ent⁽²⁾)|`.
pub fn predicted_j_ent(report: &ExpansionReport, params: &SystemParams) -> Result<f64> {
    if report.v_rec1.norm() > RECOIL_FREE_TOL || report.v_rec2.norm() > RECOIL_FREE_TOL {
        log::warn!(
            "pulse is not recoil free (|V_rec1| = {:.2e}, |V_rec2| = {:.2e}); prediction omits the recoil contribution",
            report.v_rec1.norm(),
            report.v_rec2.norm()
        );
    }
    let b = bloch_map(&report.v_ent2)?;
    let len = norm3(&b);
    if len == 0.0 {
        return Ok(0.0);
    }
    let theta = 2.0 * params.eta.powi(2) * len;
    Ok(thermal_channel(theta, [b[0] / len, b[1] / len, b[2] / len], params.p0)?.j_ent)
}

/// Leading term `(2/3)(δp/p₀²)η⁴|B|²` of [`predicted_j_ent`].
pub fn predicted_j_ent_leading(bloch_len: f64, eta: f64, p0: f64) -> f64 {
    2.0 / 3.0 * (1.0 - p0) / (p0 * p0) * eta.powi(4) * bloch_len * bloch_len
}

/// Plateau value `π²/24 · δp/p₀ · η⁴` of a constant-phase π/2 pulse.
pub fn plateau_j_ent(eta: f64, p0: f64) -> f64 {
    PI * PI / 24.0 * (1.0 - p0) / p0 * eta.powi(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, rx};
    use crate::propagator::evolve_fixed;
    use crate::stats::loglog_slope;
    use rand::{Rng, SeedableRng};

    fn params(eta: f64) -> SystemParams {
        SystemParams::new(2.0 * PI * 20e3, 2.0 * PI * 100e3, eta, 0.95).unwrap().with_n_fock(14).unwrap()
    }

    fn random_pulse(seed: u64, duration: f64, n_c: usize, amp: f64) -> PulseShape {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..n_c).map(|_| rng.random_range(-amp..amp)).collect::<Vec<_>>();
        let a = v();
        let b = v();
        PulseShape::fourier(duration, a, b).unwrap()
    }

    #[test]
    fn constant_phase_frame() {
        let p = params(0.22);
        let pulse = PulseShape::constant(PI / (2.0 * p.omega_rabi), 0.0).unwrap();
        let f = interaction_frame_ops(&pulse, &p, 512).unwrap();
        for (k, t) in f.times.iter().enumerate() {
            assert!((f.h0[k] - pauli(1)).norm() < 1e-12);
            let eig = f.h1[k].symmetric_eigenvalues();
            assert!((eig.max() - 1.0).abs() < 1e-12 && (eig.min() + 1.0).abs() < 1e-12);
            assert!((f.u_q[k] - rx(p.dressed_rabi() * t)).norm() < 1e-12);
        }
    }

    #[test]
    fn qubit_frame_matches_propagator() {
        let p = params(0.0);
        let pulse = random_pulse(3, 12e-6, 8, 0.6);
        let f = interaction_frame_ops(&pulse, &p, 1024).unwrap();
        let u = evolve_fixed(&pulse, &p, 8000, true).unwrap();
        let block = u.block(0, 0);
        let uq = f.u_q.last().unwrap();
        assert!((block - uq).norm() < 1e-8, "{}", (block - uq).norm());
    }

    #[test]
    fn constant_phase_entangler_is_linear() {
        let p = params(0.22);
        let pulse = PulseShape::constant(PI / (2.0 * p.omega_rabi), 0.0).unwrap();
        let (times, v) = v_ent2_cumulative(&pulse, &p, 512).unwrap();
        for (t, m) in times.iter().zip(&v) {
            assert!((m - pauli(1) * C64::from(p.omega_rabi * t / 2.0)).norm() < 1e-10);
        }
        let r = expansion_report(&pulse, &p).unwrap();
        assert!((r.bloch_len_v_ent2 - PI / 4.0).abs() < 1e-2 * PI / 4.0);
        assert!(r.v_ent2.is_hermitian_like());
    }

    trait HermitianLike {
        fn is_hermitian_like(&self) -> bool;
    }

    impl HermitianLike for Mat2 {
        fn is_hermitian_like(&self) -> bool {
            (self - self.adjoint()).norm() < 1e-10
        }
    }

    #[test]
    fn bloch_map_values() {
        assert_eq!(bloch_map(&pauli(1)).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(bloch_map(&Mat2::identity()).unwrap(), [0.0, 0.0, 0.0]);
        let a = pauli(2) * C64::from(0.3) + pauli(3) * C64::from(0.4);
        let b = bloch_map(&a).unwrap();
        assert!((b[1] - 0.3).abs() < 1e-15 && (b[2] - 0.4).abs() < 1e-15 && b[0] == 0.0);
        assert!(bloch_map(&crate::linalg::sigma_plus()).is_err());
    }

    #[test]
    fn plateau_prediction() {
        let v = plateau_j_ent(0.22, 0.95);
        assert!((v - 5.07e-5).abs() < 0.01e-5);
        let p = params(0.22);
        let pulse = PulseShape::constant(PI / (2.0 * p.omega_rabi), 0.0).unwrap();
        let r = expansion_report(&pulse, &p).unwrap();
        let pred = predicted_j_ent(&r, &p).unwrap();
        assert!((pred / predicted_j_ent_leading(r.bloch_len_v_ent2, 0.22, 0.95) - 1.0).abs() < 1e-3);
        assert_eq!(predicted_j_ent(&r, &p.with_p0(1.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn second_order_operators_are_hermitian_and_converge() {
        let p = params(0.1);
        let pulse = random_pulse(9, 15e-6, 10, 0.5);
        let coarse = expansion_report_with(&pulse, &p, 2048).unwrap();
        let fine = expansion_report_with(&pulse, &p, 4096).unwrap();
        assert!(coarse.v_ent2.is_hermitian_like());
        assert!(coarse.second_order.delta_v.is_hermitian_like());
        assert!(coarse.second_order.v_ent2_prime.is_hermitian_like());
        let pairs = [
            (coarse.v_rec1, fine.v_rec1),
            (coarse.v_rec2, fine.v_rec2),
            (coarse.v_ent2, fine.v_ent2),
            (coarse.second_order.delta_v, fine.second_order.delta_v),
            (coarse.second_order.v_ent2_prime, fine.second_order.v_ent2_prime),
            (coarse.second_order.v_rec2_prime, fine.second_order.v_rec2_prime),
        ];
        for (a, b) in pairs {
            let d = (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(d < 1e-8, "{d}");
        }
    }

    #[test]
    fn zero_eta_reconstruction_is_exact_zeroth_order() {
        let p = params(0.0);
        let pulse = random_pulse(5, 10e-6, 6, 0.4);
        let r = expansion_report(&pulse, &p).unwrap();
        let u0 = zeroth_order_unitary(&r, &p).unwrap();
        let rec = reconstruct_unitary(&r, &p).unwrap();
        assert_eq!(max_abs_diff(u0.matrix(), rec.matrix()), 0.0);
    }

    fn low_block_error(a: &JointOperator, b: &JointOperator, n_in: usize) -> f64 {
        let nf = a.n_fock();
        let cols: Vec<usize> = (0..2).flat_map(|q| (0..n_in).map(move |n| q * nf + n)).collect();
        let d = a.matrix().select_columns(cols.iter()) - b.matrix().select_columns(cols.iter());
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn reconstruction_error_is_third_order() {
        let pulse = random_pulse(21, 15e-6, 8, 0.5);
        let etas = [0.02, 0.04, 0.08, 0.16];
        let errs: Vec<f64> = etas
            .iter()
            .map(|&eta| {
                let p = params(eta).with_n_fock(20).unwrap();
                let full = evolve_fixed(&pulse, &p, 6000, true).unwrap();
                let rec = reconstruct_unitary(&expansion_report(&pulse, &p).unwrap(), &p).unwrap();
                low_block_error(&full, &rec, 4)
            })
            .collect();
        let slope = loglog_slope(&etas, &errs);
        assert!((slope - 3.0).abs() < 0.2, "slope {slope}, errors {errs:?}");
    }
}
