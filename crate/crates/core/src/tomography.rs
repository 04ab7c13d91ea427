//! Process tomography of a joint unitary acting on a qubit with a thermal
//! motional state: Kraus blocks, the χ matrix in the Pauli basis, average
//! fidelity and the entanglement, unitary and motional cost terms.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{euler_zxz, from_pauli_coefficients, pauli_coefficients, ComplexMatrix, JointOperator, Mat2, C64, I, ONE, ZERO};
use crate::model::SystemParams;
use crate::propagator::tomography_columns;

pub type ChiMatrix = Matrix4<C64>;

/// Allowed deviation of `Σ K†K` from the identity.
pub const COMPLETENESS_TOL: f64 = 1e-6;
/// Eigenvalue gap below which χ₀ is treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// The four tomography input states `|0⟩, |1⟩, |+⟩, |+i⟩`.
pub fn tomography_states() -> [[C64; 2]; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [[ONE, ZERO], [ZERO, ONE], [C64::from(s), C64::from(s)], [C64::from(s), I * s]]
}

/// Target of a tomography run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Fixed target unitary.
    Unitary(Mat2),
    /// Any `Rz(β)Rx(π/2)Rz(α)`, with α and β left free.
    Mikado,
}

/// Scored channel of one gate or circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessResult {
    /// Descending χ eigenvalues.
    pub chi_eigenvalues: [f64; 4],
    /// Canonical Kraus operators, `Tr(E†E) = 2`.
    pub kraus_ops: [Mat2; 4],
    pub avg_fidelity: f64,
    pub j_ent: f64,
    pub j_uni: f64,
    pub j_mot: f64,
    /// Euler fit of the dominant channel when scored against the Mikado family.
    pub mikado: Option<MikadoFit>,
}

/// JSON record of a [`ProcessResult`]; operators as `[re, im]` pairs in
/// row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessRecord {
    pub chi: [f64; 4],
    pub j_ent: f64,
    pub j_uni: f64,
    pub j_mot: f64,
    pub fidelity: f64,
    pub kraus: Vec<[[f64; 2]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mikado: Option<MikadoFit>,
}

pub fn mat2_pairs(m: &Mat2) -> [[f64; 2]; 4] {
    let e = |r, c| {
        let z: C64 = m[(r, c)];
        [z.re, z.im]
    };
    [e(0, 0), e(0, 1), e(1, 0), e(1, 1)]
}

impl ProcessResult {
    pub fn record(&self) -> ProcessRecord {
        ProcessRecord {
            chi: self.chi_eigenvalues,
            j_ent: self.j_ent,
            j_uni: self.j_uni,
            j_mot: self.j_mot,
            fidelity: self.avg_fidelity,
            kraus: self.kraus_ops.iter().map(mat2_pairs).collect(),
            mikado: self.mikado,
        }
    }
}

/// Euler fit `R = Rz(β)Rx(π/2 + δθ)Rz(α)` and its Mikado infidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MikadoFit {
    pub j: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta_theta: f64,
}

fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// z-x-z Euler decomposition `U ∝ Rz(β)Rx(θ)Rz(α)` with `θ ∈ [0, π]`.
/// Degenerate cases (`θ = 0` or `π`) put the whole z rotation into β.
pub fn euler_zxz_angles(u: &Mat2) -> (f64, f64, f64) {
    let det = u.determinant();
    let phase = C64::from_polar(1.0, -det.arg() / 2.0);
    let v = u * phase;
    let c = v[(0, 0)].norm();
    let s = v[(1, 0)].norm();
    let theta = 2.0 * s.atan2(c);
    let eps = 1e-14;
    let (half_sum, half_diff) = if s <= eps * c {
        (-v[(0, 0)].arg(), -v[(0, 0)].arg())
    } else if c <= eps * s {
        let hd = (I * v[(1, 0)]).arg();
        (hd, hd)
    } else {
        (-v[(0, 0)].arg(), (I * v[(1, 0)]).arg())
    };
    let alpha = wrap_angle(half_sum - half_diff);
    let beta = wrap_angle(half_sum + half_diff);
    (alpha, theta, beta)
}

/// Nearest unitary (polar factor).
pub fn nearest_unitary(a: &Mat2) -> Mat2 {
    let svd = a.svd(true, true);
    svd.u.expect("u") * svd.v_t.expect("v_t")
}

/// Mikado infidelity `(2/3)sin²(δθ/2)` with the Euler angles of a unitary.
/// Non-unitary input is first replaced by its polar factor.
pub fn j_uni_mikado(r: &Mat2) -> MikadoFit {
    let u = nearest_unitary(r);
    let (alpha, theta, beta) = euler_zxz_angles(&u);
    let delta_theta = theta - std::f64::consts::FRAC_PI_2;
    MikadoFit { j: 2.0 / 3.0 * (delta_theta / 2.0).sin().powi(2), alpha, beta, delta_theta }
}

/// `min_{α,β} (2/3)(1 − |Tr(R(α,π/2,β)† E)/2|²)` for a general operator `E`,
/// by Newton iteration from the Euler fit of its polar factor. Equals
/// [`j_uni_mikado`] for unitary `E`.
pub fn j_uni_mikado_general(e: &Mat2) -> MikadoFit {
    let start = j_uni_mikado(e);
    let (e00, e01, e10, e11) = (e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]);
    // With s = (α+β)/2 and d = (β−α)/2, Tr(R†E)/2 = Z/(2√2) where
    // Z = e^{is}E00 + e^{−is}E11 + i(e^{id}E01 + e^{−id}E10).
    let eval = |s: f64, d: f64| {
        let (es, ed) = (C64::from_polar(1.0, s), C64::from_polar(1.0, d));
        let a = es * e00 + es.conj() * e11;
        let b = I * (ed * e01 + ed.conj() * e10);
        let a_s = I * (es * e00 - es.conj() * e11);
        let b_d = -(ed * e01 - ed.conj() * e10);
        (a, b, a_s, b_d)
    };
    let mut s = (start.alpha + start.beta) / 2.0;
    let mut d = (start.beta - start.alpha) / 2.0;
    let value = |s: f64, d: f64| {
        let (a, b, _, _) = eval(s, d);
        (a + b).norm_sqr()
    };
    let mut f = value(s, d);
    for _ in 0..50 {
        let (a, b, a_s, b_d) = eval(s, d);
        let z = a + b;
        let gs = 2.0 * (z.conj() * a_s).re;
        let gd = 2.0 * (z.conj() * b_d).re;
        let hss = 2.0 * (a_s.norm_sqr() - (z.conj() * a).re);
        let hdd = 2.0 * (b_d.norm_sqr() - (z.conj() * b).re);
        let hsd = 2.0 * (a_s.conj() * b_d).re;
        let det = hss * hdd - hsd * hsd;
        let (mut ds, mut dd) = if hss < 0.0 && det > 0.0 {
            (-(hdd * gs - hsd * gd) / det, -(hss * gd - hsd * gs) / det)
        } else {
            (gs * 1e-2, gd * 1e-2)
        };
        let mut accepted = false;
        for _ in 0..30 {
            let fn_ = value(s + ds, d + dd);
            if fn_ >= f {
                s += ds;
                d += dd;
                accepted = fn_ - f > 0.0;
                f = fn_;
                break;
            }
            ds *= 0.5;
            dd *= 0.5;
        }
        if !accepted || (gs.abs() + gd.abs()) < 1e-15 {
            break;
        }
    }
    let j = (2.0 / 3.0 * (1.0 - f / 8.0)).max(0.0);
    MikadoFit { j, alpha: wrap_angle(s - d), beta: wrap_angle(s + d), delta_theta: start.delta_theta }
}

/// Kraus operators `√p_n ⟨n'|U|n⟩` for all retained blocks.
pub fn kraus_from_joint_unitary(u: &JointOperator, params: &SystemParams) -> Result<Vec<Mat2>> {
    let cols = tomography_columns(u.n_fock(), params.n_thermal_max);
    let y = u.matrix().select_columns(cols.iter());
    kraus_from_columns(&y, u.n_fock(), &params.thermal_weights())
}

/// Kraus operators from propagated tomography columns (layout of
/// [`tomography_columns`]).
pub fn kraus_from_columns(y: &ComplexMatrix, n_fock: usize, weights: &[f64]) -> Result<Vec<Mat2>> {
    let nt = weights.len();
    if y.ncols() != 2 * nt || y.nrows() != 2 * n_fock {
        return Err(Error::InvalidDimension(format!(
            "expected {}x{} tomography columns, got {}x{}",
            2 * n_fock,
            2 * nt,
            y.nrows(),
            y.ncols()
        )));
    }
    let mut out = Vec::with_capacity(nt * n_fock);
    let mut completeness = Mat2::zeros();
    for (n, &p) in weights.iter().enumerate() {
        let sp = p.sqrt();
        for m in 0..n_fock {
            let k = Mat2::from_fn(|r, c| y[(r * n_fock + m, c * nt + n)] * sp);
            completeness += k.adjoint() * k;
            out.push(k);
        }
    }
    let defect = (completeness - Mat2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if defect > COMPLETENESS_TOL {
        return Err(Error::Truncation(format!("Kraus completeness defect {defect:.3e}")));
    }
    Ok(out)
}

/// `χ_{mn} = Σ_K c_m(K) c_n(K)*` in the Pauli basis.
pub fn chi_matrix(kraus: &[Mat2]) -> ChiMatrix {
    let mut chi = ChiMatrix::zeros();
    for k in kraus {
        let c = Vector4::from(pauli_coefficients(k));
        chi += c * c.adjoint();
    }
    chi
}

/// Eigen-decomposition of χ.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiDecomposition {
    pub chi: ChiMatrix,
    /// Descending eigenvalues.
    pub eigenvalues: [f64; 4],
    /// Unit eigenvectors in Pauli-coefficient space.
    pub vectors: [Vector4<C64>; 4],
    /// `E_k = Σ_m v_k[m] σ_m`.
    pub kraus: [Mat2; 4],
}

/// Diagonalizes χ. A degenerate dominant eigenvalue is resolved towards the
/// target, when one is given, by choosing the direction in the degenerate
/// subspace with the largest overlap with it.
pub fn decompose_chi(chi: &ChiMatrix, target: Option<&Mat2>) -> Result<ChiDecomposition> {
    let d = decompose_chi_unchecked(chi, target);
    if d.eigenvalues[3] < -1e-10 {
        return Err(Error::NumericalConsistency(format!("χ has a negative eigenvalue {:.3e}", d.eigenvalues[3])));
    }
    Ok(d)
}

/// [`decompose_chi`] without the positivity check, for probing χ-dependent
/// quantities at nearby Hermitian matrices.
pub(crate) fn decompose_chi_unchecked(chi: &ChiMatrix, target: Option<&Mat2>) -> ChiDecomposition {
    let eig = SymmetricEigen::new(*chi);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = [0.0; 4];
    let mut vectors = [Vector4::zeros(); 4];
    for (k, &i) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[i];
        vectors[k] = eig.eigenvectors.column(i).into_owned();
    }
    if let Some(t) = target {
        let deg = (1..4).take_while(|&k| values[0] - values[k] < DEGENERACY_TOL).count() + 1;
        if deg > 1 {
            let tv = Vector4::from(pauli_coefficients(t));
            let mut w = Vector4::zeros();
            for v in &vectors[..deg] {
                w += v * v.dotc(&tv);
            }
            if w.norm() > 1e-12 {
                vectors[0] = w.normalize();
                // Re-orthogonalize the rest of the degenerate subspace.
                for k in 1..deg {
                    let mut v = vectors[k];
                    for j in 0..k {
                        let proj = vectors[j].dotc(&v);
                        v -= vectors[j] * proj;
                    }
                    if v.norm() < 1e-8 {
                        // Replace by a fresh direction from the original span.
                        for cand in 0..deg {
                            let mut c = eig.eigenvectors.column(order[cand]).into_owned();
                            for j in 0..k {
                                let proj = vectors[j].dotc(&c);
                                c -= vectors[j] * proj;
                            }
                            if c.norm() > 1e-6 {
                                v = c;
                                break;
                            }
                        }
                    }
                    vectors[k] = v.normalize();
                }
            }
        }
    }
    let kraus = vectors.map(|v| from_pauli_coefficients(&[v[0], v[1], v[2], v[3]]));
    ChiDecomposition { chi: *chi, eigenvalues: values, vectors, kraus }
}

/// χ eigenvalues and canonical Kraus operators of a Kraus list.
pub fn chi_decompose(kraus: &[Mat2]) -> Result<([f64; 4], [Mat2; 4])> {
    if kraus.is_empty() {
        return Err(Error::InvalidParameter("empty Kraus list".into()));
    }
    let d = decompose_chi(&chi_matrix(kraus), None)?;
    Ok((d.eigenvalues, d.kraus))
}

/// `⟨F⟩ = [1 + 2 Σ_k χ_k |Tr(U†E_k)/2|²]/3`.
pub fn average_fidelity(chi: &[f64; 4], kraus: &[Mat2; 4], u_tar: &Mat2) -> f64 {
    let s: f64 = chi.iter().zip(kraus).map(|(c, e)| c * ((u_tar.adjoint() * e).trace() / 2.0).norm_sqr()).sum();
    ((1.0 + 2.0 * s) / 3.0).clamp(0.0, 1.0)
}

/// `J_ent = (2/3)(1 − χ₀)`.
pub fn j_ent(chi: &[f64; 4]) -> f64 {
    (2.0 / 3.0 * (1.0 - chi[0])).max(0.0)
}

/// `J_uni = (2/3)(1 − |Tr(U†E₀)/2|²)`.
pub fn j_uni(kraus: &[Mat2; 4], u_tar: &Mat2) -> f64 {
    (2.0 / 3.0 * (1.0 - ((u_tar.adjoint() * kraus[0]).trace() / 2.0).norm_sqr())).max(0.0)
}

/// Mean absolute change of `a†a` over the four tomography states and the
/// thermal Fock inputs, from propagated tomography columns.
pub fn j_mot_columns(y: &ComplexMatrix, n_fock: usize, weights: &[f64]) -> f64 {
    let nt = weights.len();
    let states = tomography_states();
    let mut total = 0.0;
    for (n, &p) in weights.iter().enumerate() {
        let c0 = y.column(n);
        let c1 = y.column(nt + n);
        for psi in &states {
            let mut mean_n = 0.0;
            for q in 0..2 {
                for m in 0..n_fock {
                    let r = q * n_fock + m;
                    mean_n += m as f64 * (psi[0] * c0[r] + psi[1] * c1[r]).norm_sqr();
                }
            }
            total += p * (mean_n - n as f64).abs();
        }
    }
    total / 4.0
}

/// [`j_mot_columns`] for a full joint unitary.
pub fn j_mot(u: &JointOperator, params: &SystemParams) -> f64 {
    let cols = tomography_columns(u.n_fock(), params.n_thermal_max);
    j_mot_columns(&u.matrix().select_columns(cols.iter()), u.n_fock(), &params.thermal_weights())
}

fn score(decomp: &ChiDecomposition, target: &Target, j_mot: f64) -> ProcessResult {
    let (j_uni, u_ref, mikado) = match target {
        Target::Unitary(u) => (j_uni(&decomp.kraus, u), *u, None),
        Target::Mikado => {
            let fit = j_uni_mikado_general(&decomp.kraus[0]);
            let nominal = euler_zxz(fit.alpha, std::f64::consts::FRAC_PI_2, fit.beta);
            (fit.j, nominal, Some(fit))
        }
    };
    ProcessResult {
        chi_eigenvalues: decomp.eigenvalues,
        kraus_ops: decomp.kraus,
        avg_fidelity: average_fidelity(&decomp.eigenvalues, &decomp.kraus, &u_ref),
        j_ent: j_ent(&decomp.eigenvalues),
        j_uni,
        j_mot,
        mikado,
    }
}

/// Full tomography from propagated tomography columns.
pub fn process_tomography_columns(y: &ComplexMatrix, n_fock: usize, params: &SystemParams, target: &Target) -> Result<ProcessResult> {
    let weights = params.thermal_weights();
    let kraus = kraus_from_columns(y, n_fock, &weights)?;
    let tgt = match target {
        Target::Unitary(u) => Some(u),
        Target::Mikado => None,
    };
    let decomp = decompose_chi(&chi_matrix(&kraus), tgt)?;
    Ok(score(&decomp, target, j_mot_columns(y, n_fock, &weights)))
}

/// Full tomography of a joint unitary against `u_tar`, or against the
/// Mikado family when `mikado_mode` is set.
pub fn process_tomography(u: &JointOperator, params: &SystemParams, u_tar: &Mat2, mikado_mode: bool) -> Result<ProcessResult> {
    let cols = tomography_columns(u.n_fock(), params.n_thermal_max);
    let y = u.matrix().select_columns(cols.iter());
    let target = if mikado_mode { Target::Mikado } else { Target::Unitary(*u_tar) };
    process_tomography_columns(&y, u.n_fock(), params, &target)
}

/// Applies a Kraus list to a qubit density matrix.
pub fn apply_channel(kraus: &[Mat2], rho: &Mat2) -> Mat2 {
    kraus.iter().map(|k| k * rho * k.adjoint()).sum()
}

/// Applies `Σ_k χ_k E_k ρ E_k†`.
pub fn apply_canonical(chi: &[f64; 4], kraus: &[Mat2; 4], rho: &Mat2) -> Mat2 {
    chi.iter().zip(kraus).map(|(c, k)| k * rho * k.adjoint() * C64::from(*c)).sum()
}
