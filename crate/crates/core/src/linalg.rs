//! Dense complex linear algebra and Fock-space operators on the product
//! space qubit ⊗ motion.
//!
//! The qubit is always the slow index: the joint basis state `|q⟩|n⟩` sits at
//! row `q * n_fock + n`.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
/// Dense complex matrix of arbitrary shape.
pub type ComplexMatrix = DMatrix<C64>;
/// Qubit operator.
pub type Mat2 = Matrix2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Pauli matrices indexed `0 = σ₀, 1 = σx, 2 = σy, 3 = σz`.
pub fn pauli(index: usize) -> Mat2 {
    match index {
        0 => Mat2::identity(),
        1 => Mat2::new(ZERO, ONE, ONE, ZERO),
        2 => Mat2::new(ZERO, -I, I, ZERO),
        3 => Mat2::new(ONE, ZERO, ZERO, -ONE),
        _ => panic!("Pauli index {index} out of range"),
    }
}

/// `|1⟩⟨0|`, the raising operator of the drive term.
pub fn sigma_plus() -> Mat2 {
    Mat2::new(ZERO, ZERO, ONE, ZERO)
}

/// `exp(−iθσx/2)`.
pub fn rx(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    Mat2::new(C64::from(c), -I * s, -I * s, C64::from(c))
}

/// `exp(−iθσy/2)`.
pub fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    Mat2::new(C64::from(c), C64::from(-s), C64::from(s), C64::from(c))
}

/// `exp(−iθσz/2)`.
pub fn rz(theta: f64) -> Mat2 {
    Mat2::new(C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0))
}

/// `R(α, θ, β) = Rz(β) Rx(θ) Rz(α)`.
pub fn euler_zxz(alpha: f64, theta: f64, beta: f64) -> Mat2 {
    rz(beta) * rx(theta) * rz(alpha)
}

/// Phase-insensitive distance `1 − |Tr(A†B)/2|²` between qubit operators.
pub fn projective_distance(a: &Mat2, b: &Mat2) -> f64 {
    1.0 - ((a.adjoint() * b).trace() / 2.0).norm_sqr()
}

/// Largest entry modulus.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest entry modulus of `A − B`; shapes must agree.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.ncols();
    max_abs_diff(&(u.adjoint() * u), &ComplexMatrix::identity(n, n))
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Operator on the joint space, carrying the Fock cutoff it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOperator {
    n_fock: usize,
    matrix: ComplexMatrix,
}

impl JointOperator {
    pub fn new(n_fock: usize, matrix: ComplexMatrix) -> Result<Self> {
        let d = 2 * n_fock;
        if n_fock < 2 || matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "joint operator needs a {d}x{d} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { n_fock, matrix })
    }

    pub fn identity(n_fock: usize) -> Self {
        let d = 2 * n_fock;
        Self { n_fock, matrix: ComplexMatrix::identity(d, d) }
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn dim(&self) -> usize {
        2 * self.n_fock
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// Qubit block `⟨n_out|U|n_in⟩`.
    pub fn block(&self, n_out: usize, n_in: usize) -> Mat2 {
        let nf = self.n_fock;
        Mat2::from_fn(|r, c| self.matrix[(r * nf + n_out, c * nf + n_in)])
    }

    pub fn adjoint(&self) -> Self {
        Self { n_fock: self.n_fock, matrix: self.matrix.adjoint() }
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &JointOperator) -> Result<Self> {
        if rhs.n_fock != self.n_fock {
            return Err(Error::InvalidDimension(format!(
                "cannot compose operators with cutoffs {} and {}",
                self.n_fock, rhs.n_fock
            )));
        }
        Ok(Self { n_fock: self.n_fock, matrix: &self.matrix * &rhs.matrix })
    }

    /// Left-multiply by `q ⊗ I`.
    pub fn apply_qubit_left(&self, q: &Mat2) -> Self {
        let nf = self.n_fock;
        let mut out = self.matrix.clone();
        for col in 0..self.dim() {
            for n in 0..nf {
                let x0 = self.matrix[(n, col)];
                let x1 = self.matrix[(nf + n, col)];
                out[(n, col)] = q[(0, 0)] * x0 + q[(0, 1)] * x1;
                out[(nf + n, col)] = q[(1, 0)] * x0 + q[(1, 1)] * x1;
            }
        }
        Self { n_fock: nf, matrix: out }
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        max_abs_diff(&self.matrix, &self.matrix.adjoint()) <= tol
    }
}

/// Motional ladder operators, Pauli matrices and the recoil factor
/// `exp(iη(a† + a))` for a given cutoff.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub n_fock: usize,
    pub eta: f64,
    pub a: ComplexMatrix,
    pub a_dag: ComplexMatrix,
    pub n_op: ComplexMatrix,
    pub pauli: [Mat2; 4],
    /// `⟨m|exp(iη(a†+a))|n⟩` for `m, n < n_fock`.
    pub displacement: ComplexMatrix,
}

/// Annihilation operator truncated to `n` levels.
pub fn annihilation(n: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::from((k as f64).sqrt());
    }
    a
}

/// Builds the operator set. The recoil factor is exponentiated in a space
/// twice as large and then projected, so its retained matrix elements are
/// those of the untruncated operator.
pub fn build_operators(n_fock: usize, eta: f64) -> Result<OperatorSet> {
    if n_fock < 2 {
        return Err(Error::InvalidDimension(format!("n_fock must be at least 2, got {n_fock}")));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be a finite non-negative number, got {eta}")));
    }
    let a = annihilation(n_fock);
    let a_dag = a.adjoint();
    let n_op = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_fn(n_fock, |k, _| C64::from(k as f64)));
    let displacement = if eta == 0.0 {
        ComplexMatrix::identity(n_fock, n_fock)
    } else {
        let n_ext = 2 * n_fock + 24;
        let ae = annihilation(n_ext);
        let x = &ae + ae.adjoint();
        let full = hermitian_exponential(&x, C64::new(0.0, eta))?;
        full.view((0, 0), (n_fock, n_fock)).into_owned()
    };
    Ok(OperatorSet { n_fock, eta, a, a_dag, n_op, pauli: [pauli(0), pauli(1), pauli(2), pauli(3)], displacement })
}

/// Kronecker product `qubit_op ⊗ motion_op`.
pub fn kron(qubit_op: &Mat2, motion_op: &ComplexMatrix) -> Result<JointOperator> {
    let nf = motion_op.nrows();
    if motion_op.ncols() != nf {
        return Err(Error::InvalidDimension(format!(
            "motional operator must be square, got {}x{}",
            motion_op.nrows(),
            motion_op.ncols()
        )));
    }
    let mut m = ComplexMatrix::zeros(2 * nf, 2 * nf);
    for qr in 0..2 {
        for qc in 0..2 {
            let q = qubit_op[(qr, qc)];
            if q == ZERO {
                continue;
            }
            let mut view = m.view_mut((qr * nf, qc * nf), (nf, nf));
            view.zip_apply(motion_op, |dst, src| *dst = q * src);
        }
    }
    JointOperator::new(nf, m)
}

/// `exp(scale · H)` by scaling and squaring with a Padé approximant.
pub fn matrix_exponential(h: &ComplexMatrix, scale: C64) -> Result<ComplexMatrix> {
    if h.nrows() != h.ncols() {
        return Err(Error::InvalidDimension(format!("matrix exponential needs a square matrix, got {}x{}", h.nrows(), h.ncols())));
    }
    if !is_finite(h) {
        return Err(Error::NumericalConsistency("non-finite entries in exponent".into()));
    }
    Ok((h * scale).exp())
}

/// `exp(scale · H)` for Hermitian `H` through its eigendecomposition.
pub fn hermitian_exponential(h: &ComplexMatrix, scale: C64) -> Result<ComplexMatrix> {
    if h.nrows() != h.ncols() {
        return Err(Error::InvalidDimension(format!("matrix exponential needs a square matrix, got {}x{}", h.nrows(), h.ncols())));
    }
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let f = (scale * *lambda).exp();
        for z in scaled.column_mut(j).iter_mut() {
            *z *= f;
        }
    }
    Ok(scaled * v.adjoint())
}

/// `C ← A·B` for column-major complex matrices, through the blocked
/// `matrixmultiply` kernel.
pub fn gemm_into(c: &mut ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix) {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions");
    assert_eq!(c.shape(), (a.nrows(), b.ncols()), "output shape");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    // SAFETY: Complex64 is #[repr(C)] {re, im}, layout-identical to [f64; 2];
    // the pointers cover m×k, k×n and m×n contiguous column-major buffers
    // whose strides are passed explicitly, and `c` does not alias `a` or `b`
    // because it is borrowed mutably.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// Reduced qubit density matrix `Tr_m ρ`.
pub fn partial_trace_motion(rho: &JointOperator) -> Result<Mat2> {
    let m = rho.matrix();
    let tr = m.trace();
    if (tr - ONE).norm() > 1e-8 {
        return Err(Error::InconsistentState(format!("density matrix trace is {tr}, expected 1")));
    }
    let nf = rho.n_fock();
    let mut out = Mat2::zeros();
    for qr in 0..2 {
        for qc in 0..2 {
            out[(qr, qc)] = (0..nf).map(|n| m[(qr * nf + n, qc * nf + n)]).sum();
        }
    }
    Ok(out)
}

/// Pauli coefficients `c_m = Tr(σ_m A)/2`.
pub fn pauli_coefficients(a: &Mat2) -> [C64; 4] {
    [
        (a[(0, 0)] + a[(1, 1)]) / 2.0,
        (a[(0, 1)] + a[(1, 0)]) / 2.0,
        (a[(0, 1)] - a[(1, 0)]) * I / 2.0,
        (a[(0, 0)] - a[(1, 1)]) / 2.0,
    ]
}

/// `Σ_m c_m σ_m`.
pub fn from_pauli_coefficients(c: &[C64; 4]) -> Mat2 {
    Mat2::new(c[0] + c[3], c[1] - I * c[2], c[1] + I * c[2], c[0] - c[3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = ComplexMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&m + m.adjoint()) * C64::from(0.5)
    }

    #[test]
    fn two_level_operators_at_zero_eta() {
        let ops = build_operators(2, 0.0).unwrap();
        assert_eq!(ops.a, ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]));
        assert_eq!(ops.displacement, ComplexMatrix::identity(2, 2));
    }

    #[test]
    fn number_operator_spectrum() {
        let ops = build_operators(8, 0.3).unwrap();
        for k in 0..8 {
            assert_eq!(ops.n_op[(k, k)], C64::from(k as f64));
        }
        assert!(max_abs_diff(&ops.n_op, &(&ops.a_dag * &ops.a)) < 1e-14);
        assert_eq!(ops.a_dag, ops.a.adjoint());
    }

    #[test]
    fn rejects_tiny_cutoff() {
        assert!(matches!(build_operators(1, 0.1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn displacement_matches_larger_cutoff_and_is_unitary_on_low_block() {
        let eta = 0.22;
        let d30 = build_operators(30, eta).unwrap().displacement;
        let a60 = annihilation(60);
        let d60 = matrix_exponential(&(&a60 + a60.adjoint()), C64::new(0.0, eta)).unwrap();
        let low = |m: &ComplexMatrix| m.view((0, 0), (20, 20)).into_owned();
        assert!(max_abs_diff(&low(&d30), &low(&d60)) < 1e-12);
        // Unitarity of the low block: columns below 20 have negligible weight above level 30.
        let dd = d30.adjoint() * &d30;
        assert!(max_abs_diff(&low(&dd), &ComplexMatrix::identity(20, 20)) < 1e-10);
    }

    #[test]
    fn displacement_ground_state_overlap() {
        // ⟨0|exp(iη(a+a†))|0⟩ = exp(−η²/2).
        let eta = 0.4;
        let d = build_operators(12, eta).unwrap().displacement;
        assert!((d[(0, 0)].re - (-eta * eta / 2.0).exp()).abs() < 1e-13);
        assert!(d[(0, 0)].im.abs() < 1e-13);
        // ⟨1|D|0⟩ = iη exp(−η²/2).
        assert!((d[(1, 0)] - I * eta * (-eta * eta / 2.0).exp()).norm() < 1e-13);
    }

    #[test]
    fn kron_identities() {
        let ops = build_operators(5, 0.0).unwrap();
        let id = kron(&pauli(0), &ComplexMatrix::identity(5, 5)).unwrap();
        assert_eq!(id, JointOperator::identity(5));
        let sz = kron(&pauli(3), &ComplexMatrix::identity(5, 5)).unwrap();
        let nn = kron(&pauli(0), &ops.n_op).unwrap();
        let comm = sz.matrix() * nn.matrix() - nn.matrix() * sz.matrix();
        assert!(max_abs(&comm) < 1e-15);
        let lhs = kron(&pauli(1), &ops.a).unwrap().compose(&kron(&pauli(1), &ops.a_dag).unwrap()).unwrap();
        let rhs = kron(&pauli(0), &(&ops.a * &ops.a_dag)).unwrap();
        assert!(max_abs_diff(lhs.matrix(), rhs.matrix()) < 1e-12);
    }

    #[test]
    fn kron_block_layout() {
        let m = ComplexMatrix::from_fn(3, 3, |r, c| C64::new(r as f64, c as f64));
        let j = kron(&pauli(1), &m).unwrap();
        assert_eq!(j.block(2, 1), Mat2::new(ZERO, m[(2, 1)], m[(2, 1)], ZERO));
    }

    #[test]
    fn exponential_identities() {
        let h = random_hermitian(6, 3);
        let e0 = matrix_exponential(&h, ZERO).unwrap();
        assert!(max_abs_diff(&e0, &ComplexMatrix::identity(6, 6)) < 1e-15);
        let sx = ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let e = matrix_exponential(&sx, C64::new(0.0, -std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(max_abs_diff(&e, &(&sx * -I)) < 1e-14);
        assert!(matches!(matrix_exponential(&ComplexMatrix::zeros(2, 3), ONE), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn exponential_inverse_and_routes_agree() {
        for seed in 0..5 {
            let h = random_hermitian(8, seed);
            let u = matrix_exponential(&h, -I).unwrap();
            let v = matrix_exponential(&h, I).unwrap();
            assert!(max_abs_diff(&(&u * &v), &ComplexMatrix::identity(8, 8)) < 1e-12);
            assert!(unitarity_defect(&u) < 1e-12);
            let w = hermitian_exponential(&h, -I).unwrap();
            assert!(max_abs_diff(&u, &w) < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product_and_entangled_states() {
        let rho_q = Mat2::new(C64::from(0.7), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::from(0.3));
        let mut rho_m = ComplexMatrix::zeros(4, 4);
        for (k, p) in [0.5, 0.3, 0.15, 0.05].iter().enumerate() {
            rho_m[(k, k)] = C64::from(*p);
        }
        let joint = kron(&rho_q, &rho_m).unwrap();
        assert!((partial_trace_motion(&joint).unwrap() - rho_q).norm() < 1e-15);

        // (|0,0⟩ + |1,1⟩)/√2 with a two-level motion.
        let mut psi = nalgebra::DVector::<C64>::zeros(4);
        psi[0] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        psi[3] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        let rho = JointOperator::new(2, &psi * psi.adjoint()).unwrap();
        let red = partial_trace_motion(&rho).unwrap();
        assert!((red - Mat2::identity() * C64::from(0.5)).norm() < 1e-15);

        let bad = JointOperator::new(2, ComplexMatrix::identity(4, 4)).unwrap();
        assert!(matches!(partial_trace_motion(&bad), Err(Error::InconsistentState(_))));
    }

    #[test]
    fn rotation_conventions() {
        let r = rx(std::f64::consts::FRAC_PI_2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r - Mat2::new(C64::from(s), -I * s, -I * s, C64::from(s))).norm() < 1e-15);
        // Ry(θ) = Rx(−π/2) Rz(θ) Rx(π/2).
        let t = 0.83;
        let lhs = ry(t);
        let rhs = rx(-std::f64::consts::FRAC_PI_2) * rz(t) * rx(std::f64::consts::FRAC_PI_2);
        assert!(projective_distance(&lhs, &rhs) < 1e-15);
    }

    #[test]
    fn blocked_product_matches_reference() {
        let a = random_hermitian(7, 1).columns(0, 5).into_owned();
        let b = random_hermitian(5, 2).columns(0, 3).into_owned();
        let mut c = ComplexMatrix::zeros(7, 3);
        gemm_into(&mut c, &a, &b);
        assert!(max_abs_diff(&c, &(&a * &b)) < 1e-14);
    }

    proptest! {
        #[test]
        fn kron_mixed_product(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut q = || Mat2::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let (a, c) = (q(), q());
            let b = random_hermitian(4, seed) ;
            let d = random_hermitian(4, seed + 7);
            let lhs = kron(&a, &b).unwrap().compose(&kron(&c, &d).unwrap()).unwrap();
            let rhs = kron(&(a * c), &(&b * &d)).unwrap();
            prop_assert!(max_abs_diff(lhs.matrix(), rhs.matrix()) < 1e-12);
        }

        #[test]
        fn pauli_coefficients_round_trip(re in proptest::collection::vec(-2.0f64..2.0, 8)) {
            let a = Mat2::new(C64::new(re[0], re[1]), C64::new(re[2], re[3]), C64::new(re[4], re[5]), C64::new(re[6], re[7]));
            let c = pauli_coefficients(&a);
            prop_assert!((from_pauli_coefficients(&c) - a).norm() < 1e-14);
            for (m, cm) in c.iter().enumerate() {
                prop_assert!((*cm - (pauli(m) * a).trace() / 2.0).norm() < 1e-14);
            }
        }
    }
}
