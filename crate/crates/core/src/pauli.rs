//! Pauli matrices, tensor products and the SU(2) to SO(3) map.

use nalgebra::{Complex, Matrix2, Matrix3, Matrix4, SMatrix};

pub type C64 = Complex<f64>;
pub type Matrix8 = SMatrix<C64, 8, 8>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Pauli matrix by index: 0 identity, 1 X, 2 Y, 3 Z.
pub fn pauli(i: usize) -> Matrix2<C64> {
    match i {
        0 => Matrix2::new(ONE, ZERO, ZERO, ONE),
        1 => Matrix2::new(ZERO, ONE, ONE, ZERO),
        2 => Matrix2::new(ZERO, -I, I, ZERO),
        3 => Matrix2::new(ONE, ZERO, ZERO, -ONE),
        _ => panic!("Pauli index {i} out of range"),
    }
}

pub fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

pub fn kron3(a: &Matrix2<C64>, b: &Matrix2<C64>, c: &Matrix2<C64>) -> Matrix8 {
    Matrix8::from_fn(|r, col| a[(r / 4, col / 4)] * b[((r / 2) % 2, (col / 2) % 2)] * c[(r % 2, col % 2)])
}

/// Induced rotation with `U σ_j U† = Σ_i R_ij σ_i`, i.e. `R_ij = ½ Tr(σ_i U σ_j U†)`.
pub fn rotation_of(u: &Matrix2<C64>) -> Matrix3<f64> {
    let ud = u.adjoint();
    Matrix3::from_fn(|i, j| 0.5 * (pauli(i + 1) * u * pauli(j + 1) * ud).trace().re)
}

pub(crate) fn is_hermitian<const D: usize>(m: &SMatrix<C64, D, D>, tol: f64) -> bool {
    (m - m.adjoint()).iter().all(|z| z.norm() <= tol)
}

pub(crate) fn all_finite<const R: usize, const C: usize>(m: &SMatrix<C64, R, C>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub(crate) fn hermitian_eigenvalues<const D: usize>(m: &SMatrix<C64, D, D>) -> [f64; D] {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let h = nalgebra::DMatrix::from_iterator(D, D, h.iter().copied());
    let eig = nalgebra::SymmetricEigen::new(h).eigenvalues;
    let mut out = [0.0; D];
    for (o, e) in out.iter_mut().zip(eig.iter()) {
        *o = *e;
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out
}
