//! Density matrices for one, two and three qubits and their Bloch coordinates.
//!
//! Two-qubit states expand as
//! `ρ = ¼[𝟙 + α·σ⊗𝟙 + 𝟙⊗β·σ + Σ T_ij σ_i⊗σ_j]`.

use nalgebra::{Matrix2, Matrix3, Matrix4, SMatrix, Vector2, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::pauli::{
    all_finite, hermitian_eigenvalues, is_hermitian, kron2, kron3, pauli, rotation_of, Matrix8, C64, ONE, ZERO,
};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-12;

fn check_density<const D: usize>(m: &SMatrix<C64, D, D>) -> Result<()> {
    if !all_finite(m) {
        return Err(Error::InvalidState("non-finite matrix entry".into()));
    }
    if !is_hermitian(m, HERMITIAN_TOL) {
        return Err(Error::InvalidState("matrix is not Hermitian".into()));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {:.3e} differs from 1", tr.re)));
    }
    Ok(())
}

fn min_eigenvalue<const D: usize>(m: &SMatrix<C64, D, D>) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Random density matrix of the given rank: `G G† / Tr(G G†)` for a complex
/// Gaussian `D × rank` matrix, i.e. the marginal of a Haar-random purification.
fn random_density<const D: usize>(seed: u64, rank: usize) -> SMatrix<C64, D, D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = SMatrix::<C64, D, D>::zeros();
    for _ in 0..rank {
        let v = SMatrix::<C64, D, 1>::from_fn(|_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        rho += v * v.adjoint();
    }
    let tr = rho.trace();
    rho / tr
}

/// A single-qubit unitary, unitary to within [`UNITARY_TOL`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleQubitUnitary(Matrix2<C64>);

impl SingleQubitUnitary {
    pub fn new(m: Matrix2<C64>) -> Result<Self> {
        Self::with_tolerance(m, UNITARY_TOL)
    }

    /// Accepts `m` if it is unitary within `tol`, then snaps it to the nearest
    /// exact unitary (polar factor). Useful for matrices read from text.
    pub fn with_tolerance(m: Matrix2<C64>, tol: f64) -> Result<Self> {
        if !all_finite(&m) {
            return Err(Error::InvalidParameter("non-finite unitary entry".into()));
        }
        let dev = (m * m.adjoint() - Matrix2::identity()).norm();
        if dev > tol {
            return Err(Error::InvalidParameter(format!("matrix deviates from unitarity by {dev:.3e}")));
        }
        if dev <= UNITARY_TOL {
            return Ok(Self(m));
        }
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        Ok(Self(u * v_t))
    }

    pub(crate) fn from_raw(m: Matrix2<C64>) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    /// Rotation `R` with `U σ_j U† = Σ_i R_ij σ_i`.
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_of(&self.0)
    }
}

/// Two-qubit density matrix.
///
/// Hermiticity and unit trace always hold. Positivity is enforced by
/// [`TwoQubitState::new`]; matrices built from Bloch data or by partial
/// transposition carry a flag instead.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<C64>,
    physical: bool,
}

impl TwoQubitState {
    /// Validated constructor used at ingestion.
    pub fn new(rho: Matrix4<C64>) -> Result<Self> {
        check_density(&rho)?;
        let min = min_eigenvalue(&rho);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { rho, physical: true })
    }

    fn flagged(rho: Matrix4<C64>) -> Self {
        let physical = min_eigenvalue(&rho) >= -PSD_TOL;
        Self { rho, physical }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.rho
    }

    pub fn is_physical(&self) -> bool {
        self.physical
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Matrix4::identity() / C64::new(4.0, 0.0), physical: true }
    }

    pub fn from_pure(psi: &Vector4<C64>) -> Result<Self> {
        let n = psi.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidState("state vector has zero or non-finite norm".into()));
        }
        let psi = psi / C64::new(n, 0.0);
        Ok(Self { rho: psi * psi.adjoint(), physical: true })
    }

    /// `|ψ⁻⟩ = (|01⟩ − |10⟩)/√2`.
    pub fn singlet() -> Self {
        Self::from_pure(&Vector4::new(ZERO, ONE, -ONE, ZERO)).expect("nonzero vector")
    }

    /// `p |ψ⁻⟩⟨ψ⁻| + (1 − p) 𝟙/4`, physical for `p ∈ [−1/3, 1]`.
    pub fn werner(p: f64) -> Result<Self> {
        if !(-1.0 / 3.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("Werner parameter {p} outside [-1/3, 1]")));
        }
        Self::singlet().with_visibility(p)
    }

    /// Mixes in white noise: `v ρ + (1 − v) 𝟙/4`.
    pub fn with_visibility(&self, v: f64) -> Result<Self> {
        if !(-1.0 / 3.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("visibility {v} outside [-1/3, 1]")));
        }
        let rho = self.rho * C64::new(v, 0.0) + Matrix4::identity() * C64::new((1.0 - v) / 4.0, 0.0);
        Ok(Self::flagged(rho))
    }

    /// `(U_A ⊗ U_B) ρ (U_A ⊗ U_B)†`.
    pub fn apply_local(&self, ua: &SingleQubitUnitary, ub: &SingleQubitUnitary) -> Self {
        let u = kron2(ua.matrix(), ub.matrix());
        Self { rho: u * self.rho * u.adjoint(), physical: self.physical }
    }

    /// Transposes the second tensor factor.
    pub fn partial_transpose(&self) -> Self {
        let rho = Matrix4::from_fn(|r, c| {
            let (a, b) = (r / 2, r % 2);
            let (a2, b2) = (c / 2, c % 2);
            self.rho[(2 * a + b2, 2 * a2 + b)]
        });
        Self::flagged(rho)
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.rho)
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn bloch(&self) -> BlochTwoQubit {
        BlochTwoQubit::from_matrix_unchecked(&self.rho)
    }
}

/// Bloch coordinates `(α, β, T)` of a two-qubit operator.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochTwoQubit {
    pub alpha: Vector3<f64>,
    pub beta: Vector3<f64>,
    pub t: Matrix3<f64>,
}

impl BlochTwoQubit {
    pub fn new(alpha: Vector3<f64>, beta: Vector3<f64>, t: Matrix3<f64>) -> Self {
        Self { alpha, beta, t }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), Matrix3::zeros())
    }

    /// Decomposes any Hermitian unit-trace matrix; positivity is not required.
    pub fn from_matrix(m: &Matrix4<C64>) -> Result<Self> {
        check_density(m)?;
        Ok(Self::from_matrix_unchecked(m))
    }

    fn from_matrix_unchecked(m: &Matrix4<C64>) -> Self {
        let tr = |a: usize, b: usize| (m * kron2(&pauli(a), &pauli(b))).trace().re;
        Self {
            alpha: Vector3::from_fn(|i, _| tr(i + 1, 0)),
            beta: Vector3::from_fn(|j, _| tr(0, j + 1)),
            t: Matrix3::from_fn(|i, j| tr(i + 1, j + 1)),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<C64> {
        let mut m = Matrix4::identity();
        for i in 0..3 {
            m += kron2(&pauli(i + 1), &pauli(0)) * C64::new(self.alpha[i], 0.0);
            m += kron2(&pauli(0), &pauli(i + 1)) * C64::new(self.beta[i], 0.0);
            for j in 0..3 {
                m += kron2(&pauli(i + 1), &pauli(j + 1)) * C64::new(self.t[(i, j)], 0.0);
            }
        }
        m / C64::new(4.0, 0.0)
    }

    /// Coordinates after `ρ → (U_A⊗U_B) ρ (U_A⊗U_B)†` with induced rotations `ra`, `rb`.
    pub fn rotated(&self, ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> Self {
        Self::new(ra * self.alpha, rb * self.beta, ra * self.t * rb.transpose())
    }

    /// Partial transpose on B flips `β_y` and the second column of `T`.
    pub fn partial_transpose(&self) -> Self {
        let mut out = self.clone();
        out.beta[1] = -out.beta[1];
        for i in 0..3 {
            out.t[(i, 1)] = -out.t[(i, 1)];
        }
        out
    }
}

pub fn bloch_decompose(rho: &TwoQubitState) -> BlochTwoQubit {
    rho.bloch()
}

/// Exact inverse of [`bloch_decompose`]; the result is flagged when not PSD.
pub fn bloch_compose(b: &BlochTwoQubit) -> TwoQubitState {
    TwoQubitState::flagged(b.to_matrix())
}

pub fn partial_transpose(rho: &TwoQubitState) -> TwoQubitState {
    rho.partial_transpose()
}

/// Deterministic random two-qubit state of rank 1 to 4.
pub fn random_state(seed: u64, rank: usize) -> Result<TwoQubitState> {
    if !(1..=4).contains(&rank) {
        return Err(Error::InvalidParameter(format!("rank {rank} outside 1..=4")));
    }
    Ok(TwoQubitState { rho: random_density::<4>(seed, rank), physical: true })
}

/// Pure state `c|00⟩ + √(1−c²)|11⟩` with Schmidt coefficient `c`.
pub fn schmidt_state(c: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("Schmidt coefficient {c} outside [0, 1]")));
    }
    let s = (1.0 - c * c).sqrt();
    TwoQubitState::from_pure(&Vector4::new(C64::new(c, 0.0), ZERO, ZERO, C64::new(s, 0.0)))
}

/// Pure single-qubit state with the given Bloch vector direction.
pub fn qubit_from_bloch(n: &Vector3<f64>) -> Result<Vector2<C64>> {
    let r = n.norm();
    if !r.is_finite() || r == 0.0 {
        return Err(Error::InvalidParameter("Bloch vector has zero or non-finite length".into()));
    }
    let (x, y, z) = (n[0] / r, n[1] / r, n[2] / r);
    let theta = z.clamp(-1.0, 1.0).acos();
    let phi = y.atan2(x);
    Ok(Vector2::new(C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)))
}

/// Three-qubit density matrix, qubit order A, B, C (A most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeQubitState {
    rho: Matrix8,
    physical: bool,
}

impl ThreeQubitState {
    pub fn new(rho: Matrix8) -> Result<Self> {
        check_density(&rho)?;
        let min = min_eigenvalue(&rho);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { rho, physical: true })
    }

    pub fn matrix(&self) -> &Matrix8 {
        &self.rho
    }

    pub fn is_physical(&self) -> bool {
        self.physical
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Matrix8::identity() / C64::new(8.0, 0.0), physical: true }
    }

    pub fn from_pure(psi: &SMatrix<C64, 8, 1>) -> Result<Self> {
        let n = psi.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidState("state vector has zero or non-finite norm".into()));
        }
        let psi = psi / C64::new(n, 0.0);
        Ok(Self { rho: psi * psi.adjoint(), physical: true })
    }

    /// `(|000⟩ + |111⟩)/√2`.
    pub fn ghz() -> Self {
        let mut psi = SMatrix::<C64, 8, 1>::zeros();
        psi[0] = ONE;
        psi[7] = ONE;
        Self::from_pure(&psi).expect("nonzero vector")
    }

    pub fn basis(index: usize) -> Result<Self> {
        if index >= 8 {
            return Err(Error::InvalidParameter(format!("basis index {index} outside 0..8")));
        }
        let mut psi = SMatrix::<C64, 8, 1>::zeros();
        psi[index] = ONE;
        Self::from_pure(&psi)
    }

    /// Reduced state of two parties; `pair` lists the kept qubits in order.
    pub fn marginal(&self, pair: (usize, usize)) -> Result<Matrix4<C64>> {
        let (p, q) = pair;
        if p > 2 || q > 2 || p == q {
            return Err(Error::InvalidParameter(format!("invalid qubit pair ({p}, {q})")));
        }
        let traced = 3 - p - q;
        let bit = |idx: usize, k: usize| (idx >> (2 - k)) & 1;
        let mut out = Matrix4::zeros();
        for r in 0..8 {
            for c in 0..8 {
                if bit(r, traced) != bit(c, traced) {
                    continue;
                }
                let rr = 2 * bit(r, p) + bit(r, q);
                let cc = 2 * bit(c, p) + bit(c, q);
                out[(rr, cc)] += self.rho[(r, c)];
            }
        }
        Ok(out)
    }

    pub fn bloch(&self) -> ThreeQubitBloch {
        ThreeQubitBloch::from_matrix_unchecked(&self.rho)
    }

    pub fn apply_local(&self, u: [&SingleQubitUnitary; 3]) -> Self {
        let big = kron3(u[0].matrix(), u[1].matrix(), u[2].matrix());
        Self { rho: big * self.rho * big.adjoint(), physical: self.physical }
    }
}

/// Deterministic random three-qubit state of rank 1 to 8.
pub fn random_three_qubit_state(seed: u64, rank: usize) -> Result<ThreeQubitState> {
    if !(1..=8).contains(&rank) {
        return Err(Error::InvalidParameter(format!("rank {rank} outside 1..=8")));
    }
    Ok(ThreeQubitState { rho: random_density::<8>(seed, rank), physical: true })
}

/// Three-qubit Bloch coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeQubitBloch {
    pub alpha: Vector3<f64>,
    pub beta: Vector3<f64>,
    pub gamma: Vector3<f64>,
    pub t_ab: Matrix3<f64>,
    pub t_ac: Matrix3<f64>,
    pub t_bc: Matrix3<f64>,
    pub w: [[[f64; 3]; 3]; 3],
}

impl ThreeQubitBloch {
    pub fn from_matrix(m: &Matrix8) -> Result<Self> {
        check_density(m)?;
        Ok(Self::from_matrix_unchecked(m))
    }

    fn from_matrix_unchecked(m: &Matrix8) -> Self {
        let tr = |a: usize, b: usize, c: usize| (m * kron3(&pauli(a), &pauli(b), &pauli(c))).trace().re;
        let mut w = [[[0.0; 3]; 3]; 3];
        for (i, wi) in w.iter_mut().enumerate() {
            for (j, wij) in wi.iter_mut().enumerate() {
                for (k, wijk) in wij.iter_mut().enumerate() {
                    *wijk = tr(i + 1, j + 1, k + 1);
                }
            }
        }
        Self {
            alpha: Vector3::from_fn(|i, _| tr(i + 1, 0, 0)),
            beta: Vector3::from_fn(|i, _| tr(0, i + 1, 0)),
            gamma: Vector3::from_fn(|i, _| tr(0, 0, i + 1)),
            t_ab: Matrix3::from_fn(|i, j| tr(i + 1, j + 1, 0)),
            t_ac: Matrix3::from_fn(|i, j| tr(i + 1, 0, j + 1)),
            t_bc: Matrix3::from_fn(|i, j| tr(0, i + 1, j + 1)),
            w,
        }
    }

    pub fn to_matrix(&self) -> Matrix8 {
        let term = |a: usize, b: usize, c: usize, x: f64| kron3(&pauli(a), &pauli(b), &pauli(c)) * C64::new(x, 0.0);
        let mut m = Matrix8::identity();
        for i in 0..3 {
            m += term(i + 1, 0, 0, self.alpha[i]);
            m += term(0, i + 1, 0, self.beta[i]);
            m += term(0, 0, i + 1, self.gamma[i]);
            for j in 0..3 {
                m += term(i + 1, j + 1, 0, self.t_ab[(i, j)]);
                m += term(i + 1, 0, j + 1, self.t_ac[(i, j)]);
                m += term(0, i + 1, j + 1, self.t_bc[(i, j)]);
                for k in 0..3 {
                    m += term(i + 1, j + 1, k + 1, self.w[i][j][k]);
                }
            }
        }
        m / C64::new(8.0, 0.0)
    }

    /// Inverse of the decomposition; the result is flagged when not PSD.
    pub fn compose(&self) -> ThreeQubitState {
        let rho = self.to_matrix();
        let physical = min_eigenvalue(&rho) >= -PSD_TOL;
        ThreeQubitState { rho, physical }
    }
}

pub fn three_qubit_bloch(rho: &ThreeQubitState) -> ThreeQubitBloch {
    rho.bloch()
}
