//! State-side local-unitary invariants and the quantities derived from them.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{kron2, pauli, Matrix8, C64};
use crate::poly::{cubic_roots_projected, horner, sign_changes};
use crate::state::{BlochTwoQubit, ThreeQubitBloch, ThreeQubitState, TwoQubitState};

/// Below this the characteristic cubic is treated as having complex roots.
pub const DISCRIMINANT_TOL: f64 = 1e-10;
/// Slack allowed on squared singular values outside `[0, 1]`.
pub const ROOT_TOL: f64 = 1e-9;

/// The twelve Makhlin invariants used here, keyed `I1`…`I14` when serialized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSet {
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    #[serde(rename = "I4")]
    pub i4: f64,
    #[serde(rename = "I5")]
    pub i5: f64,
    #[serde(rename = "I6")]
    pub i6: f64,
    #[serde(rename = "I7")]
    pub i7: f64,
    #[serde(rename = "I8")]
    pub i8: f64,
    #[serde(rename = "I9")]
    pub i9: f64,
    #[serde(rename = "I12")]
    pub i12: f64,
    #[serde(rename = "I13")]
    pub i13: f64,
    #[serde(rename = "I14")]
    pub i14: f64,
}

impl InvariantSet {
    pub const NAMES: [&'static str; 12] = ["I1", "I2", "I3", "I4", "I5", "I6", "I7", "I8", "I9", "I12", "I13", "I14"];

    pub fn values(&self) -> [f64; 12] {
        [self.i1, self.i2, self.i3, self.i4, self.i5, self.i6, self.i7, self.i8, self.i9, self.i12, self.i13, self.i14]
    }
}

/// Hodge dual of a vector: `(⋆a)_ij = Σ_k ε_ijk a_k`.
pub fn hodge_star(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, a[2], -a[1], -a[2], 0.0, a[0], a[1], -a[0], 0.0)
}

pub fn compute_all(b: &BlochTwoQubit) -> InvariantSet {
    let (a, be, t) = (&b.alpha, &b.beta, &b.t);
    let ttt = t * t.transpose();
    let a_t = t.transpose() * a;
    let a_ttt = ttt * a;
    let t_b = t * be;
    let ttt_b = t.transpose() * t_b;
    InvariantSet {
        i1: t.determinant(),
        i2: ttt.trace(),
        i3: (ttt * ttt).trace(),
        i4: a.norm_squared(),
        i5: a_t.norm_squared(),
        i6: a_ttt.norm_squared(),
        i7: be.norm_squared(),
        i8: t_b.norm_squared(),
        i9: ttt_b.norm_squared(),
        i12: a.dot(&t_b),
        i13: a.dot(&(ttt * t_b)),
        i14: (hodge_star(a) * t * hodge_star(be).transpose() * t.transpose()).trace(),
    }
}

/// Coefficients of `x³ − I2 x² − ½(I3 − I2²) x − I1²`, highest degree first.
pub fn char_poly(inv: &InvariantSet) -> [f64; 4] {
    char_poly_from(inv.i1, inv.i2, inv.i3)
}

pub fn char_poly_from(i1: f64, i2: f64, i3: f64) -> [f64; 4] {
    [1.0, -i2, -0.5 * (i3 - i2 * i2), -i1 * i1]
}

/// Squared singular values of `T` (descending) and the sign of `det T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularTriple {
    pub lam_sq: [f64; 3],
    /// −1, 0 or +1.
    pub det_sign: i8,
}

impl SingularTriple {
    pub fn new(mut lam_sq: [f64; 3], det_sign: i8) -> Result<Self> {
        if lam_sq.iter().any(|l| !l.is_finite() || *l < -ROOT_TOL || *l > 1.0 + ROOT_TOL) {
            return Err(Error::InvalidParameter(format!("squared singular values {lam_sq:?} outside [0, 1]")));
        }
        for l in &mut lam_sq {
            *l = l.clamp(0.0, 1.0);
        }
        lam_sq.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { lam_sq, det_sign: det_sign.signum() })
    }

    pub fn singular_values(&self) -> [f64; 3] {
        self.lam_sq.map(f64::sqrt)
    }
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn singular_triple(inv: &InvariantSet) -> Result<SingularTriple> {
    singular_triple_from(inv.i1, inv.i2, inv.i3)
}

/// Solves the characteristic cubic, rejecting complex or out-of-range roots.
pub fn singular_triple_from(i1: f64, i2: f64, i3: f64) -> Result<SingularTriple> {
    if ![i1, i2, i3].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite invariant".into()));
    }
    let [_, b, c, d] = char_poly_from(i1, i2, i3);
    let (roots, disc) = cubic_roots_projected(b, c, d);
    if disc < -DISCRIMINANT_TOL {
        return Err(Error::NonPhysicalInvariants {
            discriminant: disc,
            detail: format!("characteristic cubic of (I1, I2, I3) = ({i1}, {i2}, {i3}) has complex roots"),
        });
    }
    if roots.iter().any(|r| *r < -ROOT_TOL || *r > 1.0 + ROOT_TOL) {
        return Err(Error::NonPhysicalInvariants {
            discriminant: disc,
            detail: format!("squared singular values {roots:?} leave [0, 1]"),
        });
    }
    SingularTriple::new(roots, sign_of(i1))
}

/// `2√(λ₁² + λ₂²) − 2`; positive iff some CHSH inequality can be violated.
pub fn chsh_value(s: &SingularTriple) -> f64 {
    2.0 * (s.lam_sq[0] + s.lam_sq[1]).sqrt() - 2.0
}

/// Largest singlet fraction reachable by local unitaries.
///
/// The signed normal form of `T` is `diag(ε₁λ₁, ε₂λ₂, ε₃λ₃)` with
/// `ε₁ε₂ε₃ = sign det T`; the overlap with each Bell state is one of four
/// bracket terms, and we take the best over both.
pub fn fmax_lower_bound(s: &SingularTriple) -> f64 {
    let lam = s.singular_values();
    let mut best = f64::NEG_INFINITY;
    for pattern in 0..8u8 {
        let eps = [0, 1, 2].map(|k| if pattern >> k & 1 == 1 { -1.0 } else { 1.0 });
        let prod = eps[0] * eps[1] * eps[2];
        if s.det_sign != 0 && prod != f64::from(s.det_sign) {
            continue;
        }
        let t = [0, 1, 2].map(|k| eps[k] * lam[k]);
        let brackets =
            [1.0 - t[0] - t[1] - t[2], 1.0 - t[0] + t[1] + t[2], 1.0 + t[0] - t[1] + t[2], 1.0 + t[0] + t[1] - t[2]];
        for v in brackets {
            best = best.max(v);
        }
    }
    0.25 * best
}

/// Teleportation fidelity `(2F + 1)/3` of a singlet fraction `F`.
pub fn teleport_fidelity(f: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidParameter(format!("singlet fraction {f} outside [0, 1]")));
    }
    Ok((2.0 * f + 1.0) / 3.0)
}

/// Power sums `p_k = Tr[(ρ^{T_B})^k]` for k = 2, 3, 4 and `det ρ^{T_B}`.
pub fn partial_transpose_moments(inv: &InvariantSet) -> ([f64; 3], f64) {
    let x1 = inv.i2 + inv.i4 + inv.i7;
    let x2 = inv.i1 + inv.i12;
    let x3 = inv.i2 * inv.i2 - inv.i3;
    let x4 = inv.i5 + inv.i8 + inv.i14 + inv.i4 * inv.i7;
    let p2 = (1.0 + x1) / 4.0;
    let p3 = (1.0 + 3.0 * x1 + 6.0 * x2) / 16.0;
    let p4 = (1.0 + 6.0 * x1 + 24.0 * x2 + x1 * x1 + 2.0 * x3 + 4.0 * x4) / 64.0;
    let det = (1.0 - 6.0 * p4 + 8.0 * p3 + 3.0 * p2 * p2 - 6.0 * p2) / 24.0;
    ([p2, p3, p4], det)
}

/// Quartic in `N` whose roots are `−2μ` for the eigenvalues `μ` of `ρ^{T_B}`.
pub fn negativity_quartic(inv: &InvariantSet) -> [f64; 5] {
    let ([p2, p3, _], det) = partial_transpose_moments(inv);
    [3.0, 6.0, 6.0 * (1.0 - p2), 4.0 * (1.0 - 3.0 * p2 + 2.0 * p3), 48.0 * det]
}

const QUARTIC_ZERO_TOL: f64 = 1e-12;

/// Negativity from invariants alone.
///
/// All quartic roots are real for a physical state, so the number of
/// coefficient sign changes counts the positive roots. None means the partial
/// transpose is positive and the negativity is 0; one means a single
/// negative eigenvalue, whose root is found by bisection.
pub fn negativity_from_invariants(inv: &InvariantSet) -> Result<f64> {
    let q = negativity_quartic(inv);
    if !q.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite invariant".into()));
    }
    match sign_changes(&q, QUARTIC_ZERO_TOL) {
        0 => Ok(0.0),
        1 => {
            let f = |n: f64| horner(&q, n);
            let mut hi = 1.0 + ROOT_TOL;
            if f(hi) <= 0.0 {
                hi = 2.0;
                while f(hi) <= 0.0 {
                    hi *= 2.0;
                }
                let root = bisect_positive(f, hi);
                return Err(Error::InconsistentInvariants(format!("negativity root {root:.6} exceeds 1")));
            }
            Ok(bisect_positive(f, hi).min(1.0))
        }
        n => Err(Error::InconsistentInvariants(format!(
            "negativity quartic has {n} positive roots; a two-qubit partial transpose has at most one negative eigenvalue"
        ))),
    }
}

/// The unique positive root of `f`, which is negative on `(0, root)` and
/// positive beyond it.
fn bisect_positive(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, hi);
    while hi - lo > f64::EPSILON * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `−2 · min(0, smallest eigenvalue of ρ^{T_B})`.
pub fn negativity_direct(rho: &TwoQubitState) -> f64 {
    (-2.0 * rho.partial_transpose().eigenvalues()[0]).max(0.0)
}

/// Kempe invariant from Bloch coordinates.
pub fn kempe_invariant(b: &ThreeQubitBloch) -> f64 {
    let t_ca = b.t_ac.transpose();
    (1.0 + b.alpha.norm_squared()
        + b.beta.norm_squared()
        + b.gamma.norm_squared()
        + b.alpha.dot(&(b.t_ab * b.beta))
        + b.alpha.dot(&(b.t_ac * b.gamma))
        + b.beta.dot(&(b.t_bc * b.gamma))
        + (b.t_ab * b.t_bc * t_ca).trace())
        / 8.0
}

/// Kempe invariant as `Tr[(ρ_AB⊗𝟙)(ρ_AC⊗𝟙)(ρ_BC⊗𝟙)]`, each marginal
/// embedded on its own pair of qubits.
pub fn kempe_invariant_direct(rho: &ThreeQubitState) -> Result<f64> {
    let ab = rho.marginal((0, 1))?;
    let ac = rho.marginal((0, 2))?;
    let bc = rho.marginal((1, 2))?;
    let embed = |m: &Matrix4<C64>, p: usize, q: usize| {
        let bit = |idx: usize, k: usize| (idx >> (2 - k)) & 1;
        let other = 3 - p - q;
        Matrix8::from_fn(|r, c| {
            if bit(r, other) != bit(c, other) {
                return C64::new(0.0, 0.0);
            }
            m[(2 * bit(r, p) + bit(r, q), 2 * bit(c, p) + bit(c, q))]
        })
    };
    Ok((embed(&ab, 0, 1) * embed(&ac, 0, 2) * embed(&bc, 1, 2)).trace().re)
}

/// Fidelity `⟨Φ|ρ|Φ⟩` with a two-qubit pure state.
pub fn overlap(rho: &TwoQubitState, phi: &nalgebra::Vector4<C64>) -> f64 {
    (phi.adjoint() * rho.matrix() * phi)[(0, 0)].re
}

/// `|φ⁺⟩⟨φ⁺|` written through its Pauli expansion, used in tests as a check
/// on the Bell-state conventions.
pub fn phi_plus_projector() -> Matrix4<C64> {
    (kron2(&pauli(0), &pauli(0)) + kron2(&pauli(1), &pauli(1)) - kron2(&pauli(2), &pauli(2))
        + kron2(&pauli(3), &pauli(3)))
        / C64::new(4.0, 0.0)
}
