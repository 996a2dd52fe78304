//! Randomized-measurement moments
//! `R^(t)(M) = ∫∫ dU_A dU_B Tr[(U_A⊗U_B) ρ (U_A⊗U_B)† M]^t`
//! in closed form, plus a Monte Carlo Haar integrator that checks them.

use nalgebra::{DMatrix, Matrix2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::haar_unitary;
use crate::invariants::compute_all;
use crate::pauli::{pauli, C64};
use crate::state::{BlochTwoQubit, ThreeQubitBloch, ThreeQubitState, TwoQubitState};

/// `I14 = HODGE_EXTRACTION_FACTOR · [R⁴(M_Hodge) − R⁴(M'_Hodge)]`.
///
/// The two fourth moments differ only in the Hodge term, which enters
/// `R⁴(M_Hodge)` as `−(2/3)·I14`; the factor is fixed against the state-side
/// invariant in the tests below.
pub const HODGE_EXTRACTION_FACTOR: f64 = -0.75;

/// The observable catalog.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ObservableKind {
    /// `Z ⊗ 𝟙`
    LocalZA,
    /// `𝟙 ⊗ Z`
    LocalZB,
    /// `Z ⊗ Z`
    ZZ,
    /// `(k_A 𝟙 + l_A Z) ⊗ (k_B 𝟙 + l_B Z)`
    KL { k_a: f64, l_a: f64, k_b: f64, l_b: f64 },
    /// `Σ_i σ_i ⊗ σ_i`
    Mdet,
    /// `𝟙⊗X + X⊗𝟙 + Y⊗Z + Z⊗Y`
    MHodge,
    /// `𝟙⊗X + X⊗𝟙 + Y⊗Z − Z⊗Y`
    MHodgePrime,
    /// `|ψ⁻⟩⟨ψ⁻|`
    PsiMinusProj,
    /// `|ν_Z⟩⟨ν_Z|` with `|ν_Z⟩ = (cos π/8, 0, 0, sin π/8)`
    NuZProj,
    /// `ZZ𝟙 + Z𝟙Z + 𝟙ZZ` on three qubits
    MKempe,
}

impl ObservableKind {
    pub fn parties(&self) -> usize {
        match self {
            ObservableKind::MKempe => 3,
            _ => 2,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ObservableKind::KL { k_a, l_a, k_b, l_b } => format!("KL({k_a}, {l_a}, {k_b}, {l_b})"),
            other => format!("{other:?}"),
        }
    }
}

/// A tensor product of Pauli factors (indices 0..=3) with a real weight.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub factors: Vec<usize>,
}

fn term(coeff: f64, factors: &[usize]) -> PauliTerm {
    PauliTerm { coeff, factors: factors.to_vec() }
}

fn pauli_string(factors: &[usize]) -> DMatrix<C64> {
    factors.iter().fold(DMatrix::from_element(1, 1, C64::new(1.0, 0.0)), |acc, &f| {
        let p = pauli(f);
        let p = DMatrix::from_iterator(2, 2, p.iter().copied());
        acc.kronecker(&p)
    })
}

/// Observable with its matrix and Pauli expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    pub matrix: DMatrix<C64>,
    pub pauli_terms: Vec<PauliTerm>,
}

fn projector(v: &Vector4<C64>) -> DMatrix<C64> {
    let m = v * v.adjoint();
    DMatrix::from_iterator(4, 4, m.iter().copied())
}

/// Pauli coefficients `Tr(M σ_a⊗σ_b)/4` of a two-qubit matrix.
fn decompose_two(m: &DMatrix<C64>) -> Vec<PauliTerm> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            let c = (m * pauli_string(&[a, b])).trace().re / 4.0;
            if c.abs() > 1e-15 {
                out.push(term(c, &[a, b]));
            }
        }
    }
    out
}

pub fn nu_z() -> Vector4<C64> {
    let a = (std::f64::consts::PI / 8.0).cos();
    Vector4::new(C64::new(a, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new((1.0 - a * a).sqrt(), 0.0))
}

pub fn psi_minus() -> Vector4<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector4::new(C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(0.0, 0.0))
}

impl ObservableSpec {
    pub fn new(kind: ObservableKind) -> Result<Self> {
        use ObservableKind::*;
        let (matrix, pauli_terms) = match kind {
            LocalZA => Self::from_terms(vec![term(1.0, &[3, 0])]),
            LocalZB => Self::from_terms(vec![term(1.0, &[0, 3])]),
            ZZ => Self::from_terms(vec![term(1.0, &[3, 3])]),
            KL { k_a, l_a, k_b, l_b } => {
                if ![k_a, l_a, k_b, l_b].iter().all(|x| x.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite KL parameter".into()));
                }
                let local = |k: f64, l: f64| {
                    let m = pauli(0) * C64::new(k, 0.0) + pauli(3) * C64::new(l, 0.0);
                    DMatrix::from_iterator(2, 2, m.iter().copied())
                };
                let matrix = local(k_a, l_a).kronecker(&local(k_b, l_b));
                let terms = vec![
                    term(k_a * k_b, &[0, 0]),
                    term(k_a * l_b, &[0, 3]),
                    term(l_a * k_b, &[3, 0]),
                    term(l_a * l_b, &[3, 3]),
                ];
                (matrix, terms)
            }
            Mdet => Self::from_terms(vec![term(1.0, &[1, 1]), term(1.0, &[2, 2]), term(1.0, &[3, 3])]),
            MHodge | MHodgePrime => {
                let s = if kind == MHodge { 1.0 } else { -1.0 };
                Self::from_terms(vec![term(1.0, &[0, 1]), term(1.0, &[1, 0]), term(1.0, &[2, 3]), term(s, &[3, 2])])
            }
            PsiMinusProj => {
                let m = projector(&psi_minus());
                let terms = decompose_two(&m);
                (m, terms)
            }
            NuZProj => {
                let m = projector(&nu_z());
                let terms = decompose_two(&m);
                (m, terms)
            }
            MKempe => Self::from_terms(vec![term(1.0, &[3, 3, 0]), term(1.0, &[3, 0, 3]), term(1.0, &[0, 3, 3])]),
        };
        Ok(Self { kind, matrix, pauli_terms })
    }

    fn from_terms(terms: Vec<PauliTerm>) -> (DMatrix<C64>, Vec<PauliTerm>) {
        let matrix = Self::sum_terms(&terms);
        (matrix, terms)
    }

    fn sum_terms(terms: &[PauliTerm]) -> DMatrix<C64> {
        let dim = 1 << terms[0].factors.len();
        terms.iter().fold(DMatrix::zeros(dim, dim), |acc, t| acc + pauli_string(&t.factors) * C64::new(t.coeff, 0.0))
    }

    /// Weighted sum of the Pauli expansion, for consistency checks.
    pub fn matrix_from_terms(&self) -> DMatrix<C64> {
        Self::sum_terms(&self.pauli_terms)
    }

    /// Largest absolute eigenvalue.
    pub fn operator_norm(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        nalgebra::SymmetricEigen::new(h).eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    pub value: f64,
    pub t: u32,
    pub observable: ObservableKind,
}

fn unsupported(kind: &ObservableKind, t: u32) -> Error {
    Error::UnsupportedMoment { kind: kind.name(), t }
}

/// Scalar invariants entering the moment expansions.
struct Scalars {
    a2: f64,
    b2: f64,
    i1: f64,
    i2: f64,
    i3: f64,
    i5: f64,
    i6: f64,
    i8: f64,
    i9: f64,
    i12: f64,
    i13: f64,
    i14: f64,
    /// `Tr (TTᵀ)³`
    tr3: f64,
}

impl Scalars {
    fn of(b: &BlochTwoQubit) -> Self {
        let inv = compute_all(b);
        let ttt = b.t * b.t.transpose();
        Self {
            a2: inv.i4,
            b2: inv.i7,
            i1: inv.i1,
            i2: inv.i2,
            i3: inv.i3,
            i5: inv.i5,
            i6: inv.i6,
            i8: inv.i8,
            i9: inv.i9,
            i12: inv.i12,
            i13: inv.i13,
            i14: inv.i14,
            tr3: (ttt * ttt * ttt).trace(),
        }
    }
}

/// Symmetric `KL(k, l, k, l)` moments for t = 1..=6.
fn kl_symmetric(s: &Scalars, k: f64, l: f64, t: u32) -> Option<f64> {
    let (a2, b2, i2, i3, i12) = (s.a2, s.b2, s.i2, s.i3, s.i12);
    let sum2 = a2 + b2;
    let sum4 = a2 * a2 + b2 * b2;
    let k2 = k * k;
    let l2 = l * l;
    let kp = |n: i32| k.powi(n);
    let lp = |n: i32| l.powi(n);
    Some(match t {
        1 => k2,
        2 => kp(4) + k2 * l2 * sum2 / 3.0 + lp(4) * i2 / 9.0,
        3 => kp(6) + kp(4) * l2 * sum2 + k2 * lp(4) * (i2 + 2.0 * i12) / 3.0,
        4 => {
            kp(8)
                + 2.0 * kp(6) * l2 * sum2
                + 2.0 / 3.0 * kp(4) * lp(4) * (0.3 * sum4 + a2 * b2 + i2 + 4.0 * i12)
                + 2.0 / 15.0 * k2 * lp(6) * (sum2 * i2 + 2.0 * (s.i5 + s.i8))
                + lp(8) * (2.0 * i3 + i2 * i2) / 75.0
        }
        5 => {
            kp(10)
                + 10.0 / 3.0 * kp(8) * l2 * sum2
                + 10.0 / 3.0 * kp(6) * lp(4) * (0.3 * sum4 + a2 * b2 + i2 / 3.0 + 2.0 * i12)
                + 2.0 / 3.0 * kp(4) * lp(6) * (sum2 * (i2 + 2.0 * i12) + 2.0 * (s.i5 + s.i8))
                + 1.0 / 15.0 * k2 * lp(8) * (2.0 * i3 + i2 * (i2 + 4.0 * i12) + 8.0 * s.i13)
        }
        6 => {
            kp(12)
                + 5.0 * kp(10) * l2 * sum2
                + kp(8) * lp(4) * (9.0 * sum4 + 30.0 * a2 * b2 + 5.0 * i2 + 40.0 * i12) / 3.0
                + kp(6)
                    * lp(6)
                    * (sum2 * (a2 * b2 + 2.0 * i2 + 8.0 * i12) + 4.0 * (s.i5 + s.i8) + (a2.powi(3) + b2.powi(3)) / 7.0)
                + kp(4) * lp(8) / 5.0 * (2.0 * i3 + i2 * (i2 + 8.0 * i12 + 5.0 / 7.0 * sum4 + 2.0 * a2 * b2))
                + kp(4) * lp(8) / 5.0
                    * (16.0 * s.i13
                        + (20.0 / 7.0 * a2 + 4.0 * b2) * s.i5
                        + (20.0 / 7.0 * b2 + 4.0 * a2) * s.i8
                        + 8.0 * i12 * i12)
                + k2 * lp(10) / 35.0 * (sum2 * (2.0 * i3 + i2 * i2) + 4.0 * (s.i5 + s.i8) * i2)
                + 8.0 / 35.0 * k2 * lp(10) * (s.i6 + s.i9)
                + lp(12) / 735.0 * (8.0 * s.tr3 + 6.0 * i2 * i3 + i2.powi(3))
        }
        _ => return None,
    })
}

fn hodge_fourth(s: &Scalars, sign: f64) -> f64 {
    let sum2 = s.a2 + s.b2;
    (s.a2 * s.a2 + s.b2 * s.b2) / 5.0 + 2.0 / 3.0 * s.a2 * s.b2 + 8.0 / 15.0 * sum2 * s.i2 + 11.0 / 75.0 * s.i2 * s.i2
        - s.i3 / 25.0
        - 4.0 / 15.0 * (s.i5 + s.i8)
        - sign * 2.0 / 3.0 * s.i14
}

fn nu_z_fourth(s: &Scalars) -> f64 {
    let sum2 = s.a2 + s.b2;
    (300.0 + 300.0 * sum2 + 400.0 * s.i2 + 400.0 * s.i12 - 600.0 * s.i1
        + 15.0 * (s.a2 * s.a2 + s.b2 * s.b2)
        + 50.0 * s.a2 * s.b2
        + 60.0 * sum2 * s.i2
        + 20.0 * (s.i5 + s.i8)
        - 23.0 * s.i3
        + 51.0 * s.i2 * s.i2
        - 50.0 * s.i14)
        / (75.0 * 1024.0)
}

/// Closed-form moment for the supported `(kind, t)` pairs; anything else is
/// an [`Error::UnsupportedMoment`].
pub fn analytic_moment(b: &BlochTwoQubit, kind: &ObservableKind, t: u32) -> Result<MomentValue> {
    use ObservableKind::*;
    let s = Scalars::of(b);
    let value = match (kind, t) {
        (LocalZA, 1) | (LocalZB, 1) => Some(0.0),
        (LocalZA, 2) => Some(s.a2 / 3.0),
        (LocalZB, 2) => Some(s.b2 / 3.0),
        (ZZ, t) if t % 2 == 1 => Some(0.0),
        (ZZ, t) => kl_symmetric(&s, 0.0, 1.0, t),
        (&KL { k_a, l_a, k_b, l_b }, t) if k_a == k_b && l_a == l_b => kl_symmetric(&s, k_a, l_a, t),
        (Mdet, 1) => Some(0.0),
        (Mdet, 2) => Some(s.i2 / 3.0),
        (Mdet, 3) => Some(s.i1),
        (MHodge, 4) => Some(hodge_fourth(&s, 1.0)),
        (MHodgePrime, 4) => Some(hodge_fourth(&s, -1.0)),
        (PsiMinusProj, 1) => Some(0.25),
        (PsiMinusProj, 2) => Some((1.0 + s.i2 / 3.0) / 16.0),
        (PsiMinusProj, 3) => Some((1.0 + s.i2 - s.i1) / 64.0),
        (NuZProj, 4) => Some(nu_z_fourth(&s)),
        _ => None,
    };
    value.map(|value| MomentValue { value, t, observable: *kind }).ok_or_else(|| unsupported(kind, t))
}

/// Difference of the Hodge-pair fourth moments, scaled to `I14`.
pub fn hodge_extract(b: &BlochTwoQubit) -> f64 {
    let s = Scalars::of(b);
    HODGE_EXTRACTION_FACTOR * (hodge_fourth(&s, 1.0) - hodge_fourth(&s, -1.0))
}

/// Third moment of `M_Kempe`: `(2/9) Tr(T^AB T^BC T^CA)`.
pub fn kempe_moment(b: &ThreeQubitBloch) -> f64 {
    2.0 / 9.0 * (b.t_ab * b.t_bc * b.t_ac.transpose()).trace()
}

/// `det T` from the first three moments of `|ψ⁻⟩⟨ψ⁻|`, using
/// `M_det = 𝟙 − 4|ψ⁻⟩⟨ψ⁻|` and the binomial expansion of its cube.
pub fn det_from_psi_minus_moments(r1: f64, r2: f64, r3: f64) -> f64 {
    1.0 - 12.0 * r1 + 48.0 * r2 - 64.0 * r3
}

/// Input state for the Monte Carlo oracle.
#[derive(Clone, Copy, Debug)]
pub enum LocalSystem<'a> {
    Two(&'a TwoQubitState),
    Three(&'a ThreeQubitState),
}

impl<'a> From<&'a TwoQubitState> for LocalSystem<'a> {
    fn from(s: &'a TwoQubitState) -> Self {
        LocalSystem::Two(s)
    }
}

impl<'a> From<&'a ThreeQubitState> for LocalSystem<'a> {
    fn from(s: &'a ThreeQubitState) -> Self {
        LocalSystem::Three(s)
    }
}

impl LocalSystem<'_> {
    fn parties(&self) -> usize {
        match self {
            LocalSystem::Two(_) => 2,
            LocalSystem::Three(_) => 3,
        }
    }

    fn density(&self) -> DMatrix<C64> {
        match self {
            LocalSystem::Two(s) => DMatrix::from_iterator(4, 4, s.matrix().iter().copied()),
            LocalSystem::Three(s) => DMatrix::from_iterator(8, 8, s.matrix().iter().copied()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub t: u32,
    pub estimate: f64,
    pub std_error: f64,
}

pub const MC_MIN_SAMPLES: usize = 1000;
const MC_BLOCK: usize = 1024;

/// Monte Carlo moments for several orders from one set of Haar samples.
///
/// Samples are split into fixed-size blocks, each with its own ChaCha stream
/// derived from `seed`; blocks run in parallel and are reduced in order.
pub fn mc_moments(
    state: LocalSystem<'_>,
    obs: &ObservableSpec,
    ts: &[u32],
    samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if samples < MC_MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!("need at least {MC_MIN_SAMPLES} samples, got {samples}")));
    }
    if state.parties() != obs.kind.parties() {
        return Err(Error::InvalidParameter(format!(
            "{} acts on {} qubits but the state has {}",
            obs.kind.name(),
            obs.kind.parties(),
            state.parties()
        )));
    }
    let rho = state.density();
    let m = &obs.matrix;
    let blocks = samples.div_ceil(MC_BLOCK);
    let partial: Vec<Vec<(f64, f64)>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let count = MC_BLOCK.min(samples - block * MC_BLOCK);
            let mut acc = vec![(0.0, 0.0); ts.len()];
            for _ in 0..count {
                let u = (0..state.parties()).fold(DMatrix::from_element(1, 1, C64::new(1.0, 0.0)), |acc, _| {
                    let h: Matrix2<C64> = *haar_unitary(&mut rng).matrix();
                    acc.kronecker(&DMatrix::from_iterator(2, 2, h.iter().copied()))
                });
                let rho_u = &u * &rho * u.adjoint();
                let e = rho_u.component_mul(&m.transpose()).sum().re;
                for (a, &t) in acc.iter_mut().zip(ts) {
                    let x = e.powi(t as i32);
                    a.0 += x;
                    a.1 += x * x;
                }
            }
            acc
        })
        .collect();
    let n = samples as f64;
    Ok(ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (s, s2) = partial.iter().fold((0.0, 0.0), |(a, b), p| (a + p[i].0, b + p[i].1));
            let mean = s / n;
            let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
            McEstimate { t, estimate: mean, std_error: (var / n).sqrt() }
        })
        .collect())
}

pub fn mc_moment(
    state: LocalSystem<'_>,
    obs: &ObservableSpec,
    t: u32,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let est = mc_moments(state, obs, &[t], samples, seed)?[0];
    Ok((est.estimate, est.std_error))
}

/// Invariants recovered from moments; absent entries lacked their inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialInvariants {
    #[serde(rename = "I1")]
    pub i1: Option<f64>,
    #[serde(rename = "I2")]
    pub i2: Option<f64>,
    #[serde(rename = "I3")]
    pub i3: Option<f64>,
    #[serde(rename = "I4")]
    pub i4: Option<f64>,
    #[serde(rename = "I7")]
    pub i7: Option<f64>,
    #[serde(rename = "I12")]
    pub i12: Option<f64>,
    #[serde(rename = "I14")]
    pub i14: Option<f64>,
}

impl PartialInvariants {
    /// Fails with the list of invariants that could not be recovered.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| match **n {
                "I1" => self.i1.is_none(),
                "I2" => self.i2.is_none(),
                "I3" => self.i3.is_none(),
                "I4" => self.i4.is_none(),
                "I7" => self.i7.is_none(),
                "I12" => self.i12.is_none(),
                "I14" => self.i14.is_none(),
                _ => true,
            })
            .map(|n| n.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompleteInput { missing })
        }
    }
}

/// Algebraic inversion of the closed forms:
/// `I2 = 9 R²(ZZ)`, `I3 = (75 R⁴(ZZ) − I2²)/2`, `I1 = R³(M_det)` (or the
/// `|ψ⁻⟩` route), `I4 = 3 R²(Z⊗𝟙)`, `I7 = 3 R²(𝟙⊗Z)`, `I12` from a symmetric
/// KL third moment, `I14` from the Hodge pair.
pub fn invert_moments(moments: &[MomentValue]) -> Result<PartialInvariants> {
    if moments.is_empty() {
        return Err(Error::IncompleteInput { missing: vec!["any moment".into()] });
    }
    let find = |pred: &dyn Fn(&ObservableKind) -> bool, t: u32| {
        moments.iter().find(|m| m.t == t && pred(&m.observable)).map(|m| m.value)
    };
    use ObservableKind::*;
    let mut out = PartialInvariants { i2: find(&|k| *k == ZZ, 2).map(|r| 9.0 * r), ..Default::default() };
    if let (Some(i2), Some(r4)) = (out.i2, find(&|k| *k == ZZ, 4)) {
        out.i3 = Some((75.0 * r4 - i2 * i2) / 2.0);
    }
    out.i1 = find(&|k| *k == Mdet, 3).or_else(|| {
        let p = |t| find(&|k| *k == PsiMinusProj, t);
        Some(det_from_psi_minus_moments(p(1)?, p(2)?, p(3)?))
    });
    out.i4 = find(&|k| *k == LocalZA, 2).map(|r| 3.0 * r);
    out.i7 = find(&|k| *k == LocalZB, 2).map(|r| 3.0 * r);
    if let (Some(i2), Some(i4), Some(i7)) = (out.i2, out.i4, out.i7) {
        out.i12 = moments.iter().find_map(|m| match m.observable {
            KL { k_a, l_a, k_b, l_b } if m.t == 3 && k_a == k_b && l_a == l_b && k_a != 0.0 && l_a != 0.0 => {
                let (k, l) = (k_a, l_a);
                let rest = m.value - k.powi(6) - k.powi(4) * l * l * (i4 + i7);
                Some((3.0 * rest / (k * k * l.powi(4)) - i2) / 2.0)
            }
            _ => None,
        });
    }
    if let (Some(h), Some(hp)) = (find(&|k| *k == MHodge, 4), find(&|k| *k == MHodgePrime, 4)) {
        out.i14 = Some(HODGE_EXTRACTION_FACTOR * (h - hp));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{random_state, random_three_qubit_state, SingleQubitUnitary};
    use approx::assert_abs_diff_eq;

    fn all_kinds() -> Vec<ObservableKind> {
        use ObservableKind::*;
        vec![
            LocalZA,
            LocalZB,
            ZZ,
            KL { k_a: 0.3, l_a: 0.7, k_b: 0.3, l_b: 0.7 },
            KL { k_a: 0.2, l_a: -0.5, k_b: 1.0, l_b: 0.4 },
            Mdet,
            MHodge,
            MHodgePrime,
            PsiMinusProj,
            NuZProj,
            MKempe,
        ]
    }

    #[test]
    fn matrices_match_pauli_terms() {
        for kind in all_kinds() {
            let spec = ObservableSpec::new(kind).unwrap();
            assert!((&spec.matrix - spec.matrix_from_terms()).norm() < 1e-12, "{kind:?}");
            let d = spec.matrix.nrows();
            assert_eq!(d, 1 << kind.parties());
        }
    }

    #[test]
    fn psi_minus_is_related_to_mdet() {
        let p = ObservableSpec::new(ObservableKind::PsiMinusProj).unwrap().matrix;
        let m = ObservableSpec::new(ObservableKind::Mdet).unwrap().matrix;
        let id = DMatrix::<C64>::identity(4, 4);
        assert!((m - (id - p * C64::new(4.0, 0.0))).norm() < 1e-14);
    }

    #[test]
    fn bell_examples() {
        let b = TwoQubitState::singlet().bloch();
        assert_abs_diff_eq!(analytic_moment(&b, &ObservableKind::ZZ, 2).unwrap().value, 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(analytic_moment(&b, &ObservableKind::ZZ, 4).unwrap().value, 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(analytic_moment(&b, &ObservableKind::Mdet, 3).unwrap().value, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn maximally_mixed_gives_zero_for_traceless() {
        let b = BlochTwoQubit::zero();
        for kind in all_kinds() {
            let spec = ObservableSpec::new(kind).unwrap();
            if spec.matrix.trace().norm() > 1e-12 {
                continue;
            }
            for t in 1..=6 {
                if let Ok(m) = analytic_moment(&b, &kind, t) {
                    assert_eq!(m.value, 0.0, "{kind:?} t={t}");
                }
            }
        }
    }

    #[test]
    fn identity_kl_is_one() {
        let b = random_state(1, 3).unwrap().bloch();
        let kind = ObservableKind::KL { k_a: 1.0, l_a: 0.0, k_b: 1.0, l_b: 0.0 };
        for t in 1..=6 {
            assert_abs_diff_eq!(analytic_moment(&b, &kind, t).unwrap().value, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn unsupported_pairs_are_errors() {
        let b = BlochTwoQubit::zero();
        assert!(matches!(analytic_moment(&b, &ObservableKind::ZZ, 8), Err(Error::UnsupportedMoment { .. })));
        assert!(analytic_moment(&b, &ObservableKind::MHodge, 2).is_err());
        assert!(analytic_moment(&b, &ObservableKind::MKempe, 3).is_err());
        let asym = ObservableKind::KL { k_a: 0.2, l_a: -0.5, k_b: 1.0, l_b: 0.4 };
        assert!(analytic_moment(&b, &asym, 3).is_err());
    }

    #[test]
    fn moments_respect_operator_norm() {
        for seed in 0..10 {
            let b = random_state(seed, 4).unwrap().bloch();
            for kind in all_kinds() {
                let norm = ObservableSpec::new(kind).unwrap().operator_norm();
                for t in 1..=6 {
                    if let Ok(m) = analytic_moment(&b, &kind, t) {
                        assert!(m.value.abs() <= norm.powi(t as i32) + 1e-12, "{kind:?} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn hodge_extract_equals_i14() {
        for seed in 0..50 {
            let b = random_state(seed, 1 + seed as usize % 4).unwrap().bloch();
            assert_abs_diff_eq!(hodge_extract(&b), compute_all(&b).i14, epsilon = 1e-8);
        }
        assert_eq!(hodge_extract(&BlochTwoQubit::zero()), 0.0);
        let mut b = random_state(3, 2).unwrap().bloch();
        b.alpha = nalgebra::Vector3::zeros();
        assert_abs_diff_eq!(hodge_extract(&b), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kempe_moment_examples() {
        assert_abs_diff_eq!(kempe_moment(&ThreeQubitState::ghz().bloch()), 2.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(kempe_moment(&ThreeQubitState::maximally_mixed().bloch()), 0.0);
        assert_abs_diff_eq!(kempe_moment(&ThreeQubitState::basis(0).unwrap().bloch()), 2.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn psi_minus_route_recovers_det() {
        for seed in 0..20 {
            let b = random_state(seed, 3).unwrap().bloch();
            let r = |t| analytic_moment(&b, &ObservableKind::PsiMinusProj, t).unwrap().value;
            assert_abs_diff_eq!(det_from_psi_minus_moments(r(1), r(2), r(3)), b.t.determinant(), epsilon = 1e-12);
        }
    }

    #[test]
    fn invert_round_trip() {
        use ObservableKind::*;
        let kl = KL { k_a: 0.4, l_a: 0.9, k_b: 0.4, l_b: 0.9 };
        for seed in 0..100 {
            let b = random_state(seed, 1 + seed as usize % 4).unwrap().bloch();
            let ms: Vec<MomentValue> =
                [(ZZ, 2), (ZZ, 4), (Mdet, 3), (LocalZA, 2), (LocalZB, 2), (kl, 3), (MHodge, 4), (MHodgePrime, 4)]
                    .iter()
                    .map(|(k, t)| analytic_moment(&b, k, *t).unwrap())
                    .collect();
            let inv = compute_all(&b);
            let p = invert_moments(&ms).unwrap();
            p.require(&["I1", "I2", "I3", "I4", "I7", "I12", "I14"]).unwrap();
            assert_abs_diff_eq!(p.i1.unwrap(), inv.i1, epsilon = 1e-10);
            assert_abs_diff_eq!(p.i2.unwrap(), inv.i2, epsilon = 1e-10);
            assert_abs_diff_eq!(p.i3.unwrap(), inv.i3, epsilon = 1e-10);
            assert_abs_diff_eq!(p.i12.unwrap(), inv.i12, epsilon = 1e-10);
            assert_abs_diff_eq!(p.i14.unwrap(), inv.i14, epsilon = 1e-10);
        }
    }

    #[test]
    fn invert_examples() {
        use ObservableKind::*;
        let bell =
            [MomentValue { value: 1.0 / 3.0, t: 2, observable: ZZ }, MomentValue { value: 0.2, t: 4, observable: ZZ }];
        let p = invert_moments(&bell).unwrap();
        assert_abs_diff_eq!(p.i2.unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.i3.unwrap(), 3.0, epsilon = 1e-14);
        let err = p.require(&["I2", "I1", "I14"]).unwrap_err();
        assert!(matches!(err, Error::IncompleteInput { ref missing } if missing == &["I1", "I14"]));
        let zeros: Vec<_> =
            [(ZZ, 2), (ZZ, 4), (Mdet, 3)].iter().map(|&(k, t)| MomentValue { value: 0.0, t, observable: k }).collect();
        let p = invert_moments(&zeros).unwrap();
        assert_eq!((p.i1, p.i2, p.i3), (Some(0.0), Some(0.0), Some(0.0)));
        assert!(invert_moments(&[]).is_err());
    }

    #[test]
    fn analytic_moments_are_local_unitary_invariant() {
        let s = random_state(8, 4).unwrap();
        let u = crate::haar::sample_haar(5, 2).unwrap();
        let rotated = s.apply_local(&u.members()[0], &u.members()[1]);
        let kinds = [ObservableKind::ZZ, ObservableKind::NuZProj, ObservableKind::MHodge, ObservableKind::Mdet];
        for kind in kinds {
            for t in 1..=6 {
                if let Ok(a) = analytic_moment(&s.bloch(), &kind, t) {
                    let b = analytic_moment(&rotated.bloch(), &kind, t).unwrap();
                    assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-10);
                }
            }
        }
        let _ = SingleQubitUnitary::identity();
    }

    #[test]
    fn mc_rejects_bad_input() {
        let s = TwoQubitState::singlet();
        let zz = ObservableSpec::new(ObservableKind::ZZ).unwrap();
        assert!(mc_moment((&s).into(), &zz, 2, 10, 0).is_err());
        let kempe = ObservableSpec::new(ObservableKind::MKempe).unwrap();
        assert!(mc_moment((&s).into(), &kempe, 3, 2000, 0).is_err());
    }

    #[test]
    fn mc_singlet_second_moment() {
        let s = TwoQubitState::singlet();
        let zz = ObservableSpec::new(ObservableKind::ZZ).unwrap();
        let (est, se) = mc_moment((&s).into(), &zz, 2, 20_000, 1).unwrap();
        assert!((est - 1.0 / 3.0).abs() <= 5.0 * se);
        let (odd, se) = mc_moment((&s).into(), &zz, 3, 20_000, 2).unwrap();
        assert!(odd.abs() <= 5.0 * se);
        assert_eq!(mc_moment((&s).into(), &zz, 2, 5000, 9).unwrap(), mc_moment((&s).into(), &zz, 2, 5000, 9).unwrap());
    }

    #[test]
    fn mc_kempe_third_moment() {
        let s = random_three_qubit_state(2, 2).unwrap();
        let spec = ObservableSpec::new(ObservableKind::MKempe).unwrap();
        let (est, se) = mc_moment((&s).into(), &spec, 3, 20_000, 3).unwrap();
        assert!((est - kempe_moment(&s.bloch())).abs() <= 5.0 * se);
    }
}
