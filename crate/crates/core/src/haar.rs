//! Haar sampling and randomness certification through frame potentials.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::C64;
use crate::state::{qubit_from_bloch, SingleQubitUnitary, UNITARY_TOL};

const D: f64 = 2.0;

/// Haar-random single-qubit unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R) -> SingleQubitUnitary {
    let z = Matrix2::from_fn(|_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = Matrix2::from_diagonal(&Vector2::new(r[(0, 0)] / r[(0, 0)].norm(), r[(1, 1)] / r[(1, 1)].norm()));
    SingleQubitUnitary::from_raw(q * phases)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitarySet {
    members: Vec<SingleQubitUnitary>,
}

impl UnitarySet {
    pub fn new(members: Vec<SingleQubitUnitary>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InsufficientSet { needed: 1, got: 0 });
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[SingleQubitUnitary] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// States `U|ψ⟩` for every member.
    pub fn apply_to(&self, psi: &Vector2<C64>) -> Result<StateSet> {
        StateSet::new(self.members.iter().map(|u| u.matrix() * psi).collect())
    }

    pub fn left_multiplied(&self, w: &SingleQubitUnitary) -> Self {
        Self { members: self.members.iter().map(|u| w.compose(u)).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSet {
    members: Vec<Vector2<C64>>,
}

impl StateSet {
    pub fn new(members: Vec<Vector2<C64>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InsufficientSet { needed: 1, got: 0 });
        }
        for (i, m) in members.iter().enumerate() {
            let n = m.norm();
            if !n.is_finite() || (n - 1.0).abs() > UNITARY_TOL {
                return Err(Error::InvalidParameter(format!("state {i} has norm {n}")));
            }
        }
        Ok(Self { members })
    }

    /// Pure states pointing along measured Stokes/Bloch vectors; lengths are
    /// normalized away.
    pub fn from_bloch(vectors: &[Vector3<f64>]) -> Result<Self> {
        let members = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| qubit_from_bloch(v).map_err(|e| e.with_context(format!("state {i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn members(&self) -> &[Vector2<C64>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn sample_haar(seed: u64, n: usize) -> Result<UnitarySet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    UnitarySet::new((0..n).map(|_| haar_unitary(&mut rng)).collect())
}

fn check_order(t: u32) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidParameter("frame potential order must be at least 1".into()));
    }
    Ok(())
}

/// Mean of `f(x_i, x_j)` over all ordered pairs, diagonal included. Rows run in
/// parallel; the final sum is sequential so the result is reproducible.
fn pair_mean<T: Sync>(items: &[T], f: impl Fn(&T, &T) -> f64 + Sync) -> f64 {
    let rows: Vec<f64> = items.par_iter().map(|a| items.iter().map(|b| f(a, b)).sum()).collect();
    let n = items.len() as f64;
    rows.iter().sum::<f64>() / (n * n)
}

/// `(1/N²) Σ_{U,V} |Tr(U V†)|^{2t}`.
pub fn frame_potential(set: &UnitarySet, t: u32) -> Result<f64> {
    check_order(t)?;
    Ok(pair_mean(set.members(), |u, v| {
        let tr: C64 = u.matrix().iter().zip(v.matrix().iter()).map(|(a, b)| a * b.conj()).sum();
        tr.norm_sqr().powi(t as i32)
    }))
}

/// `(1/N²) Σ_{ψ,φ} |⟨ψ|φ⟩|^{2t}`.
pub fn spherical_frame_potential(set: &StateSet, t: u32) -> Result<f64> {
    check_order(t)?;
    Ok(pair_mean(set.members(), |a, b| a.dotc(b).norm_sqr().powi(t as i32)))
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Haar value of the unitary frame potential for a qubit: the Catalan number.
pub fn haar_minimum(t: u32) -> f64 {
    binomial(2 * t, t) / f64::from(t + 1)
}

/// Haar value of the spherical frame potential for a qubit: `t!(d−1)!/(t+d−1)!`.
pub fn spherical_haar_minimum(t: u32) -> f64 {
    1.0 / f64::from(t + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Unitary,
    Spherical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessStats {
    pub expectation: f64,
    pub variance: f64,
}

/// Mean and variance of the excess `G_t = F_t / F_t^Haar` for `N` i.i.d. Haar draws.
pub fn excess_stats(n: usize, t: u32, kind: DesignKind) -> Result<ExcessStats> {
    check_order(t)?;
    if n == 0 {
        return Err(Error::InsufficientSet { needed: 1, got: 0 });
    }
    let nf = n as f64;
    let (f_t, f_2t, diag) = match kind {
        DesignKind::Unitary => (haar_minimum(t), haar_minimum(2 * t), D.powi(2 * t as i32)),
        DesignKind::Spherical => (spherical_haar_minimum(t), spherical_haar_minimum(2 * t), 1.0),
    };
    Ok(ExcessStats {
        expectation: diag / (nf * f_t) + (nf - 1.0) / nf,
        variance: 2.0 * nf * (nf - 1.0) / nf.powi(4) * (f_2t / (f_t * f_t) - 1.0),
    })
}

/// One-sided Cantelli deviation: the smallest `δ` with `Var/(δ² + Var) ≤ 1 − c`.
pub fn cantelli_band(variance: f64, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence {confidence} outside (0, 1)")));
    }
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::InvalidParameter(format!("variance {variance} is negative")));
    }
    Ok((variance * confidence / (1.0 - confidence)).sqrt())
}

/// Cantelli confidence of a band `k` standard deviations wide.
pub fn cantelli_confidence(k: f64) -> f64 {
    k * k / (1.0 + k * k)
}

/// Confidence of the default two-standard-deviation band.
pub const DEFAULT_CONFIDENCE: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomnessVerdict {
    pub kind: DesignKind,
    pub t: u32,
    pub n: usize,
    pub frame_potential: f64,
    #[serde(rename = "G_t")]
    pub g_t: f64,
    pub expected: f64,
    pub band_1s: f64,
    pub band_2s: f64,
    pub pass_1s: bool,
    pub pass_2s: bool,
    pub confidence: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn verdict(kind: DesignKind, n: usize, t: u32, fp: f64, confidence: f64) -> Result<RandomnessVerdict> {
    if n < 2 {
        return Err(Error::InsufficientSet { needed: 2, got: n });
    }
    let stats = excess_stats(n, t, kind)?;
    let minimum = match kind {
        DesignKind::Unitary => haar_minimum(t),
        DesignKind::Spherical => spherical_haar_minimum(t),
    };
    let g_t = fp / minimum;
    let sigma = stats.variance.sqrt();
    let threshold = stats.expectation + cantelli_band(stats.variance, confidence)?;
    let band_1s = stats.expectation + sigma;
    let band_2s = stats.expectation + 2.0 * sigma;
    Ok(RandomnessVerdict {
        kind,
        t,
        n,
        frame_potential: fp,
        g_t,
        expected: stats.expectation,
        band_1s,
        band_2s,
        pass_1s: g_t <= band_1s,
        pass_2s: g_t <= band_2s,
        confidence,
        threshold,
        pass: g_t <= threshold,
    })
}

/// One-sided frame-potential test of a unitary set.
pub fn certify_unitaries(set: &UnitarySet, t: u32, confidence: f64) -> Result<RandomnessVerdict> {
    verdict(DesignKind::Unitary, set.len(), t, frame_potential(set, t)?, confidence)
}

/// One-sided frame-potential test of a state set.
pub fn certify_states(set: &StateSet, t: u32, confidence: f64) -> Result<RandomnessVerdict> {
    verdict(DesignKind::Spherical, set.len(), t, spherical_frame_potential(set, t)?, confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::pauli;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sampled_unitaries_are_unitary_and_reproducible() {
        let a = sample_haar(3, 50).unwrap();
        for u in a.members() {
            assert!((u.matrix() * u.matrix().adjoint() - Matrix2::identity()).norm() < 1e-13);
        }
        assert_eq!(a, sample_haar(3, 50).unwrap());
        assert_ne!(a, sample_haar(4, 50).unwrap());
        assert!(sample_haar(1, 0).is_err());
    }

    #[test]
    fn single_member_potential() {
        let set = UnitarySet::new(vec![SingleQubitUnitary::identity()]).unwrap();
        assert_eq!(frame_potential(&set, 2).unwrap(), 16.0);
    }

    #[test]
    fn pauli_group_is_a_one_design() {
        let set = UnitarySet::new((0..4).map(|k| SingleQubitUnitary::new(pauli(k)).unwrap()).collect()).unwrap();
        assert_abs_diff_eq!(frame_potential(&set, 1).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_forms() {
        let catalan = [1.0, 2.0, 5.0, 14.0, 42.0];
        for (t, c) in (1..=5).zip(catalan) {
            assert_eq!(haar_minimum(t), c);
        }
        assert_abs_diff_eq!(spherical_haar_minimum(2), 1.0 / 3.0);
        assert_abs_diff_eq!(spherical_haar_minimum(4), 0.2);
    }

    #[test]
    fn excess_limits() {
        for kind in [DesignKind::Unitary, DesignKind::Spherical] {
            for t in [1, 2, 4] {
                let big = excess_stats(1_000_000_000, t, kind).unwrap();
                assert!((big.expectation - 1.0).abs() < 1e-6);
                assert_eq!(excess_stats(1, t, kind).unwrap().variance, 0.0);
            }
        }
    }

    #[test]
    fn cantelli_examples() {
        assert_eq!(cantelli_band(0.0, 0.9).unwrap(), 0.0);
        assert_abs_diff_eq!(cantelli_band(1.0, 0.9).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cantelli_band(4.0, 0.5).unwrap(), 2.0, epsilon = 1e-12);
        assert!(cantelli_band(1.0, 1.0).is_err());
        assert!(cantelli_band(1.0, 0.0).is_err());
        assert_abs_diff_eq!(cantelli_band(1.0, cantelli_confidence(2.0)).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_set_fails() {
        let set = UnitarySet::new(vec![SingleQubitUnitary::identity(); 60]).unwrap();
        for t in [2, 4] {
            let v = certify_unitaries(&set, t, DEFAULT_CONFIDENCE).unwrap();
            assert_abs_diff_eq!(v.g_t, D.powi(2 * t as i32) / haar_minimum(t));
            assert!(!v.pass && !v.pass_2s);
        }
    }

    #[test]
    fn tiny_sets_are_rejected() {
        let set = sample_haar(0, 1).unwrap();
        assert!(matches!(certify_unitaries(&set, 2, 0.8), Err(Error::InsufficientSet { needed: 2, got: 1 })));
    }

    #[test]
    fn bands_are_ordered() {
        let v = certify_unitaries(&sample_haar(9, 60).unwrap(), 2, DEFAULT_CONFIDENCE).unwrap();
        assert!(v.band_2s >= v.band_1s && v.band_1s >= v.expected);
        assert_abs_diff_eq!(v.threshold, v.band_2s, epsilon = 1e-12);
    }

    #[test]
    fn state_sets_from_unitaries() {
        let zero = Vector2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let states = sample_haar(2, 60).unwrap().apply_to(&zero).unwrap();
        let fp = spherical_frame_potential(&states, 2).unwrap();
        assert!(fp >= spherical_haar_minimum(2) - 1e-9);
        let bad = StateSet::new(vec![zero * C64::new(2.0, 0.0)]);
        assert!(bad.is_err());
    }
}
