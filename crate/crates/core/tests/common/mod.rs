//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use randlu::estimators::OutcomeTable;
use randlu::haar::{haar_unitary, UnitarySet};
use randlu::pauli::{kron2, pauli, C64};
use randlu::state::{SingleQubitUnitary, TwoQubitState};

/// Expectation of `estimator` over every ordered sequence of `n` shots drawn
/// from `probs`, weighting each sequence by its probability.
pub fn enumerate_expectation(values: &[f64], probs: &[f64], n: usize, estimator: impl Fn(&OutcomeTable) -> f64) -> f64 {
    let k = values.len();
    let mut total = 0.0;
    let mut seq = vec![0usize; n];
    loop {
        let mut counts = vec![0u64; k];
        let mut weight = 1.0;
        for &s in &seq {
            counts[s] += 1;
            weight *= probs[s];
        }
        if weight > 0.0 {
            total += weight * estimator(&OutcomeTable::new(values, &counts).unwrap());
        }
        let mut i = 0;
        loop {
            if i == n {
                return total;
            }
            seq[i] += 1;
            if seq[i] < k {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

fn same_up_to_phase(a: &Matrix2<C64>, b: &Matrix2<C64>) -> bool {
    let overlap: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    (overlap.norm() - 2.0).abs() < 1e-9
}

/// The 24 single-qubit Clifford unitaries modulo phase, generated by closing
/// `{H, S}` under multiplication.
pub fn clifford_group() -> UnitarySet {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = Matrix2::new(C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0));
    let ph = Matrix2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    let gens = [h, ph];
    let mut group: Vec<Matrix2<C64>> = vec![Matrix2::identity()];
    let mut frontier = group.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for g in &frontier {
            for x in &gens {
                let p = x * g;
                if !group.iter().any(|q| same_up_to_phase(q, &p)) {
                    group.push(p);
                    next.push(p);
                }
            }
        }
        frontier = next;
    }
    UnitarySet::new(group.into_iter().map(|m| SingleQubitUnitary::new(m).unwrap()).collect()).unwrap()
}

pub fn psi_minus() -> Vector4<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector4::new(C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(0.0, 0.0))
}

fn singlet_overlap(rho: &TwoQubitState, ua: &Matrix2<C64>, ub: &Matrix2<C64>) -> f64 {
    let u = kron2(ua, ub);
    let psi = psi_minus();
    let v = u.adjoint() * psi;
    (v.adjoint() * rho.matrix() * v)[(0, 0)].re
}

fn nudge(rng: &mut ChaCha8Rng, u: &Matrix2<C64>, eps: f64) -> Matrix2<C64> {
    let h = (1..4)
        .fold(Matrix2::<C64>::zeros(), |acc, i| acc + pauli(i) * C64::new(rng.random_range(-1.0..1.0) * eps, 0.0));
    // exp(-iH) for a traceless Hermitian H = θ n·σ is cos θ − i sin θ n·σ.
    let theta = (h.adjoint() * h).trace().re.sqrt() / 2f64.sqrt();
    let step = if theta < 1e-300 {
        Matrix2::identity()
    } else {
        Matrix2::identity() * C64::new(theta.cos(), 0.0) - h * C64::new(0.0, theta.sin() / theta)
    };
    step * u
}

/// Largest singlet fraction found by multistart stochastic hill climbing over
/// local unitaries.
pub fn fu_search(rho: &TwoQubitState, seed: u64, starts: usize, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..starts {
        let mut ua = *haar_unitary(&mut rng).matrix();
        let mut ub = *haar_unitary(&mut rng).matrix();
        let mut f = singlet_overlap(rho, &ua, &ub);
        let mut eps = 0.5;
        for _ in 0..steps {
            let (ca, cb) = (nudge(&mut rng, &ua, eps), nudge(&mut rng, &ub, eps));
            let g = singlet_overlap(rho, &ca, &cb);
            if g > f {
                (ua, ub, f) = (ca, cb, g);
            } else {
                eps = (eps * 0.97).max(1e-7);
            }
        }
        best = best.max(f);
    }
    best
}
