//! Confidence intervals, their combination, and region scans that turn
//! intervals on `(I1, I2, I3)` into certified lower bounds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::unbiased_sum_power;
use crate::estimators::{OutcomeTable, CORRELATION_VALUES};
use crate::invariants::{chsh_value, fmax_lower_bound, SingularTriple, ROOT_TOL};
use crate::poly::cubic_roots_projected;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gauss,
    Hoeffding,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gauss => "gauss",
            Method::Hoeffding => "hoeffding",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss" | "gaussian" => Ok(Method::Gauss),
            "hoeffding" => Ok(Method::Hoeffding),
            other => Err(Error::parse(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub gamma: f64,
    pub method: Method,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("confidence {gamma} outside (0, 1)")))
    }
}

impl ConfidenceInterval {
    pub fn new(lower: f64, upper: f64, gamma: f64, method: Method) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower > upper {
            return Err(Error::InvalidParameter(format!("bad interval [{lower}, {upper}]")));
        }
        check_gamma(gamma)?;
        Ok(Self { lower, upper, gamma, method })
    }

    pub fn around(center: f64, half_width: f64, gamma: f64, method: Method) -> Result<Self> {
        if half_width < 0.0 {
            return Err(Error::InvalidParameter(format!("negative half-width {half_width}")));
        }
        Self::new(center - half_width, center + half_width, gamma, method)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let (lo, hi) = (self.lower.max(other.lower), self.upper.min(other.upper));
        (lo <= hi).then_some(Self { lower: lo, upper: hi, ..*self })
    }
}

/// `δ = (b − a)/√(2n) · √ln(2/(1 − γ))`.
pub fn hoeffding_delta(range_width: f64, n: u64, gamma: f64) -> Result<f64> {
    if !(range_width >= 0.0 && range_width.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(format!("hoeffding needs width ≥ 0 and n ≥ 1, got {range_width}, {n}")));
    }
    check_gamma(gamma)?;
    Ok(range_width / (2.0 * n as f64).sqrt() * (2.0 / (1.0 - gamma)).ln().sqrt())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided Gaussian coverage of `±k σ`.
pub fn confidence_for_sigma(k: f64) -> f64 {
    2.0 * std_normal().cdf(k) - 1.0
}

/// Inverse of [`confidence_for_sigma`].
pub fn sigma_for_confidence(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(std_normal().inverse_cdf(0.5 * (1.0 + gamma)))
}

/// `mean ± k · s/√n` over per-run estimates, with `s` the sample standard
/// deviation; the coverage of `k` standard errors is recorded as `gamma`.
pub fn gaussian_interval(run_estimates: &[f64], k: f64) -> Result<ConfidenceInterval> {
    let n = run_estimates.len();
    if n < 2 {
        return Err(Error::InsufficientSet { needed: 2, got: n });
    }
    if !(k >= 0.0 && k.is_finite()) || run_estimates.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite estimate or multiplier".into()));
    }
    let mean = run_estimates.iter().sum::<f64>() / n as f64;
    let var = run_estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let half = k * (var / n as f64).sqrt();
    let gamma = confidence_for_sigma(k).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    Ok(ConfidenceInterval { lower: mean - half, upper: mean + half, gamma, method: Method::Gauss })
}

/// Union bound: `max(0, 1 − n(1 − γ))`.
pub fn combine_confidence(n: usize, gamma: f64) -> f64 {
    (1.0 - n as f64 * (1.0 - gamma)).max(0.0)
}

/// Largest `Σλ⁴` given `Σλ² = s` with each `λ² ∈ [0, 1]`.
fn max_fourth_power_sum(s: f64) -> f64 {
    let whole = s.floor().min(2.0);
    whole + (s - whole).powi(2)
}

/// Range of `I3 = Tr (TTᵀ)²` implied by an `I2` interval: at least `I2²/3`
/// (equal singular values) and at most the value with the weight packed into
/// as few unit singular values as possible.
pub fn i3_range_from_i2(i2: &ConfidenceInterval) -> Result<ConfidenceInterval> {
    let (lo, hi) = (i2.lower.max(0.0), i2.upper.min(3.0));
    if lo > hi {
        return Err(Error::InconsistentRegion(format!("I2 interval [{}, {}] misses [0, 3]", i2.lower, i2.upper)));
    }
    Ok(ConfidenceInterval { lower: lo * lo / 3.0, upper: max_fourth_power_sum(hi), ..*i2 })
}

/// Where the `I3` box for a scan comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum I3Policy {
    Measured,
    FromI2,
    Intersect,
}

impl FromStr for I3Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "measured" => Ok(I3Policy::Measured),
            "from-i2" => Ok(I3Policy::FromI2),
            "intersect" => Ok(I3Policy::Intersect),
            other => Err(Error::parse(format!("unknown I3 policy `{other}`"))),
        }
    }
}

pub fn effective_i3(
    i2: &ConfidenceInterval,
    measured: Option<&ConfidenceInterval>,
    policy: I3Policy,
) -> Result<ConfidenceInterval> {
    let need = || Error::IncompleteInput { missing: vec!["I3 interval".into()] };
    match policy {
        I3Policy::Measured => measured.copied().ok_or_else(need),
        I3Policy::FromI2 => i3_range_from_i2(i2),
        I3Policy::Intersect => {
            let m = measured.ok_or_else(need)?;
            i3_range_from_i2(i2)?
                .intersect(m)
                .ok_or_else(|| Error::InconsistentRegion("measured I3 interval incompatible with I2".into()))
        }
    }
}

/// Range of the unbiased three-basis `Ẽ³` estimator at `k` shots per basis.
///
/// Every unbiased power of a ±1 table lies in `[−1, 1]`, so the estimator is
/// confined to `[−27, 27]`; the extremes are found on a lattice of count
/// configurations that includes the all-equal corners.
pub fn i1_estimator_range(k: u64) -> Result<(f64, f64)> {
    if k < 3 {
        return Err(Error::InsufficientShots { needed: 3, got: k });
    }
    let steps = 8u64.min(k);
    let plus: Vec<u64> = (0..=steps).map(|j| j * k / steps).collect();
    let tables: Vec<OutcomeTable> =
        plus.iter().map(|&p| OutcomeTable::from_counts(CORRELATION_VALUES, [p, k - p, 0, 0])).collect::<Result<_>>()?;
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for a in &tables {
        for b in &tables {
            for c in &tables {
                let v = unbiased_sum_power(&[a, b, c], 3)?;
                range = (range.0.min(v), range.1.max(v));
            }
        }
    }
    Ok(range)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Chsh,
    Fmax,
    FidelityTeleport,
}

impl Quantity {
    pub fn evaluate(&self, s: &SingularTriple) -> f64 {
        match self {
            Quantity::Chsh => chsh_value(s),
            Quantity::Fmax => fmax_lower_bound(s),
            Quantity::FidelityTeleport => (2.0 * fmax_lower_bound(s) + 1.0) / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per axis.
    pub resolution: usize,
    /// Zoom passes around the running minimum.
    pub refinements: usize,
    /// Also impose the tetrahedron condition on the singular values, giving
    /// a tighter bound than the real-root condition alone.
    #[serde(default)]
    pub tetrahedron: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { resolution: 41, refinements: 1, tetrahedron: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanInputs {
    pub i1: ConfidenceInterval,
    pub i2: ConfidenceInterval,
    pub i3: ConfidenceInterval,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBound {
    pub quantity: Quantity,
    /// Smallest value over the physical part of the box.
    pub value: f64,
    pub combined_confidence: f64,
    pub inputs: ScanInputs,
    pub gamma: f64,
    pub method: Method,
    pub grid: GridSpec,
    /// `(I1, I2, I3)` where the minimum was found.
    pub argmin: [f64; 3],
    pub physical_points: u64,
}

/// `(I1, I2, I3)` of a scanned point.
#[derive(Clone, Copy, Debug)]
struct Point {
    inv: [f64; 3],
}

/// Squared singular values for `(I2, I3, e3 = I1²)` when the characteristic
/// cubic has three real roots in `[0, 1]`. With `tetrahedron` the singular
/// values must also satisfy `λ1 + λ2 + s λ3 ≤ 1` for determinant sign `s`,
/// which every state obeys because local twirling maps it to a Bell-diagonal
/// state with the same correlation matrix.
pub fn physical_triple(i2: f64, i3: f64, e3: f64, sign: i8, tetrahedron: bool) -> Option<SingularTriple> {
    let e2 = 0.5 * (i2 * i2 - i3);
    let (roots, disc) = cubic_roots_projected(-i2, e2, -e3);
    if disc < -1e-10 || roots.iter().any(|r| *r < -ROOT_TOL || *r > 1.0 + ROOT_TOL) {
        return None;
    }
    let t = SingularTriple::new(roots, sign).ok()?;
    let l = t.singular_values();
    if tetrahedron && l[0] + l[1] + f64::from(sign) * l[2] > 1.0 + 1e-9 {
        return None;
    }
    Some(t)
}

/// Interval of `e3` keeping the cubic discriminant nonnegative.
fn e3_window(e1: f64, e2: f64) -> Option<(f64, f64)> {
    // −27 e3² + (18 e1 e2 − 4 e1³) e3 + e1² e2² − 4 e2³ ≥ 0
    let (a, b, c) = (-27.0, 18.0 * e1 * e2 - 4.0 * e1.powi(3), e1 * e1 * e2 * e2 - 4.0 * e2.powi(3));
    let d = b * b - 4.0 * a * c;
    // Equal singular values give a zero-width window; rounding may push it
    // slightly negative.
    if d < -1e-10 * (b * b).max(1.0) {
        return None;
    }
    let r = d.max(0.0).sqrt();
    let (x, y) = ((-b + r) / (2.0 * a), (-b - r) / (2.0 * a));
    Some((x.min(y).max(0.0), x.max(y)))
}

struct Box3 {
    i2: (f64, f64),
    i3: (f64, f64),
    u: (f64, f64),
}

fn axis(range: (f64, f64), n: usize, j: usize) -> f64 {
    if n <= 1 || range.0 == range.1 {
        range.0
    } else {
        range.0 + (range.1 - range.0) * j as f64 / (n - 1) as f64
    }
}

/// Signed `|I1|` ranges allowed by the `I1` interval.
fn sign_branches(i1: &ConfidenceInterval) -> Vec<(i8, f64, f64)> {
    let mut out = Vec::new();
    if i1.lower < 0.0 {
        out.push((-1, (-i1.upper).max(0.0), -i1.lower));
    }
    if i1.upper > 0.0 {
        out.push((1, i1.lower.max(0.0), i1.upper));
    }
    if i1.lower <= 0.0 && i1.upper >= 0.0 {
        out.push((0, 0.0, 0.0));
    }
    out
}

/// Feasible point count and the best `(value, point, grid index)` found.
type ScanResult = (u64, Option<(f64, Point, [usize; 3])>);

fn scan_box(q: Quantity, sign: (i8, f64, f64), b: &Box3, grid: &GridSpec) -> ScanResult {
    let (s, abs_lo, abs_hi) = sign;
    let (n, tetrahedron) = (grid.resolution, grid.tetrahedron);
    let slabs: Vec<ScanResult> = (0..n)
        .into_par_iter()
        .map(|a| {
            let i2 = axis(b.i2, n, a);
            let mut count = 0;
            let mut best: Option<(f64, Point, [usize; 3])> = None;
            for c in 0..n {
                let i3 = axis(b.i3, n, c);
                let e2 = 0.5 * (i2 * i2 - i3);
                let Some((w_lo, w_hi)) = e3_window(i2, e2) else { continue };
                let (lo, hi) = (w_lo.max(abs_lo * abs_lo), w_hi.min(abs_hi * abs_hi));
                if lo > hi + 1e-15 {
                    continue;
                }
                let at = |u: f64| {
                    let e3 = lo + (hi - lo).max(0.0) * u;
                    physical_triple(i2, i3, e3, s, tetrahedron).map(|t| (t, e3))
                };
                let mut consider = |found: Option<(SingularTriple, f64)>, d: usize| {
                    let Some((triple, e3)) = found else { return };
                    count += 1;
                    let v = q.evaluate(&triple);
                    if best.as_ref().is_none_or(|(bv, _, _)| v < *bv) {
                        best = Some((v, Point { inv: [f64::from(s) * e3.sqrt(), i2, i3] }, [a, c, d]));
                    }
                };
                let mut prev: Option<(f64, bool)> = None;
                for d in 0..n {
                    let u = axis(b.u, n, d);
                    let found = at(u);
                    let ok = found.is_some();
                    consider(found, d);
                    // Feasibility edges between grid points are located exactly.
                    if let Some((pu, pok)) = prev {
                        if pok != ok {
                            let (mut inside, mut outside) = if ok { (u, pu) } else { (pu, u) };
                            for _ in 0..60 {
                                let mid = 0.5 * (inside + outside);
                                if at(mid).is_some() {
                                    inside = mid;
                                } else {
                                    outside = mid;
                                }
                            }
                            consider(at(inside), d);
                        }
                    }
                    prev = Some((u, ok));
                }
            }
            (count, best)
        })
        .collect();
    slabs.into_iter().fold((0, None), |(n, best), (c, b)| {
        let best = match (best, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) => Some(if y.0 < x.0 { y } else { x }),
        };
        (n + c, best)
    })
}

fn zoom(range: (f64, f64), n: usize, j: usize) -> (f64, f64) {
    if n <= 1 {
        return range;
    }
    let step = (range.1 - range.0) / (n - 1) as f64;
    let c = axis(range, n, j);
    ((c - 2.0 * step).max(range.0), (c + 2.0 * step).min(range.1))
}

/// Minimum of `quantity` over the physical part of the `(I1, I2, I3)` box.
///
/// The box is parametrized by `(I2, I3, u)`, where `u ∈ [0, 1]` sweeps the
/// admissible `I1²` for each sign of `I1` allowed by its interval. Points
/// without a physical singular-value triple are dropped. After the coarse
/// pass the grid zooms in around the minimum `grid.refinements` times.
pub fn scan_certify(
    i1: &ConfidenceInterval,
    i2: &ConfidenceInterval,
    i3: &ConfidenceInterval,
    quantity: Quantity,
    grid: GridSpec,
) -> Result<CertifiedBound> {
    if grid.resolution < 2 {
        return Err(Error::InvalidParameter(format!("grid resolution {} below 2", grid.resolution)));
    }
    let gamma = i1.gamma.min(i2.gamma).min(i3.gamma);
    let i2r = (i2.lower.max(0.0), i2.upper.min(3.0));
    let i3r = (i3.lower.max(0.0), i3.upper.min(3.0));
    let empty = || {
        Error::InconsistentRegion(format!(
            "no physical point with I1 ∈ [{}, {}], I2 ∈ [{}, {}], I3 ∈ [{}, {}]",
            i1.lower, i1.upper, i2.lower, i2.upper, i3.lower, i3.upper
        ))
    };
    if i2r.0 > i2r.1 || i3r.0 > i3r.1 {
        return Err(empty());
    }
    let n = grid.resolution;
    let mut total = 0;
    let mut best: Option<(f64, Point)> = None;
    for branch in sign_branches(i1) {
        let mut b = Box3 { i2: i2r, i3: i3r, u: (0.0, 1.0) };
        for pass in 0..=grid.refinements {
            let (count, found) = scan_box(quantity, branch, &b, &grid);
            total += count;
            let Some((v, p, idx)) = found else { break };
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, p));
            }
            if pass < grid.refinements {
                b = Box3 { i2: zoom(b.i2, n, idx[0]), i3: zoom(b.i3, n, idx[1]), u: zoom(b.u, n, idx[2]) };
            }
        }
    }
    let (value, point) = best.ok_or_else(empty)?;
    Ok(CertifiedBound {
        quantity,
        value,
        combined_confidence: combine_confidence(3, gamma),
        inputs: ScanInputs { i1: *i1, i2: *i2, i3: *i3 },
        gamma,
        method: i2.method,
        grid,
        argmin: point.inv,
        physical_points: total,
    })
}
