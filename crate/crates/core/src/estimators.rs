//! Unbiased estimators of moment powers from finite multinomial counts, and
//! of the invariants from full measurement records.
//!
//! A single Haar setting yields an outcome table; `p̂_i = N_i/N` is unbiased
//! but its powers are not. The falling-factorial monomial
//! `Π (N_i)_{a_i} / (N)_d` is, and every estimator here is a combination of
//! those. Products of quantities from different settings, or from different
//! basis tables of one setting, are unbiased because the samples are
//! independent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::InvariantSet;
use crate::moments::HODGE_EXTRACTION_FACTOR;
use crate::state::SingleQubitUnitary;

/// Distinct real outcome values with their counts.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable {
    values: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
}

/// Outcome values of `σ⊗σ` on `[++, +−, −+, −−]`.
pub const CORRELATION_VALUES: [f64; 4] = [1.0, -1.0, -1.0, 1.0];
/// Outcome values of `σ⊗𝟙`.
pub const LOCAL_A_VALUES: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
/// Outcome values of `𝟙⊗σ`.
pub const LOCAL_B_VALUES: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

impl OutcomeTable {
    /// Equal values are merged, so the table always lists distinct outcomes.
    pub fn new(values: &[f64], counts: &[u64]) -> Result<Self> {
        if values.len() != counts.len() || values.is_empty() {
            return Err(Error::InvalidParameter("values and counts must be non-empty and equally long".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite outcome value".into()));
        }
        let mut merged: Vec<(f64, u64)> = Vec::new();
        for (&v, &c) in values.iter().zip(counts) {
            match merged.iter_mut().find(|(x, _)| *x == v) {
                Some(e) => e.1 = e.1.checked_add(c).ok_or_else(|| Error::InvalidParameter("count overflow".into()))?,
                None => merged.push((v, c)),
            }
        }
        let total = merged
            .iter()
            .try_fold(0u64, |acc, &(_, c)| acc.checked_add(c))
            .ok_or_else(|| Error::InvalidParameter("count overflow".into()))?;
        let (values, counts) = merged.into_iter().unzip();
        Ok(Self { values, counts, total })
    }

    /// Two-outcome-per-side table with the given values on `[++, +−, −+, −−]`.
    pub fn from_counts(values: [f64; 4], counts: [u64; 4]) -> Result<Self> {
        Self::new(&values, &counts)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Empirical frequencies `N_i/N`.
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    fn require_shots(&self, needed: u64) -> Result<()> {
        if self.total < needed {
            Err(Error::InsufficientShots { needed, got: self.total })
        } else {
            Ok(())
        }
    }
}

/// `(n)_k = n (n−1) ⋯ (n−k+1)`.
fn falling(n: u64, k: u32) -> f64 {
    (0..k as u64).map(|j| n.saturating_sub(j) as f64).product()
}

/// The degree ≤ 4 monomial patterns in the outcome probabilities. Indices
/// within one pattern must be distinct.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PMonomial {
    Sq(usize),
    Pair(usize, usize),
    Cube(usize),
    SqLin(usize, usize),
    Triple(usize, usize, usize),
    Fourth(usize),
    CubeLin(usize, usize),
    LinCube(usize, usize),
    SqSq(usize, usize),
    SqLinLin(usize, usize, usize),
    LinSqLin(usize, usize, usize),
    LinLinSq(usize, usize, usize),
    Quad(usize, usize, usize, usize),
}

impl PMonomial {
    /// `(outcome index, power)` pairs.
    pub fn exponents(&self) -> Vec<(usize, u32)> {
        use PMonomial::*;
        match *self {
            Sq(i) => vec![(i, 2)],
            Pair(i, j) => vec![(i, 1), (j, 1)],
            Cube(i) => vec![(i, 3)],
            SqLin(i, j) => vec![(i, 2), (j, 1)],
            Triple(i, j, k) => vec![(i, 1), (j, 1), (k, 1)],
            Fourth(i) => vec![(i, 4)],
            CubeLin(i, j) => vec![(i, 3), (j, 1)],
            LinCube(i, j) => vec![(i, 1), (j, 3)],
            SqSq(i, j) => vec![(i, 2), (j, 2)],
            SqLinLin(i, j, k) => vec![(i, 2), (j, 1), (k, 1)],
            LinSqLin(i, j, k) => vec![(i, 1), (j, 2), (k, 1)],
            LinLinSq(i, j, k) => vec![(i, 1), (j, 1), (k, 2)],
            Quad(i, j, k, l) => vec![(i, 1), (j, 1), (k, 1), (l, 1)],
        }
    }

    pub fn degree(&self) -> u32 {
        self.exponents().iter().map(|e| e.1).sum()
    }

    /// True value `Π p_i^{a_i}` for a probability vector.
    pub fn evaluate(&self, p: &[f64]) -> f64 {
        self.exponents().iter().map(|&(i, a)| p[i].powi(a as i32)).product()
    }

    pub const ALL_SHAPES: usize = 13;
}

/// Unbiased estimate of `Π p_i^{a_i}`: `Π (N_i)_{a_i} / (N)_d`.
pub fn unbiased_p_monomial(table: &OutcomeTable, monomial: &PMonomial) -> Result<f64> {
    let exps = monomial.exponents();
    for (n, &(i, _)) in exps.iter().enumerate() {
        if i >= table.counts.len() {
            return Err(Error::InvalidParameter(format!("outcome index {i} out of range")));
        }
        if exps[..n].iter().any(|&(j, _)| j == i) {
            return Err(Error::InvalidParameter(format!("outcome index {i} repeated in {monomial:?}")));
        }
    }
    let d = monomial.degree();
    table.require_shots(d as u64)?;
    let num: f64 = exps.iter().map(|&(i, a)| falling(table.counts[i], a)).product();
    Ok(num / falling(table.total, d))
}

/// Unbiased estimate of `E^t` with `E = Σ X_i p_i`, t = 0..=4.
///
/// Equal to the average of `X_{s1} ⋯ X_{st}` over ordered tuples of distinct
/// shots, which expands into the multinomial sum
/// `Σ_a t!/Π a_i! · Π X_i^{a_i} (N_i)_{a_i} / (N)_t`.
pub fn unbiased_e_power(table: &OutcomeTable, t: u32) -> Result<f64> {
    if t > 4 {
        return Err(Error::InvalidParameter(format!("unbiased powers are implemented for t ≤ 4, got {t}")));
    }
    table.require_shots(t as u64)?;
    let k = table.values.len();
    let mut sum = 0.0;
    let mut exps = vec![0u32; k];
    compositions(t, 0, &mut exps, &mut |a| {
        let mut term = multinomial(t, a);
        for ((&e, &x), &n) in a.iter().zip(&table.values).zip(&table.counts) {
            if e > 0 {
                term *= x.powi(e as i32) * falling(n, e);
            }
        }
        sum += term;
    });
    Ok(sum / falling(table.total, t))
}

fn compositions(remaining: u32, idx: usize, acc: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
    if idx == acc.len() - 1 {
        acc[idx] = remaining;
        f(acc);
        return;
    }
    for a in 0..=remaining {
        acc[idx] = a;
        compositions(remaining - a, idx + 1, acc, f);
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

fn multinomial(t: u32, parts: &[u32]) -> f64 {
    factorial(t) / parts.iter().map(|&a| factorial(a)).product::<f64>()
}

/// Unbiased estimate of `(E_1 + … + E_n)^t` for independent tables.
pub fn unbiased_sum_power(tables: &[&OutcomeTable], t: u32) -> Result<f64> {
    if tables.is_empty() {
        return Err(Error::InvalidParameter("no tables".into()));
    }
    let powers: Vec<Vec<f64>> = tables
        .iter()
        .map(|tab| (0..=t).map(|j| unbiased_e_power(tab, j)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut exps = vec![0u32; tables.len()];
    compositions(t, 0, &mut exps, &mut |a| {
        sum += multinomial(t, a) * a.iter().zip(&powers).map(|(&j, p)| p[j as usize]).product::<f64>();
    });
    Ok(sum)
}

/// Unbiased estimate of `E[x] E[y]` from per-setting estimates of two
/// quantities, using only pairs of distinct settings.
pub fn cross_product(x: &[f64], y: &[f64]) -> Result<f64> {
    let m = x.len();
    if m != y.len() {
        return Err(Error::InvalidParameter("per-setting series differ in length".into()));
    }
    if m < 2 {
        return Err(Error::InsufficientSet { needed: 2, got: m });
    }
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let diag: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((sx * sy - diag) / (m as f64 * (m as f64 - 1.0)))
}

/// Joint local measurement basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    ZZ,
    XX,
    YY,
    YZ,
    ZY,
}

impl Basis {
    pub const ALL: [Basis; 5] = [Basis::ZZ, Basis::XX, Basis::YY, Basis::YZ, Basis::ZY];
    pub const DEFAULT_TRIPLE: [Basis; 3] = [Basis::ZZ, Basis::XX, Basis::YY];

    /// Pauli indices (1 = X, 2 = Y, 3 = Z) measured by A and B.
    pub fn paulis(&self) -> (usize, usize) {
        match self {
            Basis::ZZ => (3, 3),
            Basis::XX => (1, 1),
            Basis::YY => (2, 2),
            Basis::YZ => (2, 3),
            Basis::ZY => (3, 2),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Basis::ALL
            .into_iter()
            .find(|b| b.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::parse(format!("unknown basis `{s}`")))
    }
}

/// Counts for one Haar setting, per joint basis, as `[N++, N+−, N−+, N−−]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SettingRecord {
    pub setting_id: u64,
    pub counts: BTreeMap<Basis, [u64; 4]>,
    /// The applied local unitaries, when the source logged them.
    pub unitaries: Option<(SingleQubitUnitary, SingleQubitUnitary)>,
}

impl SettingRecord {
    pub fn new(setting_id: u64) -> Self {
        Self { setting_id, counts: BTreeMap::new(), unitaries: None }
    }

    pub fn table(&self, basis: Basis, values: [f64; 4]) -> Result<OutcomeTable> {
        let counts = self
            .counts
            .get(&basis)
            .ok_or_else(|| Error::MissingBasis { setting: self.setting_id, basis: basis.to_string() })?;
        OutcomeTable::from_counts(values, *counts)
    }

    fn correlation(&self, basis: Basis) -> Result<OutcomeTable> {
        self.table(basis, CORRELATION_VALUES)
    }
}

/// Metadata line of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub run_id: u64,
    /// Number of settings.
    pub m: usize,
    /// Shots per basis per setting.
    pub k: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<String>,
}

/// One run: `M` setting records.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDataset {
    pub header: DatasetHeader,
    pub records: Vec<SettingRecord>,
}

impl RunDataset {
    pub fn new(header: DatasetHeader, records: Vec<SettingRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientSet { needed: 1, got: 0 });
        }
        if header.m != records.len() {
            return Err(Error::InvalidParameter(format!(
                "run {} declares {} settings but holds {}",
                header.run_id,
                header.m,
                records.len()
            )));
        }
        let mut ids: Vec<u64> = records.iter().map(|r| r.setting_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("run {} repeats a setting id", header.run_id)));
        }
        Ok(Self { header, records })
    }

    pub fn m(&self) -> usize {
        self.records.len()
    }

    fn per_setting<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&SettingRecord) -> Result<f64> + Sync,
    {
        self.records
            .par_iter()
            .map(|r| f(r).map_err(|e| e.with_context(format!("run {}, setting {}", self.header.run_id, r.setting_id))))
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `9 Ẽ²(ZZ)` for one setting.
pub fn setting_i2(record: &SettingRecord) -> Result<f64> {
    Ok(9.0 * unbiased_e_power(&record.correlation(Basis::ZZ)?, 2)?)
}

/// `Ẽ³(E_xx + E_yy + E_zz)` for one setting.
pub fn setting_i1(record: &SettingRecord) -> Result<f64> {
    let tabs = [record.correlation(Basis::XX)?, record.correlation(Basis::YY)?, record.correlation(Basis::ZZ)?];
    unbiased_sum_power(&[&tabs[0], &tabs[1], &tabs[2]], 3)
}

/// `Î2 = 9 · mean_m Ẽ²_m`.
pub fn estimate_i2(data: &RunDataset) -> Result<f64> {
    Ok(mean(&data.per_setting(setting_i2)?))
}

/// `Î3 = (75 R̂⁴ − Î2²)/2`, with `Î2²` from distinct-setting pairs.
pub fn estimate_i3(data: &RunDataset) -> Result<f64> {
    if data.m() < 2 {
        return Err(Error::InsufficientSet { needed: 2, got: data.m() });
    }
    let r4 = mean(&data.per_setting(|r| unbiased_e_power(&r.correlation(Basis::ZZ)?, 4))?);
    let i2 = data.per_setting(setting_i2)?;
    Ok((75.0 * r4 - cross_product(&i2, &i2)?) / 2.0)
}

/// `Î1 = mean_m Ẽ³_m` of the three-basis sum.
pub fn estimate_i1(data: &RunDataset) -> Result<f64> {
    Ok(mean(&data.per_setting(setting_i1)?))
}

/// Estimated inputs of the partial-transpose quartic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NegativityInputs {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub i7: f64,
    pub i12: f64,
    /// `I5 + I8`; only the sum is identifiable from the Hodge pair.
    pub i5_plus_i8: f64,
    pub i14: f64,
    /// Unbiased `I4 · I7`.
    pub i4_i7: f64,
}

impl NegativityInputs {
    /// Invariant set carrying these estimates. `I5 + I8` is split evenly and
    /// the product `I4 I7` is folded into it, since the quartic depends on
    /// them only through `I5 + I8 + I4 I7`. `I6`, `I9`, `I13` are not
    /// estimated and set to zero.
    pub fn to_invariant_set(&self) -> InvariantSet {
        let half = 0.5 * (self.i5_plus_i8 + self.i4_i7 - self.i4 * self.i7);
        InvariantSet {
            i1: self.i1,
            i2: self.i2,
            i3: self.i3,
            i4: self.i4,
            i5: half,
            i7: self.i7,
            i8: half,
            i12: self.i12,
            i14: self.i14,
            ..Default::default()
        }
    }
}

/// Per-setting unbiased estimates feeding [`estimate_negativity_inputs`].
struct LocalSetting {
    i4: f64,
    i7: f64,
    /// `R³` of `(𝟙+Z)⊗(𝟙+Z)`.
    kl3: f64,
    hodge: f64,
    hodge_prime: f64,
}

fn local_setting(r: &SettingRecord) -> Result<LocalSetting> {
    let za = r.table(Basis::ZZ, LOCAL_A_VALUES)?;
    let zb = r.table(Basis::ZZ, LOCAL_B_VALUES)?;
    let kl = r.table(Basis::ZZ, [4.0, 0.0, 0.0, 0.0])?;
    let x_sum = r.table(Basis::XX, [2.0, 0.0, 0.0, -2.0])?;
    let yz = r.correlation(Basis::YZ)?;
    let zy = r.correlation(Basis::ZY)?;
    let zy_neg = r.table(Basis::ZY, CORRELATION_VALUES.map(|v| -v))?;
    Ok(LocalSetting {
        i4: 3.0 * unbiased_e_power(&za, 2)?,
        i7: 3.0 * unbiased_e_power(&zb, 2)?,
        kl3: unbiased_e_power(&kl, 3)?,
        hodge: unbiased_sum_power(&[&x_sum, &yz, &zy], 4)?,
        hodge_prime: unbiased_sum_power(&[&x_sum, &yz, &zy_neg], 4)?,
    })
}

/// Estimates of every invariant the negativity quartic needs. Requires the
/// ZZ, XX, YY, YZ and ZY tables in every setting and at least two settings.
///
/// `I4`, `I7` come from the single-party marginals of the ZZ table, `I12`
/// from the third moment of `(𝟙+Z)⊗(𝟙+Z)`, `I14` and `I5 + I8` from the
/// Hodge pair. Products of invariants use distinct-setting pairs.
pub fn estimate_negativity_inputs(data: &RunDataset) -> Result<NegativityInputs> {
    if data.m() < 2 {
        return Err(Error::InsufficientSet { needed: 2, got: data.m() });
    }
    let local: Vec<LocalSetting> = data
        .records
        .par_iter()
        .map(|r| {
            local_setting(r)
                .map_err(|e| e.with_context(format!("run {}, setting {}", data.header.run_id, r.setting_id)))
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&LocalSetting) -> f64| local.iter().map(f).collect::<Vec<f64>>();
    let (a, b) = (col(|s| s.i4), col(|s| s.i7));
    let i2s = data.per_setting(setting_i2)?;
    let i1 = estimate_i1(data)?;
    let i2 = mean(&i2s);
    let i3 = estimate_i3(data)?;
    let (i4, i7) = (mean(&a), mean(&b));
    let kl3 = mean(&col(|s| s.kl3));
    // R³ = 1 + (I4 + I7) + (I2 + 2 I12)/3 for k = l = 1.
    let i12 = (3.0 * (kl3 - 1.0 - i4 - i7) - i2) / 2.0;
    let (h, hp) = (mean(&col(|s| s.hodge)), mean(&col(|s| s.hodge_prime)));
    let i14 = HODGE_EXTRACTION_FACTOR * (h - hp);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let a4_b4 = cross_product(&a, &a)? + cross_product(&b, &b)?;
    let a2b2 = cross_product(&a, &b)?;
    let sum_i2 = cross_product(&ab, &i2s)?;
    let i2sq = cross_product(&i2s, &i2s)?;
    // Average of the Hodge pair with the I14 term cancelled, solved for I5 + I8.
    let rest = a4_b4 / 5.0 + 2.0 / 3.0 * a2b2 + 8.0 / 15.0 * sum_i2 + 11.0 / 75.0 * i2sq - i3 / 25.0;
    let i5_plus_i8 = (rest - 0.5 * (h + hp)) * 15.0 / 4.0;
    Ok(NegativityInputs { i1, i2, i3, i4, i7, i12, i5_plus_i8, i14, i4_i7: a2b2 })
}
