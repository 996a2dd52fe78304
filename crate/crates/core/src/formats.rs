//! Text formats read and written by the command-line tool.
//!
//! * State files: JSON with either Bloch coordinates
//!   `{"bloch": {"alpha": [..], "beta": [..], "t": [[..], [..], [..]]}}` or a
//!   row-major density matrix of `[re, im]` pairs `{"matrix": [[[re, im], ..], ..]}`.
//! * Invariant sets: JSON object keyed `I1` … `I14`.
//! * Design sets: `{"unitaries": [[[re, im] × 4], ..]}` (row-major 2×2),
//!   `{"states": [[[re, im], [re, im]], ..]}` or `{"stokes": [[x, y, z], ..]}`.
//! * Datasets: one JSON object per line. A `{"header": {...}}` line opens a
//!   run; `{"setting_id", "basis", "counts"}` lines carry
//!   `[N++, N+−, N−+, N−−]`; `{"setting_id", "unitary_a", "unitary_b"}` lines
//!   log the applied unitaries. Blank lines and lines starting with `#` are
//!   skipped. Invariants estimated from these counts are reported in the
//!   invariant normalization (`I2 = 9 R²`).
//! * Experiment configs: flat TOML.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Basis, DatasetHeader, RunDataset, SettingRecord};
use crate::haar::{StateSet, UnitarySet};
use crate::invariants::InvariantSet;
use crate::moments::ObservableKind;
use crate::pauli::C64;
use crate::pipeline::ExperimentConfig;
use crate::state::{BlochTwoQubit, SingleQubitUnitary, TwoQubitState};

/// Accepted deviation from unitarity in logged or supplied unitaries.
pub const UNITARY_INPUT_TOL: f64 = 1e-6;

type Cplx = [f64; 2];

fn json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: Some(e.line()), msg: e.to_string() })
}

fn finite(xs: impl IntoIterator<Item = f64>) -> Result<()> {
    if xs.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::parse("non-finite number"))
    }
}

fn c(z: &Cplx) -> C64 {
    C64::new(z[0], z[1])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlochFile {
    alpha: [f64; 3],
    beta: [f64; 3],
    t: [[f64; 3]; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum StateFile {
    Bloch(BlochFile),
    Matrix([[Cplx; 4]; 4]),
}

/// Two-qubit state from a state file; the state must be physical.
pub fn parse_state_file(text: &str) -> Result<TwoQubitState> {
    let m = match json::<StateFile>(text)? {
        StateFile::Bloch(b) => {
            finite(b.alpha.into_iter().chain(b.beta).chain(b.t.into_iter().flatten()))?;
            let t = Matrix3::from_fn(|i, j| b.t[i][j]);
            BlochTwoQubit::new(Vector3::from(b.alpha), Vector3::from(b.beta), t).to_matrix()
        }
        StateFile::Matrix(rows) => {
            finite(rows.iter().flatten().flatten().copied())?;
            Matrix4::from_fn(|i, j| c(&rows[i][j]))
        }
    };
    TwoQubitState::new(m)
}

/// Writes a state in the matrix form of [`parse_state_file`].
pub fn write_state_file(state: &TwoQubitState) -> String {
    let m = state.matrix();
    let rows: Vec<Vec<Cplx>> = (0..4).map(|i| (0..4).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
    serde_json::json!({ "matrix": rows }).to_string()
}

pub fn parse_invariant_set(text: &str) -> Result<InvariantSet> {
    let inv: InvariantSet = json(text)?;
    finite(inv.values())?;
    Ok(inv)
}

fn unitary(m: &[Cplx; 4]) -> Result<SingleQubitUnitary> {
    finite(m.iter().flatten().copied())?;
    SingleQubitUnitary::with_tolerance(Matrix2::new(c(&m[0]), c(&m[1]), c(&m[2]), c(&m[3])), UNITARY_INPUT_TOL)
}

fn unitary_entries(u: &SingleQubitUnitary) -> [Cplx; 4] {
    let m = u.matrix();
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]].map(|z| [z.re, z.im])
}

/// Set submitted for randomness certification.
#[derive(Clone, Debug, PartialEq)]
pub enum DesignSet {
    Unitaries(UnitarySet),
    States(StateSet),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum DesignFile {
    Unitaries(Vec<[Cplx; 4]>),
    States(Vec<[Cplx; 2]>),
    Stokes(Vec<[f64; 3]>),
}

pub fn parse_design_set(text: &str) -> Result<DesignSet> {
    Ok(match json::<DesignFile>(text)? {
        DesignFile::Unitaries(us) => {
            DesignSet::Unitaries(UnitarySet::new(us.iter().map(unitary).collect::<Result<_>>()?)?)
        }
        DesignFile::States(ss) => {
            finite(ss.iter().flatten().flatten().copied())?;
            DesignSet::States(StateSet::new(ss.iter().map(|s| Vector2::new(c(&s[0]), c(&s[1]))).collect())?)
        }
        DesignFile::Stokes(vs) => {
            finite(vs.iter().flatten().copied())?;
            DesignSet::States(StateSet::from_bloch(&vs.iter().map(|v| Vector3::from(*v)).collect::<Vec<_>>())?)
        }
    })
}

pub fn parse_unitary_set(text: &str) -> Result<UnitarySet> {
    match parse_design_set(text)? {
        DesignSet::Unitaries(u) => Ok(u),
        DesignSet::States(_) => Err(Error::parse("expected a unitary set")),
    }
}

pub fn parse_state_set(text: &str) -> Result<StateSet> {
    match parse_design_set(text)? {
        DesignSet::States(s) => Ok(s),
        DesignSet::Unitaries(_) => Err(Error::parse("expected a state set")),
    }
}

pub fn write_unitary_set(set: &UnitarySet) -> String {
    let us: Vec<[Cplx; 4]> = set.members().iter().map(unitary_entries).collect();
    serde_json::json!({ "unitaries": us }).to_string()
}

pub fn parse_observable(text: &str) -> Result<ObservableKind> {
    let kind: ObservableKind = json(text)?;
    if let ObservableKind::KL { k_a, l_a, k_b, l_b } = kind {
        finite([k_a, l_a, k_b, l_b])?;
    }
    Ok(kind)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::parse(e.message().to_string()))?;
    finite([cfg.visibility, cfg.gamma])?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DatasetLine {
    Header { header: DatasetHeader },
    Counts { setting_id: u64, basis: Basis, counts: [u64; 4] },
    Unitaries { setting_id: u64, unitary_a: [Cplx; 4], unitary_b: [Cplx; 4] },
}

struct PendingRun {
    header: DatasetHeader,
    records: BTreeMap<u64, SettingRecord>,
    order: Vec<u64>,
}

impl PendingRun {
    fn record(&mut self, id: u64) -> &mut SettingRecord {
        if !self.records.contains_key(&id) {
            self.order.push(id);
        }
        self.records.entry(id).or_insert_with(|| SettingRecord::new(id))
    }

    fn finish(mut self) -> Result<RunDataset> {
        let records = self.order.iter().map(|id| self.records.remove(id).expect("recorded")).collect();
        RunDataset::new(self.header, records)
    }
}

/// Parses one or more runs from line-delimited JSON.
pub fn parse_dataset(text: &str) -> Result<Vec<RunDataset>> {
    let mut runs = Vec::new();
    let mut current: Option<PendingRun> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let at = |msg: String| Error::Parse { line: Some(line_no), msg };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        match parsed {
            DatasetLine::Header { header } => {
                if let Some(run) = current.take() {
                    runs.push(run.finish()?);
                }
                current = Some(PendingRun { header, records: BTreeMap::new(), order: Vec::new() });
            }
            DatasetLine::Counts { setting_id, basis, counts } => {
                let run = current.as_mut().ok_or_else(|| at("counts before any header".into()))?;
                let k = run.header.k;
                let total = counts
                    .iter()
                    .try_fold(0u64, |a, &c| a.checked_add(c))
                    .ok_or_else(|| at("count overflow".into()))?;
                if total != k {
                    return Err(at(format!("setting {setting_id} {basis}: counts sum to {total}, header says {k}")));
                }
                if run.record(setting_id).counts.insert(basis, counts).is_some() {
                    return Err(at(format!("setting {setting_id} repeats basis {basis}")));
                }
            }
            DatasetLine::Unitaries { setting_id, unitary_a, unitary_b } => {
                let run = current.as_mut().ok_or_else(|| at("unitaries before any header".into()))?;
                let pair = (
                    unitary(&unitary_a).map_err(|e| at(e.to_string()))?,
                    unitary(&unitary_b).map_err(|e| at(e.to_string()))?,
                );
                let rec = run.record(setting_id);
                if rec.unitaries.replace(pair).is_some() {
                    return Err(at(format!("setting {setting_id} logs unitaries twice")));
                }
            }
        }
    }
    if let Some(run) = current {
        runs.push(run.finish()?);
    }
    if runs.is_empty() {
        return Err(Error::parse("dataset holds no run"));
    }
    Ok(runs)
}

/// Inverse of [`parse_dataset`].
pub fn write_dataset(runs: &[RunDataset]) -> String {
    let mut out = String::new();
    let mut push = |line: &DatasetLine| {
        out.push_str(&serde_json::to_string(line).expect("serializable"));
        out.push('\n');
    };
    for run in runs {
        push(&DatasetLine::Header { header: run.header.clone() });
        for r in &run.records {
            if let Some((a, b)) = &r.unitaries {
                push(&DatasetLine::Unitaries {
                    setting_id: r.setting_id,
                    unitary_a: unitary_entries(a),
                    unitary_b: unitary_entries(b),
                });
            }
            for (&basis, &counts) in &r.counts {
                push(&DatasetLine::Counts { setting_id: r.setting_id, basis, counts });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn state_file_forms() {
        let bloch = r#"{"bloch": {"alpha": [0,0,0], "beta": [0,0,0], "t": [[-1,0,0],[0,-1,0],[0,0,-1]]}}"#;
        let s = parse_state_file(bloch).unwrap();
        assert!((s.matrix() - TwoQubitState::singlet().matrix()).norm() < 1e-14);
        let again = parse_state_file(&write_state_file(&s)).unwrap();
        assert_eq!(again.matrix(), s.matrix());
        let unphysical = r#"{"bloch": {"alpha": [0,0,0], "beta": [0,0,0], "t": [[1,0,0],[0,1,0],[0,0,1]]}}"#;
        assert!(parse_state_file(unphysical).is_err());
        assert!(parse_state_file(r#"{"bloch": {"alpha": [0,0], "beta": [0,0,0], "t": []}}"#).is_err());
        assert!(parse_state_file("{}").is_err());
        assert!(parse_state_file("").is_err());
    }

    #[test]
    fn invariant_set_parsing() {
        let text = r#"{"I1":-1,"I2":3,"I3":3,"I4":0,"I5":0,"I6":0,"I7":0,"I8":0,"I9":0,"I12":0,"I13":0,"I14":0}"#;
        assert_eq!(parse_invariant_set(text).unwrap().i2, 3.0);
        assert!(parse_invariant_set(r#"{"I1":1}"#).is_err());
        assert!(parse_invariant_set(&text.replace("\"I14\":0", "\"I14\":0,\"I99\":1")).is_err());
    }

    #[test]
    fn design_sets() {
        let u = crate::haar::sample_haar(1, 4).unwrap();
        let back = parse_unitary_set(&write_unitary_set(&u)).unwrap();
        for (a, b) in u.members().iter().zip(back.members()) {
            assert!((a.matrix() - b.matrix()).norm() < 1e-12);
        }
        let s = parse_state_set(r#"{"stokes": [[0,0,1],[1,0,0]]}"#).unwrap();
        assert_eq!(s.len(), 2);
        assert!(parse_state_set(r#"{"states": [[[1,0],[1,0]]]}"#).is_err());
        assert!(parse_unitary_set(r#"{"unitaries": [[[2,0],[0,0],[0,0],[1,0]]]}"#).is_err());
        assert!(parse_unitary_set(r#"{"stokes": [[0,0,1]]}"#).is_err());
    }

    #[test]
    fn observable_parsing() {
        assert_eq!(parse_observable(r#"{"kind":"ZZ"}"#).unwrap(), ObservableKind::ZZ);
        let kl = parse_observable(r#"{"kind":"KL","k_a":0.5,"l_a":1,"k_b":0.5,"l_b":1}"#).unwrap();
        assert!(matches!(kl, ObservableKind::KL { .. }));
        assert!(parse_observable(r#"{"kind":"Nope"}"#).is_err());
    }

    #[test]
    fn config_parsing() {
        let cfg =
            parse_config("state = \"werner:0.9\"\nm = 10\nk = 100\nruns = 2\nbases = [\"ZZ\", \"XX\"]\nseed = 7\n")
                .unwrap();
        assert_eq!(cfg.m, 10);
        assert_eq!(cfg.bases, vec![Basis::ZZ, Basis::XX]);
        assert_abs_diff_eq!(cfg.gamma, 0.9973);
        assert!(parse_config("state = \"singlet\"\nk = 3\n").is_err());
        assert!(parse_config("state = \"singlet\"\nbogus = 1\n").is_err());
        assert!(parse_config("state = \"singlet\"\nvisibility = nan\n").is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let mut cfg = ExperimentConfig::new(crate::pipeline::StateSource::Singlet);
        cfg.m = 3;
        cfg.k = 20;
        cfg.runs = 2;
        let runs = crate::pipeline::simulate(&cfg).unwrap();
        let text = write_dataset(&runs);
        let back = parse_dataset(&text).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in runs.iter().zip(&back) {
            assert_eq!(a.header, b.header);
            for (ra, rb) in a.records.iter().zip(&b.records) {
                assert_eq!(ra.counts, rb.counts);
                let (ua, ub) = (ra.unitaries.as_ref().unwrap(), rb.unitaries.as_ref().unwrap());
                assert!((ua.0.matrix() - ub.0.matrix()).norm() < 1e-12);
            }
        }
        assert_eq!(write_dataset(&back), text);
    }

    #[test]
    fn dataset_errors_carry_lines() {
        let bad_sum =
            "{\"header\":{\"run_id\":0,\"m\":1,\"k\":10}}\n{\"setting_id\":0,\"basis\":\"ZZ\",\"counts\":[1,2,3,3]}\n";
        assert!(matches!(parse_dataset(bad_sum), Err(Error::Parse { line: Some(2), .. })));
        let orphan = "{\"setting_id\":0,\"basis\":\"ZZ\",\"counts\":[1,2,3,4]}\n";
        assert!(parse_dataset(orphan).is_err());
        let dup = "{\"header\":{\"run_id\":0,\"m\":1,\"k\":10}}\n{\"setting_id\":0,\"basis\":\"ZZ\",\"counts\":[1,2,3,4]}\n{\"setting_id\":0,\"basis\":\"ZZ\",\"counts\":[1,2,3,4]}\n";
        assert!(parse_dataset(dup).is_err());
        let overflow = format!(
            "{{\"header\":{{\"run_id\":0,\"m\":1,\"k\":10}}}}\n{{\"setting_id\":0,\"basis\":\"ZZ\",\"counts\":[{},{},0,0]}}\n",
            u64::MAX,
            u64::MAX
        );
        assert!(parse_dataset(&overflow).is_err());
        assert!(parse_dataset("# only a comment\n").is_err());
        let wrong_m =
            "{\"header\":{\"run_id\":0,\"m\":2,\"k\":10}}\n{\"setting_id\":0,\"basis\":\"ZZ\",\"counts\":[1,2,3,4]}\n";
        assert!(parse_dataset(wrong_m).is_err());
    }
}
