//! Design-matrix encoding with leakage-safe fitted state.
//!
//! An [`EncoderState`] is fitted on training rows only: category lookup
//! tables for one-hot blocks and median/mean/std statistics for real
//! columns. Under the factorization policy absent reals emit no entry;
//! under the dense policy they are imputed with the training median. Real
//! columns are Z-scored under both policies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{ColdStartClass, Dataset, DerivedFeatures, SeenSets, TranscriptRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Real,
    /// Categorical under the factorization policy, real-valued otherwise.
    Ordinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Sparse one-hot with absent reals left out (factorization machines).
    Factorization,
    /// Median-imputed, Z-scored dense rows (kNN, SGD, RF, PMLR).
    Dense,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Model names (`fm`, `knn`, `sgd`, `rf`, `pmlr`) this feature is fed to.
    pub models: BTreeSet<String>,
}

impl FeatureSpec {
    fn new(name: &str, kind: FeatureKind, models: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind,
            models: models.iter().map(|m| m.to_string()).collect(),
        }
    }
}

const CONTENT_MODELS: [&str; 5] = ["fm", "knn", "sgd", "rf", "pmlr"];

/// Per-feature kinds and per-model inclusion. Serialized as the feature-policy JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePolicy {
    pub features: Vec<FeatureSpec>,
}

impl Default for FeaturePolicy {
    fn default() -> Self {
        use FeatureKind::*;
        let fm_only = &["fm"][..];
        let all = &CONTENT_MODELS[..];
        let features = vec![
            FeatureSpec::new("sid", Categorical, fm_only),
            FeatureSpec::new("cid", Categorical, fm_only),
            FeatureSpec::new("iid", Categorical, fm_only),
            FeatureSpec::new("major", Categorical, all),
            FeatureSpec::new("race", Categorical, all),
            FeatureSpec::new("sex", Categorical, all),
            FeatureSpec::new("age", Real, all),
            FeatureSpec::new("zip", Categorical, fm_only),
            FeatureSpec::new("sat", Real, all),
            FeatureSpec::new("hs", Categorical, fm_only),
            FeatureSpec::new("hsgpa", Real, all),
            FeatureSpec::new("lterm_gpa", Real, all),
            FeatureSpec::new("lterm_cum_gpa", Real, all),
            FeatureSpec::new("term_chrs", Real, all),
            FeatureSpec::new("total_chrs", Real, all),
            FeatureSpec::new("alevel", Ordinal, all),
            FeatureSpec::new("sterm", Ordinal, all),
            FeatureSpec::new("cohort", Ordinal, all),
            FeatureSpec::new("transfer", Categorical, all),
            FeatureSpec::new("cdisc", Categorical, all),
            FeatureSpec::new("chrs", Real, all),
            FeatureSpec::new("clevel", Ordinal, all),
            FeatureSpec::new("termnum", Real, &[]),
            FeatureSpec::new("num_enrolled", Real, all),
            FeatureSpec::new("total_enrolled", Real, all),
            FeatureSpec::new("lterm_cgpa", Real, all),
            FeatureSpec::new("lterm_cum_cgpa", Real, all),
            FeatureSpec::new("iclass", Categorical, all),
            FeatureSpec::new("irank", Categorical, all),
            FeatureSpec::new("itenure", Categorical, all),
        ];
        Self { features }
    }
}

impl FeaturePolicy {
    /// Default policy plus one categorical spec (fed to every content model)
    /// for each extra column present in the dataset.
    pub fn default_for(dataset: &Dataset) -> Self {
        let mut policy = Self::default();
        let extras: BTreeSet<&String> = dataset.records.iter().flat_map(|r| r.extra.keys()).collect();
        for name in extras {
            if !policy.features.iter().any(|f| &f.name == name) {
                policy
                    .features
                    .push(FeatureSpec::new(name, FeatureKind::Categorical, &CONTENT_MODELS));
            }
        }
        policy
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let policy: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for f in &self.features {
            if !names.insert(&f.name) {
                return Err(Error::InvalidConfig(format!("duplicate feature `{}`", f.name)));
            }
        }
        Ok(())
    }

    /// Specs fed to `model`, in policy order.
    pub fn for_model(&self, model: &str) -> Vec<FeatureSpec> {
        self.features
            .iter()
            .filter(|f| f.models.contains(model))
            .cloned()
            .collect()
    }

    pub fn restricted(&self, names: &[&str]) -> Vec<FeatureSpec> {
        self.features
            .iter()
            .filter(|f| names.contains(&f.name.as_str()))
            .cloned()
            .collect()
    }
}

/// A record together with its derived features.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    pub record: &'a TranscriptRecord,
    pub derived: &'a DerivedFeatures,
    /// Position of the record in its dataset.
    pub index: usize,
}

impl Dataset {
    pub fn row(&self, i: usize) -> RowRef<'_> {
        RowRef {
            record: &self.records[i],
            derived: &self.derived[i],
            index: i,
        }
    }

    pub fn rows(&self, positions: &[usize]) -> Vec<RowRef<'_>> {
        positions.iter().map(|&i| self.row(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RawValue {
    Category(String),
    Number(f64),
    Missing,
}

fn raw_value(name: &str, row: &RowRef<'_>) -> Result<RawValue> {
    use RawValue::*;
    let r = row.record;
    let d = row.derived;
    let cat = |v: Option<&str>| v.map(|s| Category(s.to_string())).unwrap_or(Missing);
    let num = |v: Option<f64>| v.map(Number).unwrap_or(Missing);
    Ok(match name {
        "sid" => Category(r.student_id.clone()),
        "cid" => Category(r.course_id.clone()),
        "iid" => cat(r.effective_instructor()),
        "major" => cat(r.student.major.as_deref()),
        "race" => cat(r.student.race.as_deref()),
        "sex" => cat(r.student.sex.as_deref()),
        "zip" => cat(r.student.zip.as_deref()),
        "hs" => cat(r.student.hs.as_deref()),
        "cdisc" => cat(r.course.cdisc.as_deref()),
        "iclass" => cat(r.instructor.iclass.as_deref()),
        "irank" => cat(r.instructor.irank.as_deref()),
        "itenure" => cat(r.instructor.itenure.as_deref()),
        "transfer" => Category(if r.student.transfer { "1" } else { "0" }.to_string()),
        "age" => num(r.student.age),
        "sat" => num(r.student.sat),
        "hsgpa" | "prior_gpa" => num(r.student.hsgpa),
        "chrs" => num(r.course.chrs),
        "clevel" => num(r.course.clevel.map(f64::from)),
        "termnum" => Number(r.term.index as f64),
        "lterm_gpa" => num(d.lterm_gpa),
        "lterm_cum_gpa" => num(d.lterm_cum_gpa),
        "lterm_cgpa" => num(d.lterm_cgpa),
        "lterm_cum_cgpa" => num(d.lterm_cum_cgpa),
        "term_chrs" => Number(d.term_chrs),
        "total_chrs" => Number(d.total_chrs),
        "num_enrolled" => Number(d.num_enrolled),
        "total_enrolled" => Number(d.total_enrolled),
        "alevel" => Number(d.alevel as f64),
        "sterm" => Number(d.sterm as f64),
        "cohort" => Number(d.cohort as f64),
        other => match r.extra.get(other) {
            Some(v) => match v.parse::<f64>() {
                Ok(x) => Number(x),
                Err(_) => Category(v.clone()),
            },
            None => Missing,
        },
    })
}

/// Features computed from the standard schema; anything else must be an extra column.
pub const BUILTIN_FEATURES: [&str; 31] = [
    "sid", "cid", "iid", "major", "race", "sex", "zip", "hs", "cdisc", "iclass", "irank",
    "itenure", "transfer", "age", "sat", "hsgpa", "prior_gpa", "chrs", "clevel", "termnum",
    "lterm_gpa", "lterm_cum_gpa", "lterm_cgpa", "lterm_cum_cgpa", "term_chrs", "total_chrs",
    "num_enrolled", "total_enrolled", "alevel", "sterm", "cohort",
];

fn as_category(v: RawValue) -> Option<String> {
    match v {
        RawValue::Category(s) => Some(s),
        RawValue::Number(x) => Some(x.to_string()),
        RawValue::Missing => None,
    }
}

fn as_number(v: &RawValue, feature: &str) -> Result<Option<f64>> {
    match v {
        RawValue::Number(x) => Ok(Some(*x)),
        RawValue::Missing => Ok(None),
        RawValue::Category(s) => Err(Error::InvalidConfig(format!(
            "feature `{feature}` is real-valued but row carries `{s}`"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    OneHot { categories: BTreeMap<String, usize> },
    Real { median: f64, mean: f64, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub feature: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderState {
    pub policy: Policy,
    pub blocks: Vec<Block>,
    pub n_cols: usize,
    pub warnings: Vec<String>,
    /// Training-history ids, used to tag encoded rows with their cold-start class.
    pub seen: Arc<SeenSets>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Population mean and standard deviation; a zero std is reported as 1.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

pub fn fit_encoder(rows: &[RowRef<'_>], specs: &[FeatureSpec], policy: Policy) -> Result<EncoderState> {
    if rows.is_empty() {
        return Err(Error::EmptyTraining);
    }
    for spec in specs {
        if !BUILTIN_FEATURES.contains(&spec.name.as_str())
            && !rows.iter().any(|r| r.record.extra.contains_key(&spec.name))
        {
            return Err(Error::UnknownFeature(spec.name.clone()));
        }
    }
    let mut blocks = Vec::with_capacity(specs.len());
    let mut warnings = Vec::new();
    let mut offset = 0;
    for spec in specs {
        let categorical = match spec.kind {
            FeatureKind::Categorical => true,
            FeatureKind::Real => false,
            FeatureKind::Ordinal => policy == Policy::Factorization,
        };
        let kind = if categorical {
            let mut seen = BTreeSet::new();
            for row in rows {
                if let Some(c) = as_category(raw_value(&spec.name, row)?) {
                    seen.insert(c);
                }
            }
            BlockKind::OneHot {
                categories: seen.into_iter().enumerate().map(|(i, c)| (c, i)).collect(),
            }
        } else {
            let mut present = Vec::with_capacity(rows.len());
            for row in rows {
                if let Some(x) = as_number(&raw_value(&spec.name, row)?, &spec.name)? {
                    present.push(x);
                }
            }
            present.sort_by(f64::total_cmp);
            let med = if present.is_empty() {
                warnings.push(format!("feature `{}` has no training values; median set to 0", spec.name));
                0.0
            } else {
                median(&present)
            };
            let (mean, std) = match policy {
                Policy::Factorization => mean_std(&present),
                Policy::Dense => {
                    let mut imputed = present.clone();
                    imputed.resize(rows.len(), med);
                    mean_std(&imputed)
                }
            };
            BlockKind::Real { median: med, mean, std }
        };
        let width = match &kind {
            BlockKind::OneHot { categories } => categories.len(),
            BlockKind::Real { .. } => 1,
        };
        blocks.push(Block {
            feature: spec.name.clone(),
            kind,
            offset,
            width,
        });
        offset += width;
    }
    let seen = SeenSets::from_records(rows.iter().map(|r| r.record));
    Ok(EncoderState {
        policy,
        blocks,
        n_cols: offset,
        warnings,
        seen: Arc::new(seen),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub record: usize,
    pub student_id: String,
    pub course_id: String,
    pub term: u32,
    pub cs_class: ColdStartClass,
    pub transfer: bool,
    pub cohort: u32,
}

/// Sparse rows in CSR layout with aligned targets and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub n_cols: usize,
    pub targets: Vec<Option<f64>>,
    pub meta: Vec<RowMeta>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Targets of a training matrix; every row must be graded.
    pub fn labels(&self) -> Result<Vec<f64>> {
        self.targets
            .iter()
            .map(|t| t.ok_or_else(|| Error::InvalidConfig("training row without a grade".into())))
            .collect()
    }

    /// Row-major dense copy.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows() * self.n_cols];
        for i in 0..self.n_rows() {
            let (idx, val) = self.row(i);
            for (c, v) in idx.iter().zip(val) {
                out[i * self.n_cols + *c as usize] = *v;
            }
        }
        out
    }

    /// Build from explicit sparse rows (column, value) with aligned targets.
    pub fn from_rows(rows: &[Vec<(u32, f64)>], n_cols: usize, targets: Vec<Option<f64>>) -> Self {
        let mut m = DesignMatrix {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            n_cols,
            targets,
            meta: Vec::new(),
        };
        for (i, row) in rows.iter().enumerate() {
            for &(c, v) in row {
                m.indices.push(c);
                m.values.push(v);
            }
            m.indptr.push(m.indices.len());
            m.meta.push(RowMeta {
                record: i,
                student_id: String::new(),
                course_id: String::new(),
                term: 0,
                cs_class: ColdStartClass::Ncs,
                transfer: false,
                cohort: 0,
            });
        }
        m
    }
}

impl EncoderState {
    pub fn feature_names(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.feature.as_str()).collect()
    }

    /// Source feature of every column.
    pub fn column_features(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.n_cols);
        for b in &self.blocks {
            out.extend(std::iter::repeat_n(b.feature.as_str(), b.width));
        }
        out
    }

    /// Human-readable column labels (`feature=category` for one-hot columns).
    pub fn column_labels(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.n_cols];
        for b in &self.blocks {
            match &b.kind {
                BlockKind::OneHot { categories } => {
                    for (c, i) in categories {
                        out[b.offset + i] = format!("{}={}", b.feature, c);
                    }
                }
                BlockKind::Real { .. } => out[b.offset] = b.feature.clone(),
            }
        }
        out
    }

    pub fn seen(&self) -> &SeenSets {
        &self.seen
    }

    fn encode_row(&self, row: &RowRef<'_>, out: &mut Vec<(u32, f64)>) -> Result<()> {
        for b in &self.blocks {
            let value = raw_value(&b.feature, row)?;
            match &b.kind {
                BlockKind::OneHot { categories } => {
                    if let Some(c) = as_category(value) {
                        if let Some(i) = categories.get(&c) {
                            out.push(((b.offset + i) as u32, 1.0));
                        }
                    }
                }
                BlockKind::Real { median, mean, std } => {
                    let x = match (as_number(&value, &b.feature)?, self.policy) {
                        (Some(x), _) => x,
                        (None, Policy::Dense) => *median,
                        (None, Policy::Factorization) => continue,
                    };
                    let z = (x - mean) / std;
                    if z != 0.0 || self.policy == Policy::Dense {
                        out.push((b.offset as u32, z));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, rows: &[RowRef<'_>]) -> Result<DesignMatrix> {
        let mut m = DesignMatrix {
            indptr: Vec::with_capacity(rows.len() + 1),
            indices: Vec::new(),
            values: Vec::new(),
            n_cols: self.n_cols,
            targets: Vec::with_capacity(rows.len()),
            meta: Vec::with_capacity(rows.len()),
        };
        m.indptr.push(0);
        let mut buf = Vec::new();
        for row in rows {
            buf.clear();
            self.encode_row(row, &mut buf)?;
            for &(c, v) in &buf {
                m.indices.push(c);
                m.values.push(v);
            }
            m.indptr.push(m.indices.len());
            m.targets.push(row.record.grade.map(|g| g.value()));
            m.meta.push(RowMeta {
                record: row.index,
                student_id: row.record.student_id.clone(),
                course_id: row.record.course_id.clone(),
                term: row.record.term.index,
                cs_class: self.seen().classify(row.record),
                transfer: row.record.student.transfer,
                cohort: row.derived.cohort,
            });
        }
        Ok(m)
    }

    /// Restrict to the named feature blocks, recompacting column indices.
    pub fn select_features(&self, keep: &BTreeSet<String>) -> Result<EncoderState> {
        if keep.is_empty() {
            return Err(Error::EmptySelection);
        }
        for name in keep {
            if !self.blocks.iter().any(|b| &b.feature == name) {
                return Err(Error::UnknownFeature(name.clone()));
            }
        }
        let mut offset = 0;
        let mut blocks = Vec::new();
        for b in self.blocks.iter().filter(|b| keep.contains(&b.feature)) {
            let mut nb = b.clone();
            nb.offset = offset;
            offset += nb.width;
            blocks.push(nb);
        }
        Ok(EncoderState {
            policy: self.policy,
            blocks,
            n_cols: offset,
            warnings: self.warnings.clone(),
            seen: self.seen.clone(),
        })
    }
}

pub fn encode(rows: &[RowRef<'_>], state: &EncoderState) -> Result<DesignMatrix> {
    state.encode(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{Season, TermId};

    fn record(s: &str, c: &str, t: u32, g: f64) -> TranscriptRecord {
        TranscriptRecord::new(s, c, TermId::from_index(t, Season::Fall, 2009)).with_grade(g)
    }

    fn dataset_with_ages(ages: &[Option<f64>]) -> Dataset {
        let records = ages
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut r = record(&format!("s{i}"), &format!("c{}", i % 3), 0, 3.0);
                r.student.age = *a;
                r.student.major = Some(format!("m{}", i % 3));
                r
            })
            .collect();
        Dataset::new(records)
    }

    fn spec(name: &str, kind: FeatureKind) -> FeatureSpec {
        FeatureSpec::new(name, kind, &["fm"])
    }

    #[test]
    fn real_statistics() {
        let d = dataset_with_ages(&[Some(1.0), Some(2.0), Some(100.0)]);
        let rows = d.rows(&[0, 1, 2]);
        let st = fit_encoder(&rows, &[spec("age", FeatureKind::Real)], Policy::Dense).unwrap();
        match &st.blocks[0].kind {
            BlockKind::Real { median, mean, std } => {
                assert_eq!(*median, 2.0);
                assert!((mean - 34.333333333333336).abs() < 1e-12);
                let pop = ((1.0f64 - mean).powi(2) + (2.0 - mean).powi(2) + (100.0 - mean).powi(2)) / 3.0;
                assert!((std - pop.sqrt()).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn categorical_block_width() {
        let d = dataset_with_ages(&[None, None, None, None]);
        let rows = d.rows(&[0, 1, 2, 3]);
        let st = fit_encoder(&rows, &[spec("major", FeatureKind::Categorical)], Policy::Dense).unwrap();
        assert_eq!(st.n_cols, 3);
        let m = st.encode(&rows).unwrap();
        for i in 0..m.n_rows() {
            assert_eq!(m.row(i).1, &[1.0]);
        }
    }

    #[test]
    fn all_absent_feature_warns_and_encodes_zero() {
        let d = dataset_with_ages(&[None, None]);
        let rows = d.rows(&[0, 1]);
        let st = fit_encoder(&rows, &[spec("age", FeatureKind::Real)], Policy::Dense).unwrap();
        assert_eq!(st.warnings.len(), 1);
        let m = st.encode(&rows).unwrap();
        assert_eq!(m.dense(), vec![0.0, 0.0]);
    }

    #[test]
    fn missing_value_policies() {
        let d = dataset_with_ages(&[Some(1.0), Some(2.0), Some(100.0), None]);
        let rows = d.rows(&[0, 1, 2, 3]);
        let specs = [spec("age", FeatureKind::Real)];
        let dense = fit_encoder(&rows, &specs, Policy::Dense).unwrap();
        let m = dense.encode(&rows[3..]).unwrap();
        let BlockKind::Real { mean, std, .. } = dense.blocks[0].kind else { unreachable!() };
        assert_eq!(m.row(0).1, &[(2.0 - mean) / std]);

        let fm = fit_encoder(&rows, &specs, Policy::Factorization).unwrap();
        let m = fm.encode(&rows[3..]).unwrap();
        assert!(m.row(0).0.is_empty());
    }

    #[test]
    fn unseen_category_is_zero_block() {
        let train = Dataset::new(vec![record("s1", "c1", 0, 3.0), record("s2", "c2", 0, 2.0)]);
        let test = Dataset::new(vec![record("s1", "c9", 1, 3.0)]);
        let specs = [spec("sid", FeatureKind::Categorical), spec("cid", FeatureKind::Categorical)];
        let st = fit_encoder(&train.rows(&[0, 1]), &specs, Policy::Factorization).unwrap();
        let m = st.encode(&test.rows(&[0])).unwrap();
        assert_eq!(m.row(0).0, &[0]);
        assert_eq!(m.meta[0].cs_class, ColdStartClass::Csc);
    }

    #[test]
    fn empty_training_rejected() {
        assert!(matches!(
            fit_encoder(&[], &[spec("sid", FeatureKind::Categorical)], Policy::Dense),
            Err(Error::EmptyTraining)
        ));
    }

    #[test]
    fn ordinal_switches_with_policy() {
        let d = Dataset::new(vec![
            record("s1", "c1", 0, 3.0),
            record("s1", "c2", 1, 3.0),
            record("s1", "c3", 2, 3.0),
        ]);
        let rows = d.rows(&[0, 1, 2]);
        let specs = [spec("sterm", FeatureKind::Ordinal)];
        assert_eq!(fit_encoder(&rows, &specs, Policy::Factorization).unwrap().n_cols, 3);
        assert_eq!(fit_encoder(&rows, &specs, Policy::Dense).unwrap().n_cols, 1);
    }

    #[test]
    fn selection_recompacts_and_validates() {
        let d = dataset_with_ages(&[Some(1.0), Some(2.0), Some(3.0)]);
        let rows = d.rows(&[0, 1, 2]);
        let specs = [
            spec("sid", FeatureKind::Categorical),
            spec("major", FeatureKind::Categorical),
            spec("age", FeatureKind::Real),
        ];
        let st = fit_encoder(&rows, &specs, Policy::Factorization).unwrap();
        assert_eq!(st.n_cols, 7);
        let keep: BTreeSet<String> = ["age".to_string(), "major".to_string()].into();
        let sub = st.select_features(&keep).unwrap();
        assert_eq!(sub.n_cols, 4);
        assert_eq!(sub.feature_names(), vec!["major", "age"]);
        let full = st.encode(&rows).unwrap();
        let part = sub.encode(&rows).unwrap();
        for i in 0..3 {
            assert_eq!(&full.row(i).1[1..], part.row(i).1);
        }
        assert!(matches!(st.select_features(&BTreeSet::new()), Err(Error::EmptySelection)));
        let unknown: BTreeSet<String> = ["nope".to_string()].into();
        assert!(matches!(st.select_features(&unknown), Err(Error::UnknownFeature(_))));
        let all: BTreeSet<String> = st.feature_names().iter().map(|s| s.to_string()).collect();
        assert_eq!(st.select_features(&all).unwrap().encode(&rows).unwrap(), full);
    }

    #[test]
    fn default_policy_covers_appendix_features_once() {
        let p = FeaturePolicy::default();
        p.validate().unwrap();
        assert_eq!(p.features.len(), 30);
        let fm: Vec<_> = p.for_model("fm").into_iter().map(|f| f.name).collect();
        assert!(fm.contains(&"sid".to_string()) && fm.contains(&"iid".to_string()));
        let rf: Vec<_> = p.for_model("rf").into_iter().map(|f| f.name).collect();
        for sparse in ["sid", "cid", "iid", "zip", "hs"] {
            assert!(!rf.contains(&sparse.to_string()));
        }
    }
}
