//! Feature importance: mean absolute deviation importance (MADImp) for
//! additive-interaction models and Gini importance for forests.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoding::{Block, BlockKind, DesignMatrix, EncoderState, Policy};
use crate::error::{Error, Result};
use crate::models::fm::FmModel;
use crate::models::forest::ForestModel;
use crate::models::linear::LinearModel;
use crate::models::pmlr::PmlrModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub a: usize,
    pub b: usize,
    /// `x_a · x_b · Z_ab`
    pub value: f64,
    pub xa: f64,
    pub xb: f64,
}

/// Additive breakdown of one raw prediction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermDecomposition {
    pub intercept: f64,
    pub one_way: Vec<(usize, f64)>,
    pub two_way: Vec<PairTerm>,
}

impl TermDecomposition {
    pub fn total(&self) -> f64 {
        self.intercept + self.one_way.iter().map(|t| t.1).sum::<f64>() + self.two_way.iter().map(|t| t.value).sum::<f64>()
    }
}

pub fn decompose_fm(model: &FmModel, idx: &[u32], val: &[f64]) -> TermDecomposition {
    let mut d = TermDecomposition {
        intercept: model.w0,
        ..Default::default()
    };
    for (n, (&a, &xa)) in idx.iter().zip(val).enumerate() {
        d.one_way.push((a as usize, model.w[a as usize] * xa));
        for (&b, &xb) in idx[n + 1..].iter().zip(&val[n + 1..]) {
            d.two_way.push(PairTerm {
                a: a as usize,
                b: b as usize,
                value: xa * xb * model.pairwise(a as usize, b as usize),
                xa,
                xb,
            });
        }
    }
    d
}

/// Rewrite an FM into an equivalent one whose one-hot blocks are centered.
///
/// A block with exactly one active unit column in every row of `m` lets
/// all its levels share a common weight and factor vector without changing
/// any prediction. Those shared parts are moved into the intercept and into
/// the other columns' linear weights, using column frequencies in `m` as
/// weights, so predictions on such rows are unchanged.
pub fn center_fm(model: &FmModel, state: &EncoderState, m: &DesignMatrix) -> FmModel {
    let k = model.k;
    let mut freq = vec![0.0; model.n_features()];
    let mut hits = vec![0usize; state.blocks.len()];
    let mut exact = vec![true; state.blocks.len()];
    let owner: Vec<usize> = state
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| std::iter::repeat_n(i, b.width))
        .collect();
    for i in 0..m.n_rows() {
        let (idx, val) = m.row(i);
        hits.iter_mut().for_each(|h| *h = 0);
        for (&c, &x) in idx.iter().zip(val) {
            freq[c as usize] += 1.0;
            let b = owner[c as usize];
            hits[b] += 1;
            if x != 1.0 {
                exact[b] = false;
            }
        }
        for (e, &h) in exact.iter_mut().zip(&hits) {
            *e &= h == 1;
        }
    }
    let mut out = model.clone();
    let centered: Vec<&Block> = state
        .blocks
        .iter()
        .zip(&exact)
        .filter(|(b, &e)| e && m.n_rows() > 0 && matches!(b.kind, BlockKind::OneHot { .. }))
        .map(|(b, _)| b)
        .collect();
    for b in &centered {
        let cols = b.offset..b.offset + b.width;
        let total: f64 = freq[cols.clone()].iter().sum();
        let mut u = vec![0.0; k];
        for l in cols.clone() {
            for (uf, vf) in u.iter_mut().zip(out.factor(l)) {
                *uf += freq[l] * vf / total;
            }
        }
        for l in 0..out.n_features() {
            if cols.contains(&l) {
                out.factor_mut(l).iter_mut().zip(&u).for_each(|(v, uf)| *v -= uf);
            } else {
                out.w[l] += out.factor(l).iter().zip(&u).map(|(v, uf)| v * uf).sum::<f64>();
            }
        }
    }
    for b in &centered {
        let cols = b.offset..b.offset + b.width;
        let total: f64 = freq[cols.clone()].iter().sum();
        let c: f64 = cols.clone().map(|l| freq[l] * out.w[l]).sum::<f64>() / total;
        out.w0 += c;
        out.w[cols].iter_mut().for_each(|w| *w -= c);
    }
    out
}

pub fn decompose_linear(model: &LinearModel, idx: &[u32], val: &[f64]) -> TermDecomposition {
    TermDecomposition {
        intercept: model.intercept,
        one_way: idx.iter().zip(val).map(|(c, x)| (*c as usize, model.coef[*c as usize] * x)).collect(),
        two_way: Vec::new(),
    }
}

/// PMLR contributions. The student and course biases are reported on two
/// extra columns, `n_cols` and `n_cols + 1`.
pub fn decompose_pmlr(model: &PmlrModel, student: &str, course: &str, idx: &[u32], val: &[f64]) -> TermDecomposition {
    let uniform = vec![1.0 / model.k as f64; model.k];
    let member = model.membership.get(student).unwrap_or(&uniform);
    let mut one_way: Vec<(usize, f64)> = idx
        .iter()
        .zip(val)
        .map(|(c, x)| {
            let w: f64 = (0..model.k).map(|l| member[l] * model.w[l * model.n_cols + *c as usize]).sum();
            (*c as usize, w * x)
        })
        .collect();
    one_way.push((model.n_cols, model.student_bias.get(student).copied().unwrap_or(0.0)));
    one_way.push((model.n_cols + 1, model.course_bias.get(course).copied().unwrap_or(0.0)));
    TermDecomposition {
        intercept: model.w0,
        one_way,
        two_way: Vec::new(),
    }
}

/// A share of one row's total absolute deviation, split by origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub total: f64,
    pub one_way: f64,
    pub two_way: f64,
}

impl Share {
    fn add_scaled(&mut self, other: &Share, w: f64) {
        self.total += other.total * w;
        self.one_way += other.one_way * w;
        self.two_way += other.two_way * w;
    }
}

/// Per-column shares of one row, or `None` when the row has no deviation
/// from the intercept.
pub fn madimp_row(d: &TermDecomposition) -> Option<BTreeMap<usize, Share>> {
    let total: f64 = d.one_way.iter().map(|t| t.1.abs()).sum::<f64>() + d.two_way.iter().map(|t| t.value.abs()).sum::<f64>();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let mut out: BTreeMap<usize, Share> = BTreeMap::new();
    for &(c, v) in &d.one_way {
        let s = out.entry(c).or_default();
        s.one_way += v.abs() / total;
    }
    for t in &d.two_way {
        let (ma, mb) = (t.xa.abs(), t.xb.abs());
        let frac_a = if ma + mb > 0.0 { ma / (ma + mb) } else { 0.5 };
        let v = t.value.abs() / total;
        out.entry(t.a).or_default().two_way += v * frac_a;
        out.entry(t.b).or_default().two_way += v * (1.0 - frac_a);
    }
    for s in out.values_mut() {
        s.total = s.one_way + s.two_way;
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// One entry per encoded column.
    Column,
    /// One-hot columns summed into their source feature.
    Block,
}

/// Label per encoded column under the chosen grouping.
pub fn group_labels(state: &EncoderState, grouping: Grouping) -> Vec<String> {
    match grouping {
        Grouping::Column => state.column_labels(),
        Grouping::Block => state.column_features().into_iter().map(str::to_string).collect(),
    }
}

/// Mean shares over the rows of one evaluation term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermShares {
    pub term: u32,
    /// Weight of this term in the aggregate (records predicted).
    pub n_records: usize,
    /// Rows with nonzero deviation that entered the mean.
    pub n_rows: usize,
    pub shares: BTreeMap<String, Share>,
}

/// Average row shares under a label mapping; rows without deviation are skipped.
pub fn madimp_term<I>(rows: I, labels: &[String], term: u32, n_records: usize) -> TermShares
where
    I: IntoIterator<Item = TermDecomposition>,
{
    let mut sums: BTreeMap<String, Share> = BTreeMap::new();
    let mut n_rows = 0usize;
    for d in rows {
        let Some(row) = madimp_row(&d) else { continue };
        n_rows += 1;
        for (c, s) in row {
            sums.entry(labels[c].clone()).or_default().add_scaled(&s, 1.0);
        }
    }
    let scale = if n_rows > 0 { 1.0 / n_rows as f64 } else { 0.0 };
    for s in sums.values_mut() {
        *s = Share {
            total: s.total * scale,
            one_way: s.one_way * scale,
            two_way: s.two_way * scale,
        };
    }
    TermShares {
        term,
        n_records,
        n_rows,
        shares: sums,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: String,
    pub model: String,
    pub grouping: Grouping,
    pub terms: Vec<TermShares>,
    pub aggregate: BTreeMap<String, Share>,
}

/// Record-count weighted mean of per-term shares.
pub fn weighted_aggregate(terms: &[TermShares]) -> Result<BTreeMap<String, Share>> {
    let used: Vec<&TermShares> = terms.iter().filter(|t| t.n_rows > 0 && t.n_records > 0).collect();
    let weight: usize = used.iter().map(|t| t.n_records).sum();
    if weight == 0 {
        return Err(Error::InvalidConfig("importance needs at least one term with nonzero rows".into()));
    }
    let mut out: BTreeMap<String, Share> = BTreeMap::new();
    for t in used {
        let w = t.n_records as f64 / weight as f64;
        for (f, s) in &t.shares {
            out.entry(f.clone()).or_default().add_scaled(s, w);
        }
    }
    Ok(out)
}

pub fn madimp_aggregate(model: &str, grouping: Grouping, terms: Vec<TermShares>) -> Result<ImportanceReport> {
    Ok(ImportanceReport {
        method: "madimp".into(),
        model: model.into(),
        grouping,
        aggregate: weighted_aggregate(&terms)?,
        terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Threshold(f64),
    TopN(usize),
    /// Keep features whose share is at least the uniform share `1 / n`.
    AboveMean,
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::Threshold(0.001)
    }
}

/// Features kept whatever their share.
pub const ALWAYS_KEPT: [&str; 2] = ["sid", "cid"];

pub fn madimp_select(shares: &BTreeMap<String, Share>, rule: SelectionRule) -> Result<BTreeSet<String>> {
    if shares.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut keep: BTreeSet<String> = match rule {
        SelectionRule::Threshold(t) => shares
            .iter()
            .filter(|(_, s)| s.total >= t)
            .map(|(f, _)| f.clone())
            .collect(),
        SelectionRule::TopN(n) => {
            let mut ranked: Vec<(&String, f64)> = shares.iter().map(|(f, s)| (f, s.total)).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
            ranked.into_iter().take(n).map(|(f, _)| f.clone()).collect()
        }
        SelectionRule::AboveMean => {
            let uniform = 1.0 / shares.len() as f64;
            shares
                .iter()
                .filter(|(_, s)| s.total >= uniform)
                .map(|(f, _)| f.clone())
                .collect()
        }
    };
    keep.extend(ALWAYS_KEPT.iter().map(|s| s.to_string()));
    Ok(keep)
}

/// Normalized split-gain importance of each forest, averaged across terms
/// by record count. `forests` holds (term, records predicted, model).
pub fn gini_importance(forests: &[(u32, usize, &ForestModel)], labels: &[String], grouping: Grouping) -> Result<ImportanceReport> {
    let mut terms = Vec::new();
    for &(term, n_records, forest) in forests {
        let total: f64 = forest.split_gain.iter().sum();
        if forest.trees.is_empty() || total <= 0.0 {
            return Err(Error::Unsupported(format!("forest for term {term} has no splits to attribute")));
        }
        let mut shares: BTreeMap<String, Share> = BTreeMap::new();
        for (c, g) in forest.split_gain.iter().enumerate() {
            let s = shares.entry(labels[c].clone()).or_default();
            s.total += g / total;
            s.one_way += g / total;
        }
        terms.push(TermShares {
            term,
            n_records,
            n_rows: n_records,
            shares,
        });
    }
    Ok(ImportanceReport {
        method: "gini".into(),
        model: "rf".into(),
        grouping,
        aggregate: weighted_aggregate(&terms)?,
        terms,
    })
}

impl ImportanceReport {
    /// Aggregate shares ordered from most to least important.
    pub fn ranked(&self) -> Vec<(&str, &Share)> {
        let mut v: Vec<(&str, &Share)> = self.aggregate.iter().map(|(f, s)| (f.as_str(), s)).collect();
        v.sort_by(|a, b| b.1.total.total_cmp(&a.1.total).then(a.0.cmp(b.0)));
        v
    }

    /// CSV with columns feature, share, one_way, two_way, scope.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "share", "one_way", "two_way", "scope"])?;
        let mut emit = |f: &str, s: &Share, scope: &str| {
            w.write_record([
                f.to_string(),
                s.total.to_string(),
                s.one_way.to_string(),
                s.two_way.to_string(),
                scope.to_string(),
            ])
        };
        for (f, s) in self.ranked() {
            emit(f, s, "aggregate")?;
        }
        for t in &self.terms {
            for (f, s) in &t.shares {
                emit(f, s, &format!("term_{}", t.term))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Whether MADImp is defined for a model family name.
pub fn supports_madimp(model: &str) -> bool {
    matches!(model, "fm" | "fm-ids-only" | "sgd" | "pmlr")
}

/// Block labels for PMLR including its two bias pseudo-columns.
pub fn pmlr_labels(state: &EncoderState, grouping: Grouping) -> Vec<String> {
    debug_assert_eq!(state.policy, Policy::Dense);
    let mut labels = group_labels(state, grouping);
    labels.push("sid".into());
    labels.push("cid".into());
    labels
}
