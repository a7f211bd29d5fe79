//! Sequential per-term evaluation: for every term after the first, fit on
//! graded records from strictly earlier terms and predict the term.

pub mod metrics;
pub mod report;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{clip_prediction, compute_metrics, Metrics};
pub use report::{
    hybrid_fm_rf, segment_report, write_predictions, write_routing, EvaluationReport, HeatCell, Prediction,
    SegmentMetrics, SkippedTerm, TermRun, SEGMENTS,
};

use crate::encoding::{fit_encoder, DesignMatrix, EncoderState, FeaturePolicy, FeatureSpec, Policy};
use crate::error::{Error, Result};
use crate::importance::{
    center_fm, decompose_fm, decompose_linear, decompose_pmlr, group_labels, madimp_select, madimp_term, pmlr_labels,
    weighted_aggregate, Grouping, SelectionRule, TermShares,
};
use crate::models::baseline::{gm_fit, mom_fit, ur_predict};
use crate::models::fm::{fm_fit, FmConfig, FmModel};
use crate::models::forest::{rf_fit, ForestConfig, ForestModel};
use crate::models::knn::knn_fit;
use crate::models::linear::{sgd_fit, LinearModel, SgdConfig};
use crate::models::pmlr::{pmlr_fit, PmlrConfig, PmlrModel};
use crate::models::svd::{svd_fit, SvdConfig};
use crate::models::ModelFamily;
use crate::transcript::{Dataset, SeenSets, TermId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 20 }
    }
}

/// Hyperparameters of every family; constant across terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub fm: FmConfig,
    pub svd: SvdConfig,
    pub knn: KnnConfig,
    pub sgd: SgdConfig,
    pub rf: ForestConfig,
    pub pmlr: PmlrConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Term t uses importance from the all-feature runs of terms up to t,
    /// each of which saw only its own training history.
    #[default]
    Prequential,
    /// One selection from importance aggregated over every term. Later
    /// terms' training data then influences earlier predictions.
    Global,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub mode: SelectionMode,
    pub rule: SelectionRule,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub seed: u64,
    pub models: ModelSettings,
    /// MADImp-based feature selection for `fm`.
    pub selection: Option<SelectionConfig>,
    pub exclude_summers: bool,
    /// Only predict these term indices.
    pub terms: Option<Vec<u32>>,
    /// Retain fitted models (needed for importance).
    pub keep_models: bool,
}

/// A fitted model together with the encoder it was trained under.
#[derive(Debug, Clone)]
pub enum Fitted {
    Fm { model: FmModel, state: EncoderState },
    Sgd { model: LinearModel, state: EncoderState },
    Rf { model: ForestModel, state: EncoderState },
    Pmlr { model: PmlrModel, state: EncoderState },
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub family: ModelFamily,
    pub runs: Vec<TermRun>,
    pub report: EvaluationReport,
    /// (term, model), present when `keep_models` was set.
    pub fitted: Vec<(u32, Fitted)>,
    /// Feature blocks used per term when selection was active.
    pub selections: Vec<(u32, BTreeSet<String>)>,
}

/// Seed for one term's fit, mixed from the run seed and the term index.
pub fn term_seed(seed: u64, term: u32) -> u64 {
    let mut z = seed ^ (u64::from(term) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Terms that get predicted: every term after the first, optionally filtered.
pub fn evaluation_terms(dataset: &Dataset, opts: &EvalOptions) -> Vec<TermId> {
    dataset
        .terms()
        .into_iter()
        .skip(1)
        .filter(|t| opts.terms.as_ref().is_none_or(|keep| keep.contains(&t.index)))
        .collect()
}

enum Outcome {
    Run(TermRun, Option<Fitted>, Vec<String>),
    Skipped(SkippedTerm),
}

fn make_predictions(dataset: &Dataset, test: &[usize], seen: &SeenSets, term: u32, raw: Vec<f64>) -> Result<Vec<Prediction>> {
    test.iter()
        .zip(raw)
        .map(|(&i, raw)| {
            let r = &dataset.records[i];
            let clipped = clip_prediction(raw).map_err(|_| {
                Error::NonFinite(format!("term {term}: non-finite prediction for {}/{}", r.student_id, r.course_id))
            })?;
            Ok(Prediction {
                record: i,
                sid: r.student_id.clone(),
                cid: r.course_id.clone(),
                term,
                truth: r.grade.map(|g| g.value()),
                raw,
                clipped,
                cs_class: seen.classify(r),
                transfer: r.student.transfer,
                cohort: dataset.derived[i].cohort,
            })
        })
        .collect()
}

struct Encoded {
    state: EncoderState,
    train: DesignMatrix,
    test: DesignMatrix,
}

fn encode_split(dataset: &Dataset, train: &[usize], test: &[usize], specs: &[FeatureSpec], policy: Policy, keep: Option<&BTreeSet<String>>) -> Result<Encoded> {
    let mut state = fit_encoder(&dataset.rows(train), specs, policy)?;
    if let Some(keep) = keep {
        let present: BTreeSet<String> = state
            .feature_names()
            .into_iter()
            .filter(|f| keep.contains(*f))
            .map(str::to_string)
            .collect();
        state = state.select_features(&present)?;
    }
    Ok(Encoded {
        train: state.encode(&dataset.rows(train))?,
        test: state.encode(&dataset.rows(test))?,
        state,
    })
}

fn run_term(
    dataset: &Dataset,
    family: ModelFamily,
    term: TermId,
    policy: &FeaturePolicy,
    opts: &EvalOptions,
    keep: Option<&BTreeSet<String>>,
) -> Result<Outcome> {
    let train = dataset.training_rows(term.index);
    let test = dataset.term_rows(term.index);
    if train.is_empty() {
        return Ok(Outcome::Skipped(SkippedTerm {
            term: term.index,
            reason: "no graded records in earlier terms".into(),
        }));
    }
    let seed = term_seed(opts.seed, term.index);
    let seen = SeenSets::from_records(train.iter().map(|&i| &dataset.records[i]));
    let grade = |i: usize| dataset.records[i].grade.expect("training rows are graded").value();
    let triples: Vec<(&str, &str, f64)> = train
        .iter()
        .map(|&i| (dataset.records[i].student_id.as_str(), dataset.records[i].course_id.as_str(), grade(i)))
        .collect();
    let mean = || gm_fit(&train.iter().map(|&i| grade(i)).collect::<Vec<_>>()).map(|m| m.mean);
    let s = &opts.models;
    let mut fitted = None;
    let mut warnings = Vec::new();
    let dense = |name: &str| encode_split(dataset, &train, &test, &policy.for_model(name), Policy::Dense, None);

    let raw: Vec<f64> = match family {
        ModelFamily::Ur => ur_predict(test.len(), seed),
        ModelFamily::Gm => vec![mean()?; test.len()],
        ModelFamily::Mom => {
            let m = mom_fit(&triples)?;
            test.iter()
                .map(|&i| m.predict(&dataset.records[i].student_id, &dataset.records[i].course_id))
                .collect()
        }
        ModelFamily::Svd | ModelFamily::SvdKnn => {
            let m = svd_fit(&triples, &s.svd, seed)?;
            let fallback = mean()?;
            let mut history: HashMap<&str, Vec<String>> = HashMap::new();
            if family == ModelFamily::SvdKnn {
                for (sid, cid, _) in &triples {
                    let h = history.entry(sid).or_default();
                    if !h.iter().any(|c| c == cid) {
                        h.push(cid.to_string());
                    }
                }
            }
            let mut absent = 0usize;
            let raw = test
                .iter()
                .map(|&i| {
                    let r = &dataset.records[i];
                    let p = if family == ModelFamily::Svd {
                        m.predict(&r.student_id, &r.course_id)
                    } else {
                        let h = history.get(r.student_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                        m.svdknn_predict(&r.student_id, &r.course_id, h)
                    };
                    p.unwrap_or_else(|| {
                        absent += 1;
                        fallback
                    })
                })
                .collect();
            if absent > 0 {
                warnings.push(format!("term {}: {absent} cold-start dyads fell back to the global mean", term.index));
            }
            raw
        }
        ModelFamily::Fm | ModelFamily::FmIdsOnly => {
            let specs = if family == ModelFamily::Fm {
                policy.for_model("fm")
            } else {
                policy.restricted(&["sid", "cid"])
            };
            let e = encode_split(dataset, &train, &test, &specs, Policy::Factorization, keep)?;
            warnings.extend(e.state.warnings.iter().map(|w| format!("term {}: {w}", term.index)));
            let fit = fm_fit(&e.train, &s.fm, seed, Some(&e.test))?;
            if opts.keep_models {
                fitted = Some(Fitted::Fm { model: fit.model, state: e.state });
            }
            fit.test_predictions.expect("test matrix supplied")
        }
        ModelFamily::Knn => {
            let e = dense("knn")?;
            knn_fit(&e.train, s.knn.k)?.predict(&e.test)?
        }
        ModelFamily::Sgd => {
            let e = dense("sgd")?;
            let m = sgd_fit(&e.train, &s.sgd, seed)?;
            let raw = m.predict(&e.test);
            if opts.keep_models {
                fitted = Some(Fitted::Sgd { model: m, state: e.state });
            }
            raw
        }
        ModelFamily::Rf => {
            let e = dense("rf")?;
            let m = rf_fit(&e.train, &s.rf, seed)?;
            let raw = m.predict(&e.test);
            if opts.keep_models {
                fitted = Some(Fitted::Rf { model: m, state: e.state });
            }
            raw
        }
        ModelFamily::Pmlr => {
            let e = dense("pmlr")?;
            let m = pmlr_fit(&e.train, &s.pmlr, seed)?;
            let raw = m.predict(&e.test);
            if opts.keep_models {
                fitted = Some(Fitted::Pmlr { model: m, state: e.state });
            }
            raw
        }
        ModelFamily::Hybrid => {
            return Err(Error::Unsupported("hybrid is composed from fm and rf runs".into()));
        }
    };
    let predictions = make_predictions(dataset, &test, &seen, term.index, raw)?;
    Ok(Outcome::Run(
        TermRun {
            term,
            model: family,
            n_train: train.len(),
            predictions,
            sources: Vec::new(),
        },
        fitted,
        warnings,
    ))
}

fn assemble(family: ModelFamily, outcomes: Vec<Outcome>, opts: &EvalOptions) -> Result<Evaluation> {
    let mut runs = Vec::new();
    let mut fitted = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Run(run, f, w) => {
                if let Some(f) = f {
                    fitted.push((run.term.index, f));
                }
                warnings.extend(w);
                runs.push(run);
            }
            Outcome::Skipped(s) => {
                warnings.push(format!("term {} skipped: {}", s.term, s.reason));
                skipped.push(s);
            }
        }
    }
    let mut report = segment_report(family.name(), &runs, opts.exclude_summers)?;
    report.skipped = skipped;
    report.warnings = warnings;
    Ok(Evaluation {
        family,
        runs,
        report,
        fitted,
        selections: Vec::new(),
    })
}

fn run_all(
    dataset: &Dataset,
    family: ModelFamily,
    terms: &[TermId],
    policy: &FeaturePolicy,
    opts: &EvalOptions,
    keep: impl Fn(u32) -> Option<BTreeSet<String>> + Sync,
) -> Result<Vec<Outcome>> {
    terms
        .par_iter()
        .map(|t| run_term(dataset, family, *t, policy, opts, keep(t.index).as_ref()))
        .collect()
}

/// Evaluate one family over every predicted term.
pub fn sequential_evaluate(dataset: &Dataset, family: ModelFamily, policy: &FeaturePolicy, opts: &EvalOptions) -> Result<Evaluation> {
    match family {
        ModelFamily::Hybrid => {
            let fm = sequential_evaluate(dataset, ModelFamily::Fm, policy, opts)?;
            let rf = sequential_evaluate(dataset, ModelFamily::Rf, policy, opts)?;
            hybrid_evaluation(&fm, &rf, opts)
        }
        ModelFamily::Fm if opts.selection.is_some() => evaluate_fm_selected(dataset, policy, opts),
        _ => {
            let terms = evaluation_terms(dataset, opts);
            let outcomes = run_all(dataset, family, &terms, policy, opts, |_| None)?;
            assemble(family, outcomes, opts)
        }
    }
}

/// Compose a hybrid evaluation from finished FM and RF evaluations.
pub fn hybrid_evaluation(fm: &Evaluation, rf: &Evaluation, opts: &EvalOptions) -> Result<Evaluation> {
    let runs = hybrid_fm_rf(&fm.runs, &rf.runs)?;
    let mut report = segment_report(ModelFamily::Hybrid.name(), &runs, opts.exclude_summers)?;
    report.skipped = fm.report.skipped.clone();
    report.warnings = fm.report.warnings.iter().chain(&rf.report.warnings).cloned().collect();
    Ok(Evaluation {
        family: ModelFamily::Hybrid,
        runs,
        report,
        fitted: Vec::new(),
        selections: Vec::new(),
    })
}

/// MADImp shares of a fitted additive model over its own training rows.
pub fn term_importance(dataset: &Dataset, term: u32, fitted: &Fitted, grouping: Grouping, n_records: usize) -> Result<TermShares> {
    let rows = dataset.rows(&dataset.training_rows(term));
    match fitted {
        Fitted::Fm { model, state } => {
            let m = state.encode(&rows)?;
            let labels = group_labels(state, grouping);
            let model = center_fm(model, state, &m);
            let iter = (0..m.n_rows()).map(|i| {
                let (idx, val) = m.row(i);
                decompose_fm(&model, idx, val)
            });
            Ok(madimp_term(iter, &labels, term, n_records))
        }
        Fitted::Sgd { model, state } => {
            let m = state.encode(&rows)?;
            let labels = group_labels(state, grouping);
            let iter = (0..m.n_rows()).map(|i| {
                let (idx, val) = m.row(i);
                decompose_linear(model, idx, val)
            });
            Ok(madimp_term(iter, &labels, term, n_records))
        }
        Fitted::Pmlr { model, state } => {
            let m = state.encode(&rows)?;
            let labels = pmlr_labels(state, grouping);
            let iter = (0..m.n_rows()).map(|i| {
                let (idx, val) = m.row(i);
                decompose_pmlr(model, &m.meta[i].student_id, &m.meta[i].course_id, idx, val)
            });
            Ok(madimp_term(iter, &labels, term, n_records))
        }
        Fitted::Rf { .. } => Err(Error::Unsupported("forests have no additive decomposition; use Gini importance".into())),
    }
}

fn evaluate_fm_selected(dataset: &Dataset, policy: &FeaturePolicy, opts: &EvalOptions) -> Result<Evaluation> {
    evaluate_fm_selection(dataset, policy, opts).map(|(_, selected)| selected)
}

/// The all-feature FM evaluation whose importance drives selection, and the
/// evaluation retrained on the selected features.
pub fn evaluate_fm_selection(dataset: &Dataset, policy: &FeaturePolicy, opts: &EvalOptions) -> Result<(Evaluation, Evaluation)> {
    let selection = opts.selection.clone().unwrap_or_default();
    let terms = evaluation_terms(dataset, opts);
    let full_opts = EvalOptions {
        keep_models: true,
        selection: None,
        ..opts.clone()
    };
    let full = assemble(
        ModelFamily::Fm,
        run_all(dataset, ModelFamily::Fm, &terms, policy, &full_opts, |_| None)?,
        &full_opts,
    )?;
    let sizes: HashMap<u32, usize> = full.runs.iter().map(|r| (r.term.index, r.predictions.len())).collect();
    let shares: Vec<TermShares> = full
        .fitted
        .par_iter()
        .map(|(t, f)| term_importance(dataset, *t, f, Grouping::Block, sizes[t]))
        .collect::<Result<_>>()?;

    let mut selections: Vec<(u32, BTreeSet<String>)> = Vec::new();
    match selection.mode {
        SelectionMode::Global => {
            let keep = madimp_select(&weighted_aggregate(&shares)?, selection.rule)?;
            selections.extend(terms.iter().map(|t| (t.index, keep.clone())));
        }
        SelectionMode::Prequential => {
            for t in &terms {
                let upto: Vec<TermShares> = shares.iter().filter(|s| s.term <= t.index).cloned().collect();
                if let Ok(agg) = weighted_aggregate(&upto) {
                    selections.push((t.index, madimp_select(&agg, selection.rule)?));
                }
            }
        }
    }
    let by_term: HashMap<u32, BTreeSet<String>> = selections.iter().cloned().collect();
    let outcomes = run_all(dataset, ModelFamily::Fm, &terms, policy, opts, |t| by_term.get(&t).cloned())?;
    let mut eval = assemble(ModelFamily::Fm, outcomes, opts)?;
    eval.selections = selections;
    Ok((full, eval))
}
