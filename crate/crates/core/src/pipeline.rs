//! Run configuration and the file-emitting drivers behind the CLI.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::FeaturePolicy;
use crate::error::{Error, Result};
use crate::eval::{
    hybrid_evaluation, sequential_evaluate, term_importance, write_predictions, write_routing, EvalOptions,
    Evaluation, EvaluationReport, Fitted, ModelSettings, SelectionConfig,
};
use crate::importance::{gini_importance, group_labels, madimp_aggregate, Grouping, ImportanceReport};
use crate::ingest::{parse_transcript_csv, write_transcript_csv, CsvSchema};
use crate::models::ModelFamily;
use crate::synth::{generate_synthetic, SynthConfig, SynthDataset};
use crate::transcript::{ColdStartClass, Dataset, GradeScale};

/// Everything needed to reproduce an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Transcript CSV; mutually exclusive with `synth`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub schema: CsvSchema,
    #[serde(default = "default_models")]
    pub models: Vec<ModelFamily>,
    #[serde(default)]
    pub hyperparameters: ModelSettings,
    #[serde(default)]
    pub feature_policy: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub exclude_summers: bool,
    /// MADImp feature selection for `fm`; off when absent.
    #[serde(default)]
    pub feature_selection: Option<SelectionConfig>,
    #[serde(default)]
    pub terms: Option<Vec<u32>>,
}

fn default_models() -> Vec<ModelFamily> {
    ModelFamily::ALL.to_vec()
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input, &self.synth) {
            (Some(_), Some(_)) => return Err(Error::InvalidConfig("give either `input` or `synth`, not both".into())),
            (None, None) => return Err(Error::InvalidConfig("one of `input` or `synth` is required".into())),
            (Some(p), None) if !p.exists() => {
                return Err(Error::InvalidConfig(format!("input `{}` does not exist", p.display())))
            }
            (None, Some(s)) => s.validate()?,
            _ => {}
        }
        if let Some(p) = &self.feature_policy {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!("feature policy `{}` does not exist", p.display())));
            }
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("no models requested".into()));
        }
        Ok(())
    }

    /// Requested families in canonical order, with hybrid's dependencies added.
    pub fn resolved_models(&self) -> Vec<ModelFamily> {
        let mut set: BTreeSet<ModelFamily> = self.models.iter().copied().collect();
        if set.contains(&ModelFamily::Hybrid) {
            set.insert(ModelFamily::Fm);
            set.insert(ModelFamily::Rf);
        }
        ModelFamily::ALL.iter().copied().filter(|m| set.contains(m)).collect()
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            seed: self.seed,
            models: self.hyperparameters.clone(),
            selection: self.feature_selection.clone(),
            exclude_summers: self.exclude_summers,
            terms: self.terms.clone(),
            keep_models: false,
        }
    }

    pub fn load_dataset(&self) -> Result<(Dataset, Vec<String>)> {
        self.validate()?;
        if let Some(path) = &self.input {
            let parsed = parse_transcript_csv(path, &self.schema)?;
            let mut notes = Vec::new();
            for (grade, n) in &parsed.dropped_grades {
                notes.push(format!("dropped {n} rows with non-numeric grade `{grade}`"));
            }
            for (line, msg) in &parsed.malformed {
                notes.push(format!("line {line}: {msg}"));
            }
            Ok((Dataset::new(parsed.records), notes))
        } else {
            let synth = generate_synthetic(self.synth.as_ref().expect("validated"))?;
            Ok((Dataset::new(synth.records), Vec::new()))
        }
    }

    pub fn load_policy(&self, dataset: &Dataset) -> Result<FeaturePolicy> {
        match &self.feature_policy {
            Some(p) => FeaturePolicy::load(p),
            None => Ok(FeaturePolicy::default_for(dataset)),
        }
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

/// Write every artifact of one evaluation under `dir/<model>/`.
pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<()> {
    let base = dir.join(eval.family.name());
    write_predictions(create(&base.join("predictions.csv"))?, &eval.runs)?;
    if eval.family == ModelFamily::Hybrid {
        write_routing(create(&base.join("routing.csv"))?, &eval.runs)?;
    }
    if !eval.selections.is_empty() {
        let mut w = create(&base.join("selected_features.csv"))?;
        writeln!(w, "termnum,feature")?;
        for (t, feats) in &eval.selections {
            for f in feats {
                writeln!(w, "{t},{f}")?;
            }
        }
        w.flush()?;
    }
    write_report_files(&base, &eval.report)
}

/// report.json, segments.csv and heatmap.csv for one report.
pub fn write_report_files(dir: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = create(&dir.join("report.json"))?;
    w.write_all(report.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    report.write_segments_csv(create(&dir.join("segments.csv"))?)?;
    report.write_heatmap_csv(create(&dir.join("heatmap.csv"))?)?;
    Ok(())
}

/// One row per (model, segment) across all reports.
pub fn write_summary<W: Write>(writer: W, reports: &[&EvaluationReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "segment", "count", "rmse", "mae", "mae_std"])?;
    for r in reports {
        for s in &r.segments {
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.model.clone(),
                s.segment.clone(),
                s.count.to_string(),
                f(s.metrics.map(|m| m.rmse)),
                f(s.metrics.map(|m| m.mae)),
                f(s.metrics.map(|m| m.mae_std)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Evaluate every requested model and write all reports under `config.output`.
pub fn run_evaluate(config: &RunConfig) -> Result<Vec<Evaluation>> {
    let (dataset, notes) = config.load_dataset()?;
    let policy = config.load_policy(&dataset)?;
    let opts = config.eval_options();
    let out = &config.output;
    fs::create_dir_all(out)?;
    let mut evals: Vec<Evaluation> = Vec::new();
    for family in config.resolved_models() {
        let eval = if family == ModelFamily::Hybrid {
            let fm = evals.iter().find(|e| e.family == ModelFamily::Fm).expect("fm resolved before hybrid");
            let rf = evals.iter().find(|e| e.family == ModelFamily::Rf).expect("rf resolved before hybrid");
            hybrid_evaluation(fm, rf, &opts)?
        } else {
            sequential_evaluate(&dataset, family, &policy, &opts)?
        };
        let mut eval = eval;
        eval.report.warnings.splice(0..0, notes.iter().cloned());
        write_evaluation(out, &eval)?;
        evals.push(eval);
    }
    let reports: Vec<&EvaluationReport> = evals.iter().map(|e| &e.report).collect();
    write_summary(create(&out.join("summary.csv"))?, &reports)?;
    let mut w = create(&out.join("config.json"))?;
    w.write_all(serde_json::to_string_pretty(config)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(evals)
}

/// Importance report for one family from freshly fitted per-term models.
pub fn importance_for(dataset: &Dataset, family: ModelFamily, policy: &FeaturePolicy, opts: &EvalOptions, grouping: Grouping) -> Result<ImportanceReport> {
    let opts = EvalOptions {
        keep_models: true,
        selection: None,
        ..opts.clone()
    };
    match family {
        ModelFamily::Fm | ModelFamily::FmIdsOnly | ModelFamily::Sgd | ModelFamily::Pmlr | ModelFamily::Rf => {}
        other => {
            return Err(Error::Unsupported(format!(
                "`{other}` has no additive decomposition or split gains; importance is available for fm, fm-ids-only, sgd, pmlr and rf"
            )))
        }
    }
    let eval = sequential_evaluate(dataset, family, policy, &opts)?;
    let sizes = |t: u32| eval.runs.iter().find(|r| r.term.index == t).map_or(0, |r| r.predictions.len());
    if family == ModelFamily::Rf {
        let forests: Vec<(u32, usize, &crate::models::forest::ForestModel, Vec<String>)> = eval
            .fitted
            .iter()
            .filter_map(|(t, f)| match f {
                Fitted::Rf { model, state } => Some((*t, sizes(*t), model, group_labels(state, grouping))),
                _ => None,
            })
            .collect();
        // Labels differ per term; attribute each forest under its own encoder.
        let mut terms = Vec::new();
        for (t, n, m, labels) in &forests {
            terms.extend(gini_importance(&[(*t, *n, *m)], labels, grouping)?.terms);
        }
        return Ok(ImportanceReport {
            method: "gini".into(),
            model: "rf".into(),
            grouping,
            aggregate: crate::importance::weighted_aggregate(&terms)?,
            terms,
        });
    }
    let terms = eval
        .fitted
        .iter()
        .map(|(t, f)| term_importance(dataset, *t, f, grouping, sizes(*t)))
        .collect::<Result<Vec<_>>>()?;
    madimp_aggregate(family.name(), grouping, terms)
}

/// Write `<model>.csv`, `<model>.json` and `<model>_per_term.csv` under `dir`.
pub fn write_importance(dir: &Path, report: &ImportanceReport) -> Result<()> {
    report.write_csv(create(&dir.join(format!("{}.csv", report.model)))?)?;
    let mut w = create(&dir.join(format!("{}.json", report.model)))?;
    w.write_all(report.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&dir.join(format!("{}_per_term.csv", report.model)))?);
    w.write_record(["termnum", "feature", "share", "one_way", "two_way"])?;
    // Every feature on every term, zero where a term's model never used it.
    let features: BTreeSet<&String> = report
        .aggregate
        .keys()
        .chain(report.terms.iter().flat_map(|t| t.shares.keys()))
        .collect();
    for t in &report.terms {
        for f in &features {
            let s = t.shares.get(*f).copied().unwrap_or_default();
            w.write_record([t.term.to_string(), f.to_string(), s.total.to_string(), s.one_way.to_string(), s.two_way.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run_importance(config: &RunConfig, families: &[ModelFamily], grouping: Grouping) -> Result<Vec<ImportanceReport>> {
    for f in families {
        if matches!(f, ModelFamily::Knn | ModelFamily::Ur | ModelFamily::Gm | ModelFamily::Mom | ModelFamily::Svd | ModelFamily::SvdKnn | ModelFamily::Hybrid) {
            return Err(Error::Unsupported(format!("importance is not defined for `{f}`")));
        }
    }
    let (dataset, _) = config.load_dataset()?;
    let policy = config.load_policy(&dataset)?;
    let opts = config.eval_options();
    let dir = config.output.join("importance");
    let mut out = Vec::new();
    for &f in families {
        let report = importance_for(&dataset, f, &policy, &opts, grouping)?;
        write_importance(&dir, &report)?;
        out.push(report);
    }
    Ok(out)
}

/// Per-term cold-start counts: term, termnum, dyads, NCS, CS, pct_cs, CSS, CSC, CSB.
pub fn write_cold_start_summary<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["term", "termnum", "dyads", "NCS", "CS", "pct_cs", "CSS", "CSC", "CSB"])?;
    for (term, counts) in dataset.cold_start_summary() {
        let total: usize = counts.iter().sum();
        let at = |c: ColdStartClass| counts[ColdStartClass::ALL.iter().position(|x| *x == c).unwrap()];
        let cs = total - at(ColdStartClass::Ncs);
        let pct = if total > 0 { 100.0 * cs as f64 / total as f64 } else { 0.0 };
        w.write_record([
            term.to_string(),
            term.index.to_string(),
            total.to_string(),
            at(ColdStartClass::Ncs).to_string(),
            cs.to_string(),
            format!("{pct:.2}"),
            at(ColdStartClass::Css).to_string(),
            at(ColdStartClass::Csc).to_string(),
            at(ColdStartClass::Csb).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Generate a synthetic transcript and write transcripts.csv, truth.json and summary.csv.
pub fn run_synth(config: &SynthConfig, out: &Path) -> Result<SynthDataset> {
    let data = generate_synthetic(config)?;
    fs::create_dir_all(out)?;
    write_transcript_csv(out.join("transcripts.csv"), &data.records, &GradeScale::default())?;
    let mut w = create(&out.join("truth.json"))?;
    w.write_all(serde_json::to_string_pretty(&data.truth)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    let dataset = Dataset::new(data.records.clone());
    write_cold_start_summary(create(&out.join("summary.csv"))?, &dataset)?;
    Ok(data)
}

/// Re-render segments.csv and heatmap.csv from a report.json.
pub fn rerender_report(report_json: &Path, out_dir: &Path) -> Result<EvaluationReport> {
    let report: EvaluationReport = serde_json::from_str(&fs::read_to_string(report_json)?)?;
    fs::create_dir_all(out_dir)?;
    report.write_segments_csv(create(&out_dir.join("segments.csv"))?)?;
    report.write_heatmap_csv(create(&out_dir.join("heatmap.csv"))?)?;
    Ok(report)
}
