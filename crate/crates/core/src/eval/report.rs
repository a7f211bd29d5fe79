//! Per-term runs, segment reports, the FM/RF hybrid and file emitters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use crate::error::{Error, Result};
use crate::models::ModelFamily;
use crate::transcript::{ColdStartClass, TermId};

/// One predicted dyad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Position of the record in the dataset.
    pub record: usize,
    pub sid: String,
    pub cid: String,
    pub term: u32,
    /// Observed grade; absent for prediction-only rows.
    pub truth: Option<f64>,
    pub raw: f64,
    pub clipped: f64,
    pub cs_class: ColdStartClass,
    pub transfer: bool,
    pub cohort: u32,
}

/// Predictions of one model for one term, fit on strictly earlier terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TermRun {
    pub term: TermId,
    pub model: ModelFamily,
    pub n_train: usize,
    pub predictions: Vec<Prediction>,
    /// For hybrid runs, the family that produced each prediction.
    pub sources: Vec<ModelFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub segment: String,
    pub count: usize,
    /// Absent when the segment has no graded predictions.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub cohort: u32,
    pub term: u32,
    pub rmse: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTerm {
    pub term: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub terms: Vec<u32>,
    pub skipped: Vec<SkippedTerm>,
    pub warnings: Vec<String>,
    pub segments: Vec<SegmentMetrics>,
    pub exclude_summers: bool,
    /// Native-student RMSE by cohort and term.
    pub heatmap: Vec<HeatCell>,
}

pub const SEGMENTS: [&str; 8] = ["overall", "NCS", "CS", "CSS", "CSC", "CSB", "native", "transfer"];

fn in_segment(segment: &str, p: &Prediction) -> bool {
    match segment {
        "overall" => true,
        "CS" => p.cs_class.is_cold(),
        "native" => !p.transfer,
        "transfer" => p.transfer,
        class => p.cs_class.as_str() == class,
    }
}

impl EvaluationReport {
    pub fn segment(&self, name: &str) -> Option<&SegmentMetrics> {
        self.segments.iter().find(|s| s.segment == name)
    }

    /// RMSE of a segment, if it has graded predictions.
    pub fn rmse(&self, name: &str) -> Option<f64> {
        self.segment(name)?.metrics.map(|m| m.rmse)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with columns segment, count, rmse, mae, mae_std.
    pub fn write_segments_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["segment", "count", "rmse", "mae", "mae_std"])?;
        for s in &self.segments {
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                s.segment.clone(),
                s.count.to_string(),
                f(s.metrics.map(|m| m.rmse)),
                f(s.metrics.map(|m| m.mae)),
                f(s.metrics.map(|m| m.mae_std)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with columns cohort, termnum, rmse, count.
    pub fn write_heatmap_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cohort", "termnum", "rmse", "count"])?;
        for c in &self.heatmap {
            w.write_record([c.cohort.to_string(), c.term.to_string(), c.rmse.to_string(), c.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aggregate all runs of one model into a segment report.
pub fn segment_report(model: &str, runs: &[TermRun], exclude_summers: bool) -> Result<EvaluationReport> {
    let graded: Vec<&Prediction> = runs
        .iter()
        .flat_map(|r| &r.predictions)
        .filter(|p| p.truth.is_some())
        .collect();
    let mut segments = Vec::with_capacity(SEGMENTS.len());
    for name in SEGMENTS {
        let pairs: Vec<(f64, f64)> = graded
            .iter()
            .filter(|p| in_segment(name, p))
            .map(|p| (p.truth.unwrap(), p.clipped))
            .collect();
        segments.push(SegmentMetrics {
            segment: name.to_string(),
            count: pairs.len(),
            metrics: if pairs.is_empty() { None } else { Some(compute_metrics(&pairs)?) },
        });
    }
    let summer: BTreeSet<u32> = runs.iter().filter(|r| r.term.is_summer()).map(|r| r.term.index).collect();
    let mut cells: BTreeMap<(u32, u32), Vec<(f64, f64)>> = BTreeMap::new();
    for p in &graded {
        if p.transfer || (exclude_summers && summer.contains(&p.term)) {
            continue;
        }
        cells.entry((p.cohort, p.term)).or_default().push((p.truth.unwrap(), p.clipped));
    }
    let heatmap = cells
        .into_iter()
        .map(|((cohort, term), pairs)| {
            Ok(HeatCell {
                cohort,
                term,
                rmse: compute_metrics(&pairs)?.rmse,
                count: pairs.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        model: model.to_string(),
        terms: runs.iter().map(|r| r.term.index).collect(),
        skipped: Vec::new(),
        warnings: Vec::new(),
        segments,
        exclude_summers,
        heatmap,
    })
}

/// Prediction dump with columns sid, cid, termnum, true, raw, clipped, cs_class, transfer, cohort.
pub fn write_predictions<W: Write>(writer: W, runs: &[TermRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sid", "cid", "termnum", "true", "raw", "clipped", "cs_class", "transfer", "cohort"])?;
    for p in runs.iter().flat_map(|r| &r.predictions) {
        w.write_record([
            p.sid.clone(),
            p.cid.clone(),
            p.term.to_string(),
            p.truth.map(|t| t.to_string()).unwrap_or_default(),
            p.raw.to_string(),
            p.clipped.to_string(),
            p.cs_class.as_str().to_string(),
            u8::from(p.transfer).to_string(),
            p.cohort.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Routing table of a hybrid run: sid, cid, termnum, cs_class, source.
pub fn write_routing<W: Write>(writer: W, runs: &[TermRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sid", "cid", "termnum", "cs_class", "source"])?;
    for r in runs {
        for (p, s) in r.predictions.iter().zip(&r.sources) {
            w.write_record([p.sid.as_str(), p.cid.as_str(), &p.term.to_string(), p.cs_class.as_str(), s.name()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Route each dyad to RF when the student has no history (CSS, CSB) and to FM otherwise.
pub fn hybrid_fm_rf(fm: &[TermRun], rf: &[TermRun]) -> Result<Vec<TermRun>> {
    let rf_by_term: HashMap<u32, &TermRun> = rf.iter().map(|r| (r.term.index, r)).collect();
    let fm_terms: BTreeSet<u32> = fm.iter().map(|r| r.term.index).collect();
    let mut problems: Vec<String> = rf
        .iter()
        .filter(|r| !fm_terms.contains(&r.term.index))
        .map(|r| format!("term {} missing from fm", r.term.index))
        .collect();
    let mut out = Vec::with_capacity(fm.len());
    for f in fm {
        let Some(r) = rf_by_term.get(&f.term.index) else {
            problems.push(format!("term {} missing from rf", f.term.index));
            continue;
        };
        let rf_preds: HashMap<usize, &Prediction> = r.predictions.iter().map(|p| (p.record, p)).collect();
        let fm_records: BTreeSet<usize> = f.predictions.iter().map(|p| p.record).collect();
        for p in &r.predictions {
            if !fm_records.contains(&p.record) {
                problems.push(format!("term {}: {}/{} missing from fm", p.term, p.sid, p.cid));
            }
        }
        let mut predictions = Vec::with_capacity(f.predictions.len());
        let mut sources = Vec::with_capacity(f.predictions.len());
        for p in &f.predictions {
            let Some(q) = rf_preds.get(&p.record) else {
                problems.push(format!("term {}: {}/{} missing from rf", p.term, p.sid, p.cid));
                continue;
            };
            if p.cs_class.student_unseen() {
                predictions.push((*q).clone());
                sources.push(ModelFamily::Rf);
            } else {
                predictions.push(p.clone());
                sources.push(ModelFamily::Fm);
            }
        }
        out.push(TermRun {
            term: f.term,
            model: ModelFamily::Hybrid,
            n_train: f.n_train,
            predictions,
            sources,
        });
    }
    if !problems.is_empty() {
        let shown: Vec<&str> = problems.iter().take(20).map(String::as_str).collect();
        let more = problems.len().saturating_sub(shown.len());
        let suffix = if more > 0 { format!(" (and {more} more)") } else { String::new() };
        return Err(Error::CoverageMismatch(format!("{}{}", shown.join("; "), suffix)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::Season;

    fn pred(record: usize, class: ColdStartClass, truth: f64, clipped: f64) -> Prediction {
        Prediction {
            record,
            sid: format!("s{record}"),
            cid: "c".into(),
            term: 1,
            truth: Some(truth),
            raw: clipped,
            clipped,
            cs_class: class,
            transfer: false,
            cohort: 0,
        }
    }

    fn run(model: ModelFamily, preds: Vec<Prediction>) -> TermRun {
        TermRun {
            term: TermId::from_index(1, Season::Fall, 2009),
            model,
            n_train: 10,
            predictions: preds,
            sources: Vec::new(),
        }
    }

    #[test]
    fn segment_counts_partition_overall() {
        use ColdStartClass::*;
        let preds = vec![
            pred(0, Ncs, 3.0, 2.0),
            pred(1, Css, 3.0, 3.0),
            pred(2, Csc, 2.0, 2.5),
            pred(3, Csb, 1.0, 2.0),
            pred(4, Ncs, 4.0, 4.0),
        ];
        let r = segment_report("gm", &[run(ModelFamily::Gm, preds)], false).unwrap();
        let count = |s: &str| r.segment(s).unwrap().count;
        assert_eq!(count("NCS") + count("CSS") + count("CSC") + count("CSB"), count("overall"));
        assert_eq!(count("CS"), 3);
        assert_eq!(count("transfer"), 0);
        assert!(r.segment("transfer").unwrap().metrics.is_none());
        assert_eq!(r.heatmap.len(), 1);
        assert_eq!(r.heatmap[0].rmse, r.rmse("overall").unwrap());
    }

    #[test]
    fn transfer_only_runs_have_empty_native_segment() {
        let mut p = pred(0, ColdStartClass::Ncs, 3.0, 2.0);
        p.transfer = true;
        let r = segment_report("gm", &[run(ModelFamily::Gm, vec![p])], false).unwrap();
        assert_eq!(r.segment("native").unwrap().count, 0);
        assert!(r.segment("native").unwrap().metrics.is_none());
        assert!(r.heatmap.is_empty());
    }

    #[test]
    fn hybrid_routes_by_student_history() {
        use ColdStartClass::*;
        let classes = [Ncs, Css, Csc, Csb];
        let fm = run(ModelFamily::Fm, classes.iter().enumerate().map(|(i, c)| pred(i, *c, 3.0, 1.0)).collect());
        let rf = run(ModelFamily::Rf, classes.iter().enumerate().map(|(i, c)| pred(i, *c, 3.0, 2.0)).collect());
        let h = hybrid_fm_rf(&[fm], &[rf]).unwrap();
        let got: Vec<f64> = h[0].predictions.iter().map(|p| p.clipped).collect();
        assert_eq!(got, vec![1.0, 2.0, 1.0, 2.0]);
        assert_eq!(h[0].sources, vec![ModelFamily::Fm, ModelFamily::Rf, ModelFamily::Fm, ModelFamily::Rf]);
    }

    #[test]
    fn hybrid_rejects_mismatched_coverage() {
        let fm = run(ModelFamily::Fm, vec![pred(0, ColdStartClass::Ncs, 3.0, 1.0), pred(1, ColdStartClass::Ncs, 3.0, 1.0)]);
        let rf = run(ModelFamily::Rf, vec![pred(0, ColdStartClass::Ncs, 3.0, 2.0)]);
        match hybrid_fm_rf(&[fm], &[rf]) {
            Err(Error::CoverageMismatch(msg)) => assert!(msg.contains("s1/c")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prediction_dump_layout() {
        let mut p = pred(0, ColdStartClass::Css, 3.33, 2.5);
        p.raw = 2.5;
        let mut unlabeled = pred(1, ColdStartClass::Ncs, 0.0, 4.0);
        unlabeled.truth = None;
        unlabeled.raw = 4.2;
        let mut buf = Vec::new();
        write_predictions(&mut buf, &[run(ModelFamily::Gm, vec![p, unlabeled])]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sid,cid,termnum,true,raw,clipped,cs_class,transfer,cohort\ns0,c,1,3.33,2.5,2.5,CSS,0,0\ns1,c,1,,4.2,4,NCS,0,0\n"
        );
    }
}
