//! Transcript CSV reading and writing.
//!
//! One row per dyad. Required columns: `sid`, `cid`, `termnum`, `grade`
//! (`grdpts` is accepted as an alias). Grades may be letters or numeric
//! points; an empty grade marks a prediction-only row. Rows whose grade is
//! present but unmappable (withdrawals, audits) are dropped and counted.
//! Columns outside the known schema are kept as extra attributes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{GradePoints, GradeScale, Season, TermId, TranscriptRecord};

/// Column order written by [`write_transcript_csv`].
pub const STANDARD_COLUMNS: [&str; 24] = [
    "sid",
    "cid",
    "iid",
    "institution_id",
    "termnum",
    "season",
    "year",
    "grade",
    "major",
    "race",
    "sex",
    "age",
    "zip",
    "sat",
    "hs",
    "hsgpa",
    "cohort",
    "transfer",
    "cdisc",
    "chrs",
    "clevel",
    "iclass",
    "irank",
    "itenure",
];

/// Derived columns that may appear in exported files; they are always
/// recomputed from the transcript and ignored on input.
pub const DERIVED_COLUMNS: [&str; 11] = [
    "lterm_gpa",
    "lterm_cum_gpa",
    "lterm_cgpa",
    "lterm_cum_cgpa",
    "term_chrs",
    "total_chrs",
    "num_enrolled",
    "total_enrolled",
    "alevel",
    "sterm",
    "prior_gpa",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    /// Calendar position of term 0, used when `season`/`year` columns are absent.
    pub first_season: Season,
    pub first_year: i32,
    /// Fraction of malformed rows above which the whole file is rejected.
    pub malformed_limit: f64,
    pub scale: GradeScale,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            first_season: Season::Summer,
            first_year: 2009,
            malformed_limit: 0.01,
            scale: GradeScale::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<TranscriptRecord>,
    /// Rows dropped for an unmappable grade, by grade token.
    pub dropped_grades: BTreeMap<String, usize>,
    /// Malformed rows skipped (line number, message); below the rejection limit.
    pub malformed: Vec<(u64, String)>,
}

impl ParseOutcome {
    pub fn dropped(&self) -> usize {
        self.dropped_grades.values().sum()
    }
}

struct Columns {
    index: BTreeMap<String, usize>,
    extras: Vec<(usize, String)>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut extras = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            let name = h.trim().to_string();
            let canonical = if name == "grdpts" { "grade".to_string() } else { name };
            if STANDARD_COLUMNS.contains(&canonical.as_str()) {
                index.insert(canonical, i);
            } else if !DERIVED_COLUMNS.contains(&canonical.as_str()) && !canonical.is_empty() {
                extras.push((i, canonical));
            }
        }
        for required in ["sid", "cid", "termnum", "grade"] {
            if !index.contains_key(required) {
                return Err(Error::MissingColumn(required.to_string()));
            }
        }
        Ok(Self { index, extras })
    }

    fn get<'r>(&self, row: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
        self.index
            .get(name)
            .and_then(|&i| row.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }
}

enum RowOutcome {
    Record(Box<TranscriptRecord>),
    DroppedGrade(String),
}

fn parse_num<T: std::str::FromStr>(value: Option<&str>, name: &str) -> std::result::Result<Option<T>, String> {
    match value {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| format!("column `{name}`: cannot parse `{v}`")),
    }
}

fn parse_bool(value: Option<&str>) -> std::result::Result<bool, String> {
    match value.map(|v| v.to_ascii_lowercase()) {
        None => Ok(false),
        Some(v) => match v.as_str() {
            "1" | "true" | "t" | "yes" | "y" => Ok(true),
            "0" | "false" | "f" | "no" | "n" => Ok(false),
            other => Err(format!("column `transfer`: cannot parse `{other}`")),
        },
    }
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &Columns,
    schema: &CsvSchema,
) -> std::result::Result<RowOutcome, String> {
    let owned = |name: &str| cols.get(row, name).map(str::to_string);
    let sid = owned("sid").ok_or("empty `sid`")?;
    let cid = owned("cid").ok_or("empty `cid`")?;
    let termnum: u32 = parse_num(cols.get(row, "termnum"), "termnum")?.ok_or("empty `termnum`")?;

    let grade = match cols.get(row, "grade") {
        None => None,
        Some(token) => match schema.scale.points(token) {
            Ok(g) => Some(g),
            Err(_) => match token.parse::<f64>() {
                Ok(v) => Some(GradePoints::new(v).map_err(|e| e.to_string())?),
                Err(_) => return Ok(RowOutcome::DroppedGrade(token.to_string())),
            },
        },
    };

    let mut term = TermId::from_index(termnum, schema.first_season, schema.first_year);
    if let Some(s) = cols.get(row, "season") {
        term.season = s.parse().map_err(|e: Error| e.to_string())?;
    }
    if let Some(y) = parse_num::<i32>(cols.get(row, "year"), "year")? {
        term.year = y;
    }

    let mut rec = TranscriptRecord::new(sid, cid, term);
    rec.grade = grade;
    rec.instructor_id = owned("iid");
    rec.institution_id = owned("institution_id");
    rec.student.major = owned("major");
    rec.student.race = owned("race");
    rec.student.sex = owned("sex");
    rec.student.age = parse_num(cols.get(row, "age"), "age")?;
    rec.student.zip = owned("zip");
    rec.student.sat = parse_num(cols.get(row, "sat"), "sat")?;
    rec.student.hs = owned("hs");
    rec.student.hsgpa = parse_num(cols.get(row, "hsgpa"), "hsgpa")?;
    rec.student.cohort = parse_num(cols.get(row, "cohort"), "cohort")?;
    rec.student.transfer = parse_bool(cols.get(row, "transfer"))?;
    rec.course.cdisc = owned("cdisc");
    rec.course.chrs = parse_num(cols.get(row, "chrs"), "chrs")?;
    rec.course.clevel = parse_num(cols.get(row, "clevel"), "clevel")?;
    rec.instructor.iclass = owned("iclass");
    rec.instructor.irank = owned("irank");
    rec.instructor.itenure = owned("itenure");
    for (i, name) in &cols.extras {
        if let Some(v) = row.get(*i).map(str::trim).filter(|v| !v.is_empty()) {
            rec.extra.insert(name.clone(), v.to_string());
        }
    }
    Ok(RowOutcome::Record(Box::new(rec)))
}

pub fn parse_transcript<R: Read>(reader: R, schema: &CsvSchema) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(&headers)?;

    let mut out = ParseOutcome::default();
    let mut total = 0usize;
    for result in rdr.records() {
        total += 1;
        let row = match result {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.malformed.push((line, e.to_string()));
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != headers.len() {
            out.malformed.push((
                line,
                format!("expected {} fields, found {}", headers.len(), row.len()),
            ));
            continue;
        }
        match parse_row(&row, &cols, schema) {
            Ok(RowOutcome::Record(r)) => out.records.push(*r),
            Ok(RowOutcome::DroppedGrade(token)) => *out.dropped_grades.entry(token).or_insert(0) += 1,
            Err(message) => out.malformed.push((line, message)),
        }
    }

    if total > 0 && out.malformed.len() as f64 > schema.malformed_limit * total as f64 {
        let (line, message) = &out.malformed[0];
        return Err(Error::TooManyMalformed {
            malformed: out.malformed.len(),
            total,
            limit: schema.malformed_limit * 100.0,
            first: format!("line {line}: {message}"),
        });
    }
    Ok(out)
}

pub fn parse_transcript_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ParseOutcome> {
    let file = std::fs::File::open(path)?;
    parse_transcript(std::io::BufReader::new(file), schema)
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

pub fn write_transcript<W: Write>(writer: W, records: &[TranscriptRecord], scale: &GradeScale) -> Result<()> {
    let extra_names: Vec<String> = {
        let mut names: Vec<String> = records
            .iter()
            .flat_map(|r| r.extra.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    };
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = STANDARD_COLUMNS.to_vec();
    header.extend(extra_names.iter().map(String::as_str));
    wtr.write_record(&header)?;
    for r in records {
        let grade = match r.grade {
            None => String::new(),
            Some(g) => scale
                .letter(g)
                .map(str::to_string)
                .unwrap_or_else(|| g.value().to_string()),
        };
        let mut row = vec![
            r.student_id.clone(),
            r.course_id.clone(),
            fmt_opt(&r.instructor_id),
            fmt_opt(&r.institution_id),
            r.term.index.to_string(),
            r.term.season.to_string(),
            r.term.year.to_string(),
            grade,
            fmt_opt(&r.student.major),
            fmt_opt(&r.student.race),
            fmt_opt(&r.student.sex),
            fmt_opt(&r.student.age),
            fmt_opt(&r.student.zip),
            fmt_opt(&r.student.sat),
            fmt_opt(&r.student.hs),
            fmt_opt(&r.student.hsgpa),
            fmt_opt(&r.student.cohort),
            if r.student.transfer { "1" } else { "0" }.to_string(),
            fmt_opt(&r.course.cdisc),
            fmt_opt(&r.course.chrs),
            fmt_opt(&r.course.clevel),
            fmt_opt(&r.instructor.iclass),
            fmt_opt(&r.instructor.irank),
            fmt_opt(&r.instructor.itenure),
        ];
        for name in &extra_names {
            row.push(r.extra.get(name).cloned().unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_transcript_csv(path: impl AsRef<Path>, records: &[TranscriptRecord], scale: &GradeScale) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_transcript(std::io::BufWriter::new(file), records, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParseOutcome> {
        parse_transcript(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn maps_fields_and_letter_grade() {
        let out = parse("sid,cid,termnum,grade,chrs,transfer,noise_1\ns1,c1,3,B+,3,1,x\n").unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.grade.unwrap().value(), 3.33);
        assert_eq!(r.term.index, 3);
        assert_eq!(r.course.chrs, Some(3.0));
        assert!(r.student.transfer);
        assert_eq!(r.extra.get("noise_1").map(String::as_str), Some("x"));
    }

    #[test]
    fn withdrawals_are_dropped_and_counted() {
        let out = parse("sid,cid,termnum,grade\ns1,c1,1,W\ns2,c1,1,A\ns3,c1,1,AU\ns4,c2,1,W\n").unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.dropped(), 3);
        assert_eq!(out.dropped_grades["W"], 2);
    }

    #[test]
    fn missing_required_column_is_named() {
        match parse("sid,termnum,grade\ns1,1,A\n") {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "cid"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn numeric_and_empty_grades() {
        let out = parse("sid,cid,termnum,grdpts\ns1,c1,0,2.5\ns1,c2,1,\n").unwrap();
        assert_eq!(out.records[0].grade.unwrap().value(), 2.5);
        assert!(out.records[1].grade.is_none());
    }

    #[test]
    fn malformed_rows_reject_file_above_limit() {
        let mut text = String::from("sid,cid,termnum,grade\n");
        for i in 0..50 {
            text.push_str(&format!("s{i},c1,1,A\n"));
        }
        text.push_str("s99,c1,notaterm,A\n");
        match parse(&text) {
            Err(Error::TooManyMalformed { malformed, first, .. }) => {
                assert_eq!(malformed, 1);
                assert!(first.contains("line 52"), "{first}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let lenient = CsvSchema {
            malformed_limit: 0.05,
            ..CsvSchema::default()
        };
        let out = parse_transcript(text.as_bytes(), &lenient).unwrap();
        assert_eq!(out.records.len(), 50);
        assert_eq!(out.malformed.len(), 1);
        assert_eq!(out.malformed[0].0, 52);
    }

    #[test]
    fn write_then_parse_preserves_records() {
        let mut r = TranscriptRecord::new("s1", "c1", TermId::from_index(2, Season::Summer, 2009)).with_grade(3.67);
        r.instructor_id = Some("i1".into());
        r.student.age = Some(19.0);
        r.student.cohort = Some(1);
        r.course.clevel = Some(2);
        r.extra.insert("noise_0".into(), "n3".into());
        let mut p = TranscriptRecord::new("s2", "c1", TermId::from_index(2, Season::Summer, 2009));
        p.institution_id = Some("inst7".into());
        p.student.transfer = true;
        let mut buf = Vec::new();
        write_transcript(&mut buf, &[r.clone(), p.clone()], &GradeScale::default()).unwrap();
        let out = parse_transcript(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(out.records, vec![r, p]);
    }
}
