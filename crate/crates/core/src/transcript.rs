//! Transcript data model: grade scale, term ordering, derived per-term
//! features and cold-start classification.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grade points on the 0–4 scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GradePoints(f64);

impl GradePoints {
    pub const MIN: f64 = 0.0;
    pub const MAX: f64 = 4.0;

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::GradeOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GradePoints {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GradePoints> for f64 {
    fn from(g: GradePoints) -> f64 {
        g.0
    }
}

/// Standard US letter scale on the two-decimal third-point grid.
pub const LETTER_SCALE: [(&str, f64); 12] = [
    ("A", 4.0),
    ("A-", 3.67),
    ("B+", 3.33),
    ("B", 3.0),
    ("B-", 2.67),
    ("C+", 2.33),
    ("C", 2.0),
    ("C-", 1.67),
    ("D+", 1.33),
    ("D", 1.0),
    ("D-", 0.67),
    ("F", 0.0),
];

/// A configurable letter → points table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeScale {
    pub letters: Vec<(String, f64)>,
}

impl Default for GradeScale {
    fn default() -> Self {
        Self {
            letters: LETTER_SCALE
                .iter()
                .map(|(l, p)| (l.to_string(), *p))
                .collect(),
        }
    }
}

impl GradeScale {
    pub fn points(&self, letter: &str) -> Result<GradePoints> {
        let token = letter.trim();
        self.letters
            .iter()
            .find(|(l, _)| l.eq_ignore_ascii_case(token))
            .map(|(_, p)| GradePoints(*p))
            .ok_or_else(|| Error::UnknownGrade(token.to_string()))
    }

    pub fn letter(&self, grade: GradePoints) -> Option<&str> {
        self.letters
            .iter()
            .find(|(_, p)| (p - grade.0).abs() < 1e-9)
            .map(|(l, _)| l.as_str())
    }
}

pub fn grade_from_letter(letter: &str) -> Result<GradePoints> {
    let token = letter.trim();
    LETTER_SCALE
        .iter()
        .find(|(l, _)| l.eq_ignore_ascii_case(token))
        .map(|(_, p)| GradePoints(*p))
        .ok_or_else(|| Error::UnknownGrade(token.to_string()))
}

pub fn letter_from_grade(grade: GradePoints) -> Option<&'static str> {
    LETTER_SCALE
        .iter()
        .find(|(_, p)| (p - grade.0).abs() < 1e-9)
        .map(|(l, _)| *l)
}

/// Snap a real value to the nearest grid point, clipping to [0, 4] first.
pub fn round_to_grid(value: f64) -> GradePoints {
    let v = value.clamp(GradePoints::MIN, GradePoints::MAX);
    let mut best = LETTER_SCALE[0].1;
    for (_, p) in LETTER_SCALE.iter() {
        if (p - v).abs() < (best - v).abs() {
            best = *p;
        }
    }
    GradePoints(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub fn next(self) -> (Season, i32) {
        match self {
            Season::Spring => (Season::Summer, 0),
            Season::Summer => (Season::Fall, 0),
            Season::Fall => (Season::Spring, 1),
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Season::Spring => "Spring",
            Season::Summer => "Summer",
            Season::Fall => "Fall",
        })
    }
}

impl FromStr for Season {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spring" | "sp" => Ok(Season::Spring),
            "summer" | "su" => Ok(Season::Summer),
            "fall" | "fa" | "autumn" => Ok(Season::Fall),
            other => Err(Error::InvalidConfig(format!("unknown season `{other}`"))),
        }
    }
}

/// Chronological term identifier. Ordering is by `index` alone; the calendar
/// fields are carried for reporting and summer filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermId {
    pub index: u32,
    pub season: Season,
    pub year: i32,
}

impl TermId {
    /// Term `index` counted from a first term with the given calendar position.
    pub fn from_index(index: u32, first_season: Season, first_year: i32) -> Self {
        let mut season = first_season;
        let mut year = first_year;
        for _ in 0..index {
            let (s, dy) = season.next();
            season = s;
            year += dy;
        }
        Self {
            index,
            season,
            year,
        }
    }

    pub fn is_summer(&self) -> bool {
        self.season == Season::Summer
    }
}

impl PartialOrd for TermId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TermId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.index.cmp(&other.index)
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} (#{})", self.season, self.year, self.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudentAttrs {
    pub major: Option<String>,
    pub race: Option<String>,
    pub sex: Option<String>,
    pub age: Option<f64>,
    pub zip: Option<String>,
    pub sat: Option<f64>,
    pub hs: Option<String>,
    pub hsgpa: Option<f64>,
    /// Explicit admit term; when absent the cohort is the first observed term.
    pub cohort: Option<u32>,
    pub transfer: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CourseAttrs {
    pub cdisc: Option<String>,
    pub chrs: Option<f64>,
    pub clevel: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstructorAttrs {
    pub iclass: Option<String>,
    pub irank: Option<String>,
    pub itenure: Option<String>,
}

/// One (student, course, term) dyad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub student_id: String,
    pub course_id: String,
    pub instructor_id: Option<String>,
    /// Institution of origin for transfer credit, standing in for the instructor.
    pub institution_id: Option<String>,
    pub term: TermId,
    pub grade: Option<GradePoints>,
    pub student: StudentAttrs,
    pub course: CourseAttrs,
    pub instructor: InstructorAttrs,
    /// Additional columns not in the standard schema, keyed by column name.
    pub extra: BTreeMap<String, String>,
}

impl TranscriptRecord {
    pub fn new(student_id: impl Into<String>, course_id: impl Into<String>, term: TermId) -> Self {
        Self {
            student_id: student_id.into(),
            course_id: course_id.into(),
            instructor_id: None,
            institution_id: None,
            term,
            grade: None,
            student: StudentAttrs::default(),
            course: CourseAttrs::default(),
            instructor: InstructorAttrs::default(),
            extra: BTreeMap::new(),
        }
    }

    pub fn with_grade(mut self, grade: f64) -> Self {
        self.grade = Some(GradePoints::new(grade).expect("grade in [0, 4]"));
        self
    }

    /// Instructor identifier, or the institution of origin for transfer credit.
    pub fn effective_instructor(&self) -> Option<&str> {
        self.instructor_id
            .as_deref()
            .or(self.institution_id.as_deref())
    }
}

/// Per-record features computed from strictly earlier grades. Enrollment
/// counts (`term_chrs`, `num_enrolled`, `total_enrolled`) also use the
/// record's own term because registration is known before grades are.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedFeatures {
    pub lterm_gpa: Option<f64>,
    pub lterm_cum_gpa: Option<f64>,
    pub prior_gpa: Option<f64>,
    pub lterm_cgpa: Option<f64>,
    pub lterm_cum_cgpa: Option<f64>,
    pub term_chrs: f64,
    pub total_chrs: f64,
    pub num_enrolled: f64,
    pub total_enrolled: f64,
    pub alevel: u8,
    pub sterm: u32,
    pub cohort: u32,
}

pub fn academic_level(total_chrs: f64) -> u8 {
    if total_chrs < 30.0 {
        0
    } else if total_chrs < 60.0 {
        1
    } else if total_chrs < 90.0 {
        2
    } else if total_chrs <= 120.0 {
        3
    } else {
        4
    }
}

/// Running GPA accumulator: credit-hour weighted when every contributing
/// record carries hours, otherwise a plain mean.
#[derive(Debug, Clone, Copy, Default)]
struct GpaAcc {
    weighted: f64,
    hours: f64,
    plain: f64,
    count: usize,
    missing_hours: bool,
}

impl GpaAcc {
    fn add(&mut self, grade: f64, hours: Option<f64>) {
        match hours {
            Some(h) if h > 0.0 => {
                self.weighted += grade * h;
                self.hours += h;
            }
            _ => self.missing_hours = true,
        }
        self.plain += grade;
        self.count += 1;
    }

    fn merge(&mut self, other: &GpaAcc) {
        self.weighted += other.weighted;
        self.hours += other.hours;
        self.plain += other.plain;
        self.count += other.count;
        self.missing_hours |= other.missing_hours;
    }

    fn gpa(&self) -> Option<f64> {
        if self.count == 0 {
            None
        } else if self.missing_hours || self.hours <= 0.0 {
            Some(self.plain / self.count as f64)
        } else {
            Some(self.weighted / self.hours)
        }
    }
}

#[derive(Debug, Default, Clone)]
struct TermSlice {
    gpa: GpaAcc,
    hours_taken: f64,
    enrolled: usize,
}

/// Aggregates per (entity, term), walked in chronological order.
fn per_entity_terms<'a, K>(
    records: &'a [TranscriptRecord],
    key: impl Fn(&'a TranscriptRecord) -> K,
) -> HashMap<K, BTreeMap<u32, TermSlice>>
where
    K: std::hash::Hash + Eq,
{
    let mut out: HashMap<K, BTreeMap<u32, TermSlice>> = HashMap::new();
    for r in records {
        let slice = out
            .entry(key(r))
            .or_default()
            .entry(r.term.index)
            .or_default();
        slice.enrolled += 1;
        slice.hours_taken += r.course.chrs.unwrap_or(0.0);
        if let Some(g) = r.grade {
            slice.gpa.add(g.value(), r.course.chrs);
        }
    }
    out
}

/// History summary for an entity as of (strictly before) some term.
#[derive(Debug, Clone, Default)]
struct History {
    last_gpa: Option<f64>,
    cumulative: GpaAcc,
    hours_taken: f64,
    terms_enrolled: u32,
    total_enrolled: usize,
}

fn histories(slices: &BTreeMap<u32, TermSlice>) -> BTreeMap<u32, History> {
    let mut out = BTreeMap::new();
    let mut running = History::default();
    for (&term, slice) in slices {
        out.insert(term, running.clone());
        if let Some(g) = slice.gpa.gpa() {
            running.last_gpa = Some(g);
        }
        running.cumulative.merge(&slice.gpa);
        running.hours_taken += slice.hours_taken;
        running.terms_enrolled += 1;
        running.total_enrolled += slice.enrolled;
    }
    out
}

/// Derived features for every record, each computed as of the record's own term.
pub fn derive_all(records: &[TranscriptRecord]) -> Vec<DerivedFeatures> {
    let by_student = per_entity_terms(records, |r| r.student_id.as_str());
    let by_course = per_entity_terms(records, |r| r.course_id.as_str());

    let student_hist: HashMap<&str, BTreeMap<u32, History>> = by_student
        .iter()
        .map(|(k, v)| (*k, histories(v)))
        .collect();
    let course_hist: HashMap<&str, BTreeMap<u32, History>> = by_course
        .iter()
        .map(|(k, v)| (*k, histories(v)))
        .collect();
    let first_term: HashMap<&str, u32> = by_student
        .iter()
        .map(|(k, v)| (*k, *v.keys().next().expect("nonempty")))
        .collect();

    records
        .iter()
        .map(|r| {
            let t = r.term.index;
            let sid = r.student_id.as_str();
            let cid = r.course_id.as_str();
            let sh = &student_hist[sid][&t];
            let ch = &course_hist[cid][&t];
            let s_now = &by_student[sid][&t];
            let c_now = &by_course[cid][&t];
            DerivedFeatures {
                lterm_gpa: sh.last_gpa,
                lterm_cum_gpa: sh.cumulative.gpa(),
                prior_gpa: r.student.hsgpa,
                lterm_cgpa: ch.last_gpa,
                lterm_cum_cgpa: ch.cumulative.gpa(),
                term_chrs: s_now.hours_taken,
                total_chrs: sh.hours_taken,
                num_enrolled: c_now.enrolled as f64,
                total_enrolled: (ch.total_enrolled + c_now.enrolled) as f64,
                alevel: academic_level(sh.hours_taken),
                sterm: sh.terms_enrolled,
                cohort: r.student.cohort.unwrap_or(first_term[sid]),
            }
        })
        .collect()
}

/// Derived features for the records of term `as_of`, using only records whose
/// term index is at most `as_of`. Returns (record position, features) pairs.
pub fn derive_features(records: &[TranscriptRecord], as_of: u32) -> Vec<(usize, DerivedFeatures)> {
    let visible: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].term.index <= as_of)
        .collect();
    let subset: Vec<TranscriptRecord> = visible.iter().map(|&i| records[i].clone()).collect();
    let derived = derive_all(&subset);
    visible
        .into_iter()
        .zip(derived)
        .filter(|(i, _)| records[*i].term.index == as_of)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColdStartClass {
    /// Student and course both seen in training.
    #[serde(rename = "NCS")]
    Ncs,
    /// New student, seen course.
    #[serde(rename = "CSS")]
    Css,
    /// Seen student, new course.
    #[serde(rename = "CSC")]
    Csc,
    /// Both new.
    #[serde(rename = "CSB")]
    Csb,
}

impl ColdStartClass {
    pub const ALL: [ColdStartClass; 4] = [Self::Ncs, Self::Css, Self::Csc, Self::Csb];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ncs => "NCS",
            Self::Css => "CSS",
            Self::Csc => "CSC",
            Self::Csb => "CSB",
        }
    }

    pub fn is_cold(self) -> bool {
        self != Self::Ncs
    }

    pub fn student_unseen(self) -> bool {
        matches!(self, Self::Css | Self::Csb)
    }
}

impl fmt::Display for ColdStartClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColdStartClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NCS" => Ok(Self::Ncs),
            "CSS" => Ok(Self::Css),
            "CSC" => Ok(Self::Csc),
            "CSB" => Ok(Self::Csb),
            other => Err(Error::InvalidConfig(format!("unknown cold-start class `{other}`"))),
        }
    }
}

pub fn classify_cold_start(
    record: &TranscriptRecord,
    seen_students: &HashSet<String>,
    seen_courses: &HashSet<String>,
) -> ColdStartClass {
    match (
        seen_students.contains(&record.student_id),
        seen_courses.contains(&record.course_id),
    ) {
        (true, true) => ColdStartClass::Ncs,
        (false, true) => ColdStartClass::Css,
        (true, false) => ColdStartClass::Csc,
        (false, false) => ColdStartClass::Csb,
    }
}

/// Student and course ids observed in a training history.
#[derive(Debug, Clone, Default)]
pub struct SeenSets {
    pub students: HashSet<String>,
    pub courses: HashSet<String>,
}

impl SeenSets {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TranscriptRecord>) -> Self {
        let mut seen = Self::default();
        for r in records {
            seen.students.insert(r.student_id.clone());
            seen.courses.insert(r.course_id.clone());
        }
        seen
    }

    pub fn classify(&self, record: &TranscriptRecord) -> ColdStartClass {
        classify_cold_start(record, &self.students, &self.courses)
    }
}

/// A transcript with derived features aligned to its records.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<TranscriptRecord>,
    pub derived: Vec<DerivedFeatures>,
}

impl Dataset {
    pub fn new(records: Vec<TranscriptRecord>) -> Self {
        let derived = derive_all(&records);
        Self { records, derived }
    }

    /// Distinct terms in chronological order.
    pub fn terms(&self) -> Vec<TermId> {
        let mut seen: BTreeMap<u32, TermId> = BTreeMap::new();
        for r in &self.records {
            seen.entry(r.term.index).or_insert(r.term);
        }
        seen.into_values().collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Positions of graded records with term index strictly below `term`.
    pub fn training_rows(&self, term: u32) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].term.index < term && self.records[i].grade.is_some())
            .collect()
    }

    /// Positions of records in `term` (graded or prediction-only).
    pub fn term_rows(&self, term: u32) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].term.index == term)
            .collect()
    }

    /// Cold-start class counts per term, each term classified against all earlier graded records.
    pub fn cold_start_summary(&self) -> Vec<(TermId, [usize; 4])> {
        self.terms()
            .into_iter()
            .map(|term| {
                let seen = SeenSets::from_records(
                    self.training_rows(term.index).iter().map(|&i| &self.records[i]),
                );
                let mut counts = [0usize; 4];
                for i in self.term_rows(term.index) {
                    let class = seen.classify(&self.records[i]);
                    counts[ColdStartClass::ALL.iter().position(|c| *c == class).unwrap()] += 1;
                }
                (term, counts)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(i: u32) -> TermId {
        TermId::from_index(i, Season::Fall, 2009)
    }

    #[test]
    fn letter_grades_map_to_grid() {
        assert_eq!(grade_from_letter("A").unwrap().value(), 4.0);
        assert_eq!(grade_from_letter("F").unwrap().value(), 0.0);
        assert_eq!(grade_from_letter("B+").unwrap().value(), 3.33);
        assert_eq!(grade_from_letter(" b- ").unwrap().value(), 2.67);
        match grade_from_letter("W") {
            Err(Error::UnknownGrade(t)) => assert_eq!(t, "W"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn grid_closure() {
        for (letter, points) in LETTER_SCALE {
            let g = GradePoints::new(points).unwrap();
            assert_eq!(letter_from_grade(g), Some(letter));
            assert_eq!(grade_from_letter(letter_from_grade(g).unwrap()).unwrap(), g);
        }
        let scale = GradeScale::default();
        assert_eq!(scale.points("C+").unwrap().value(), 2.33);
        assert_eq!(scale.letter(GradePoints::new(1.67).unwrap()), Some("C-"));
    }

    #[test]
    fn grade_points_reject_out_of_range() {
        assert!(GradePoints::new(4.01).is_err());
        assert!(GradePoints::new(-0.1).is_err());
        assert!(GradePoints::new(f64::NAN).is_err());
    }

    #[test]
    fn rounding_snaps_to_nearest_grid_value() {
        assert_eq!(round_to_grid(3.1).value(), 3.0);
        assert_eq!(round_to_grid(3.2).value(), 3.33);
        assert_eq!(round_to_grid(5.0).value(), 4.0);
        assert_eq!(round_to_grid(0.3).value(), 0.0);
        assert_eq!(round_to_grid(0.4).value(), 0.67);
    }

    #[test]
    fn term_sequence_follows_calendar() {
        let t0 = TermId::from_index(0, Season::Summer, 2009);
        assert_eq!((t0.season, t0.year), (Season::Summer, 2009));
        let t1 = TermId::from_index(1, Season::Summer, 2009);
        assert_eq!((t1.season, t1.year), (Season::Fall, 2009));
        let t2 = TermId::from_index(2, Season::Summer, 2009);
        assert_eq!((t2.season, t2.year), (Season::Spring, 2010));
        assert!(t1 < t2);
    }

    #[test]
    fn academic_level_bins() {
        assert_eq!(academic_level(0.0), 0);
        assert_eq!(academic_level(29.9), 0);
        assert_eq!(academic_level(45.0), 1);
        assert_eq!(academic_level(60.0), 2);
        assert_eq!(academic_level(120.0), 3);
        assert_eq!(academic_level(121.0), 4);
    }

    fn rec(s: &str, c: &str, t: u32, g: f64, hours: f64) -> TranscriptRecord {
        let mut r = TranscriptRecord::new(s, c, term(t)).with_grade(g);
        r.course.chrs = Some(hours);
        r
    }

    #[test]
    fn previous_term_gpa_is_hour_weighted_mean() {
        let records = vec![
            rec("s1", "c1", 0, 3.0, 3.0),
            rec("s1", "c2", 0, 4.0, 3.0),
            rec("s1", "c3", 1, 2.0, 3.0),
        ];
        let d = derive_all(&records);
        assert_eq!(d[2].lterm_gpa, Some(3.5));
        assert_eq!(d[2].lterm_cum_gpa, Some(3.5));
        assert_eq!(d[2].sterm, 1);
        assert_eq!(d[2].total_chrs, 6.0);
        assert_eq!(d[2].term_chrs, 3.0);
        assert_eq!(d[0].lterm_gpa, None);
        assert_eq!(d[0].sterm, 0);
        assert_eq!(d[0].term_chrs, 6.0);
        assert_eq!(d[0].cohort, 0);
        assert_eq!(d[2].cohort, 0);
    }

    #[test]
    fn unweighted_when_hours_missing() {
        let mut a = rec("s1", "c1", 0, 3.0, 4.0);
        a.course.chrs = None;
        let b = rec("s1", "c2", 0, 2.0, 1.0);
        let c = rec("s1", "c3", 1, 2.0, 3.0);
        let d = derive_all(&[a, b, c]);
        assert_eq!(d[2].lterm_gpa, Some(2.5));
    }

    #[test]
    fn course_aggregates_and_enrollment() {
        let records = vec![
            rec("s1", "c1", 0, 2.0, 3.0),
            rec("s2", "c1", 0, 4.0, 3.0),
            rec("s3", "c1", 2, 3.0, 3.0),
            rec("s4", "c1", 2, 3.0, 3.0),
            rec("s4", "c2", 2, 3.0, 3.0),
        ];
        let d = derive_all(&records);
        assert_eq!(d[2].lterm_cgpa, Some(3.0));
        assert_eq!(d[2].lterm_cum_cgpa, Some(3.0));
        assert_eq!(d[2].num_enrolled, 2.0);
        assert_eq!(d[2].total_enrolled, 4.0);
        assert_eq!(d[0].total_enrolled, 2.0);
        assert_eq!(d[4].lterm_cgpa, None);
        assert_eq!(d[3].term_chrs, 6.0);
    }

    #[test]
    fn explicit_cohort_wins() {
        let mut r = rec("s1", "c1", 3, 2.0, 3.0);
        r.student.cohort = Some(1);
        assert_eq!(derive_all(&[r])[0].cohort, 1);
    }

    #[test]
    fn derive_as_of_ignores_future_grades() {
        let records = vec![
            rec("s1", "c1", 0, 3.0, 3.0),
            rec("s1", "c2", 1, 1.0, 3.0),
            rec("s1", "c3", 2, 4.0, 3.0),
        ];
        let at1 = derive_features(&records, 1);
        assert_eq!(at1.len(), 1);
        assert_eq!(at1[0].0, 1);
        assert_eq!(at1[0].1, derive_all(&records)[1]);
    }

    #[test]
    fn cold_start_classes() {
        let students: HashSet<String> = ["s1".to_string()].into();
        let courses: HashSet<String> = ["c1".to_string()].into();
        let cls = |s: &str, c: &str| {
            classify_cold_start(&TranscriptRecord::new(s, c, term(1)), &students, &courses)
        };
        assert_eq!(cls("s1", "c1"), ColdStartClass::Ncs);
        assert_eq!(cls("s9", "c1"), ColdStartClass::Css);
        assert_eq!(cls("s1", "c9"), ColdStartClass::Csc);
        assert_eq!(cls("s9", "c9"), ColdStartClass::Csb);
    }
}
