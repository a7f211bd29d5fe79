//! Synthetic transcript generator with planted biases, a planted low-rank
//! student × course interaction, transfer credit and pure-noise columns.
//!
//! Grades are `round_to_grid(μ + b_s + b_c + b_i + u_s·v_c + ε)`. The planted
//! parameters are returned alongside the records so recovery tests can
//! compare estimates against them.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{round_to_grid, Season, TermId, TranscriptRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_students: usize,
    pub n_courses: usize,
    pub n_instructors: usize,
    pub n_terms: usize,
    pub latent_rank: usize,
    pub global_mean: f64,
    pub bias_std_student: f64,
    pub bias_std_course: f64,
    pub bias_std_instructor: f64,
    pub interaction_std: f64,
    pub noise_std: f64,
    /// Probability that a newly arriving student (after term 0) is a transfer student.
    pub transfer_fraction: f64,
    /// Size of each later term's incoming cohort relative to the term-0 cohort.
    /// Summer cohorts are a tenth of that.
    pub new_student_rate: f64,
    pub n_noise_features: usize,
    pub noise_levels: usize,
    /// Mean course load in Fall/Spring terms.
    pub courses_per_term: f64,
    /// Probability an active student enrolls in a summer term.
    pub summer_attendance: f64,
    /// Fraction of courses first offered after term 0.
    pub new_course_fraction: f64,
    /// Correlation between a student's bias and their `hsgpa`/`sat`.
    pub content_signal: f64,
    /// Upward shift of transfer-credit grades.
    pub transfer_shift: f64,
    /// Multiplier (< 1 shrinks) on the deviation of transfer-credit grades.
    pub transfer_spread: f64,
    /// Fall/Spring terms a native student stays enrolled; transfers stay half as long.
    pub terms_enrolled: usize,
    pub first_season: Season,
    pub first_year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_students: 2900,
            n_courses: 160,
            n_instructors: 120,
            n_terms: 10,
            latent_rank: 4,
            global_mean: 2.9,
            bias_std_student: 0.5,
            bias_std_course: 0.3,
            bias_std_instructor: 0.2,
            interaction_std: 0.3,
            noise_std: 0.5,
            transfer_fraction: 0.3,
            new_student_rate: 0.35,
            n_noise_features: 0,
            noise_levels: 8,
            courses_per_term: 4.0,
            summer_attendance: 0.25,
            new_course_fraction: 0.1,
            content_signal: 0.7,
            transfer_shift: 0.3,
            transfer_spread: 0.6,
            terms_enrolled: 8,
            first_season: Season::Fall,
            first_year: 2009,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_students == 0 || self.n_courses == 0 {
            return bad("synthetic dataset needs at least one student and one course");
        }
        if self.n_instructors == 0 || self.n_terms == 0 || self.latent_rank == 0 {
            return bad("n_instructors, n_terms and latent_rank must be positive");
        }
        if self.noise_levels == 0 && self.n_noise_features > 0 {
            return bad("noise_levels must be positive");
        }
        for (name, v) in [
            ("bias_std_student", self.bias_std_student),
            ("bias_std_course", self.bias_std_course),
            ("bias_std_instructor", self.bias_std_instructor),
            ("interaction_std", self.interaction_std),
            ("noise_std", self.noise_std),
            ("courses_per_term", self.courses_per_term),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be a non-negative number")));
            }
        }
        for (name, v) in [
            ("transfer_fraction", self.transfer_fraction),
            ("new_student_rate", self.new_student_rate),
            ("summer_attendance", self.summer_attendance),
            ("new_course_fraction", self.new_course_fraction),
            ("content_signal", self.content_signal),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if !self.global_mean.is_finite() || !self.transfer_shift.is_finite() || !(self.transfer_spread >= 0.0) {
            return bad("global_mean, transfer_shift and transfer_spread must be finite");
        }
        Ok(())
    }

    /// Mean and standard deviation of native grades implied by the config,
    /// ignoring clipping at the scale ends. Rounding to the third-point grid
    /// contributes a uniform quantization variance of (1/3)²/12.
    pub fn expected_grade_moments(&self) -> (f64, f64) {
        let var = self.bias_std_student.powi(2)
            + self.bias_std_course.powi(2)
            + self.bias_std_instructor.powi(2)
            + self.interaction_std.powi(2)
            + self.noise_std.powi(2)
            + 1.0 / 108.0;
        (self.global_mean, var.sqrt())
    }
}

/// Planted generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub student_bias: BTreeMap<String, f64>,
    pub course_bias: BTreeMap<String, f64>,
    pub instructor_bias: BTreeMap<String, f64>,
    pub student_factors: BTreeMap<String, Vec<f64>>,
    pub course_factors: BTreeMap<String, Vec<f64>>,
    pub transfer_students: Vec<String>,
    pub noise_features: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub records: Vec<TranscriptRecord>,
    pub truth: SynthTruth,
}

struct Course {
    id: String,
    cdisc: String,
    chrs: f64,
    clevel: u8,
    first_term: usize,
    popularity: f64,
    instructors: Vec<usize>,
    bias: f64,
    factors: Vec<f64>,
}

struct Instructor {
    id: String,
    iclass: &'static str,
    irank: &'static str,
    itenure: &'static str,
    bias: f64,
}

struct Student {
    id: String,
    cohort: usize,
    transfer: bool,
    major: String,
    race: &'static str,
    sex: &'static str,
    age: f64,
    zip: String,
    sat: Option<f64>,
    hs: Option<String>,
    hsgpa: f64,
    institution: Option<String>,
    terms_left: usize,
    bias: f64,
    factors: Vec<f64>,
    taken: Vec<usize>,
}

const RACES: [(&str, f64); 5] = [
    ("white", 0.5),
    ("asian", 0.18),
    ("black", 0.12),
    ("hispanic", 0.12),
    ("unspecified", 0.08),
];
const ICLASS: [&str; 5] = ["adjunct", "full_time", "part_time", "gra", "gta"];
const IRANK: [&str; 5] = [
    "instructor",
    "assistant_professor",
    "associate_professor",
    "eminent_scholar",
    "university_professor",
];
const ITENURE: [&str; 3] = ["term", "tenure_track", "tenured"];
const N_DISCIPLINES: usize = 8;
const N_MAJORS: usize = 12;

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

fn weighted<'a, T>(rng: &mut ChaCha8Rng, items: &'a [(T, f64)]) -> &'a T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (item, w) in items {
        if u < *w {
            return item;
        }
        u -= w;
    }
    &items[items.len() - 1].0
}

/// Split `total` into parts proportional to `weights` by largest remainder.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        parts[i] += 1;
        rest -= 1;
    }
    parts
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let factor_std = (config.interaction_std.powi(2) / config.latent_rank as f64).powf(0.25);
    let terms: Vec<TermId> = (0..config.n_terms)
        .map(|t| TermId::from_index(t as u32, config.first_season, config.first_year))
        .collect();

    let instructors: Vec<Instructor> = (0..config.n_instructors)
        .map(|k| Instructor {
            id: format!("i{k:04}"),
            iclass: ICLASS.choose(&mut rng).copied().unwrap(),
            irank: IRANK.choose(&mut rng).copied().unwrap(),
            itenure: ITENURE.choose(&mut rng).copied().unwrap(),
            bias: normal(&mut rng, config.bias_std_instructor),
        })
        .collect();

    // Discipline carries half of the course-bias variance so content
    // features say something about unseen courses.
    let disc_effect: Vec<f64> = (0..N_DISCIPLINES)
        .map(|_| normal(&mut rng, config.bias_std_course * std::f64::consts::FRAC_1_SQRT_2))
        .collect();
    let mut courses: Vec<Course> = (0..config.n_courses)
        .map(|j| {
            let disc = rng.random_range(0..N_DISCIPLINES);
            let late = config.n_terms > 1 && rng.random::<f64>() < config.new_course_fraction;
            let n_inst = rng.random_range(1..=2usize);
            Course {
                id: format!("c{j:04}"),
                cdisc: format!("D{disc}"),
                chrs: *weighted(&mut rng, &[(3.0, 0.8), (4.0, 0.12), (1.0, 0.08)]),
                clevel: *weighted(&mut rng, &[(1u8, 0.3), (2, 0.3), (3, 0.2), (4, 0.15), (5, 0.05)]),
                first_term: if late { rng.random_range(1..config.n_terms) } else { 0 },
                popularity: (normal(&mut rng, 0.7)).exp(),
                instructors: (0..n_inst).map(|_| rng.random_range(0..config.n_instructors)).collect(),
                bias: disc_effect[disc] + normal(&mut rng, config.bias_std_course * std::f64::consts::FRAC_1_SQRT_2),
                factors: (0..config.latent_rank).map(|_| normal(&mut rng, factor_std)).collect(),
            }
        })
        .collect();
    courses.sort_by(|a, b| a.id.cmp(&b.id));

    let cohort_weights: Vec<f64> = terms
        .iter()
        .map(|t| match (t.index, t.is_summer()) {
            (0, _) => 1.0,
            (_, true) => config.new_student_rate * 0.1,
            (_, false) => config.new_student_rate,
        })
        .collect();
    let cohort_sizes = if cohort_weights.iter().sum::<f64>() > 0.0 {
        apportion(config.n_students, &cohort_weights)
    } else {
        vec![config.n_students]
    };

    let mut students: Vec<Student> = Vec::with_capacity(config.n_students);
    for (cohort, &size) in cohort_sizes.iter().enumerate() {
        for _ in 0..size {
            let n = students.len();
            let transfer = cohort > 0 && rng.random::<f64>() < config.transfer_fraction;
            let bias = normal(&mut rng, config.bias_std_student);
            let z = if config.bias_std_student > 0.0 { bias / config.bias_std_student } else { 0.0 };
            let c = config.content_signal;
            let signal = |rng: &mut ChaCha8Rng| c * z + (1.0 - c * c).sqrt() * normal(rng, 1.0);
            let hsgpa = (3.1 + 0.45 * signal(&mut rng)).clamp(0.0, 4.0);
            let sat = (1100.0 + 160.0 * signal(&mut rng)).clamp(400.0, 1600.0).round();
            students.push(Student {
                id: format!("s{n:05}"),
                cohort,
                transfer,
                major: format!("M{}", rng.random_range(0..N_MAJORS)),
                race: weighted(&mut rng, &RACES),
                sex: if rng.random::<bool>() { "F" } else { "M" },
                age: if transfer { rng.random_range(20..31) as f64 } else { rng.random_range(17..20) as f64 },
                zip: format!("z{:03}", rng.random_range(0..300)),
                sat: (!transfer).then_some(sat),
                hs: (!transfer).then(|| format!("hs{:03}", rng.random_range(0..400))),
                hsgpa: (hsgpa * 100.0).round() / 100.0,
                institution: transfer.then(|| format!("inst{:02}", rng.random_range(0..30))),
                terms_left: if transfer { config.terms_enrolled.div_ceil(2) } else { config.terms_enrolled },
                bias,
                factors: (0..config.latent_rank).map(|_| normal(&mut rng, factor_std)).collect(),
                taken: Vec::new(),
            });
        }
    }

    let noise_features: Vec<String> = (0..config.n_noise_features).map(|k| format!("noise_{k:02}")).collect();
    let mut records = Vec::new();
    for term in &terms {
        let t = term.index as usize;
        let offered: Vec<usize> = (0..courses.len()).filter(|&j| courses[j].first_term <= t).collect();
        if offered.is_empty() {
            continue;
        }
        for s in students.iter_mut() {
            if s.cohort > t || s.terms_left == 0 {
                continue;
            }
            let arrival = s.cohort == t;
            let load = if arrival && s.transfer {
                rng.random_range(5..=9)
            } else if term.is_summer() {
                if !arrival && rng.random::<f64>() >= config.summer_attendance {
                    continue;
                }
                rng.random_range(1..=2)
            } else {
                (config.courses_per_term + normal(&mut rng, 0.8)).round().max(1.0) as usize
            };
            if !term.is_summer() {
                s.terms_left -= 1;
            }
            let available: Vec<(usize, f64)> = offered
                .iter()
                .filter(|j| !s.taken.contains(j))
                .map(|&j| (j, courses[j].popularity))
                .collect();
            let chosen: Vec<usize> = available
                .choose_multiple_weighted(&mut rng, load.min(available.len()), |(_, w)| *w)
                .expect("positive weights")
                .map(|(j, _)| *j)
                .collect();
            for j in chosen {
                s.taken.push(j);
                let course = &courses[j];
                let interaction: f64 = s.factors.iter().zip(&course.factors).map(|(a, b)| a * b).sum();
                let eps = normal(&mut rng, config.noise_std);
                let mut rec = TranscriptRecord::new(s.id.clone(), course.id.clone(), *term);
                let raw = if arrival && s.transfer {
                    // Transfer credit: passing grades only, shifted up and less spread.
                    rec.institution_id = s.institution.clone();
                    let dev = s.bias + course.bias + interaction + eps;
                    (config.global_mean + config.transfer_shift + config.transfer_spread * dev).max(2.0)
                } else {
                    let inst = &instructors[*course.instructors.choose(&mut rng).unwrap()];
                    rec.instructor_id = Some(inst.id.clone());
                    rec.instructor.iclass = Some(inst.iclass.to_string());
                    rec.instructor.irank = Some(inst.irank.to_string());
                    rec.instructor.itenure = Some(inst.itenure.to_string());
                    config.global_mean + s.bias + course.bias + inst.bias + interaction + eps
                };
                rec.grade = Some(round_to_grid(raw));
                rec.student.major = Some(s.major.clone());
                rec.student.race = Some(s.race.to_string());
                rec.student.sex = Some(s.sex.to_string());
                rec.student.age = Some(s.age + (t - s.cohort) as f64 / 3.0).map(|a| a.floor());
                rec.student.zip = Some(s.zip.clone());
                rec.student.sat = s.sat;
                rec.student.hs = s.hs.clone();
                rec.student.hsgpa = Some(s.hsgpa);
                rec.student.cohort = Some(s.cohort as u32);
                rec.student.transfer = s.transfer;
                rec.course.cdisc = Some(course.cdisc.clone());
                rec.course.chrs = Some(course.chrs);
                rec.course.clevel = Some(course.clevel);
                for name in &noise_features {
                    rec.extra.insert(name.clone(), format!("v{}", rng.random_range(0..config.noise_levels)));
                }
                records.push(rec);
            }
        }
    }

    let truth = SynthTruth {
        config: config.clone(),
        student_bias: students.iter().map(|s| (s.id.clone(), s.bias)).collect(),
        course_bias: courses.iter().map(|c| (c.id.clone(), c.bias)).collect(),
        instructor_bias: instructors.iter().map(|i| (i.id.clone(), i.bias)).collect(),
        student_factors: students.iter().map(|s| (s.id.clone(), s.factors.clone())).collect(),
        course_factors: courses.iter().map(|c| (c.id.clone(), c.factors.clone())).collect(),
        transfer_students: students.iter().filter(|s| s.transfer).map(|s| s.id.clone()).collect(),
        noise_features,
    };
    Ok(SynthDataset { records, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{ColdStartClass, Dataset};

    fn small() -> SynthConfig {
        SynthConfig {
            n_students: 300,
            n_courses: 40,
            n_instructors: 20,
            n_terms: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        for cfg in [
            SynthConfig { n_students: 0, ..small() },
            SynthConfig { n_courses: 0, ..small() },
            SynthConfig { new_student_rate: 1.5, ..small() },
            SynthConfig { noise_std: -1.0, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.truth, b.truth);
        let c = generate_synthetic(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn zero_variance_config_gives_constant_grades() {
        let cfg = SynthConfig {
            global_mean: 3.0,
            bias_std_student: 0.0,
            bias_std_course: 0.0,
            bias_std_instructor: 0.0,
            interaction_std: 0.0,
            noise_std: 0.0,
            transfer_fraction: 0.0,
            ..small()
        };
        let d = generate_synthetic(&cfg).unwrap();
        assert!(!d.records.is_empty());
        assert!(d.records.iter().all(|r| r.grade.unwrap().value() == 3.0));
    }

    #[test]
    fn no_arrivals_means_no_student_cold_start_after_term_zero() {
        let cfg = SynthConfig { new_student_rate: 0.0, ..small() };
        let d = Dataset::new(generate_synthetic(&cfg).unwrap().records);
        for (term, counts) in d.cold_start_summary().into_iter().skip(1) {
            let css = counts[ColdStartClass::ALL.iter().position(|c| *c == ColdStartClass::Css).unwrap()];
            let csb = counts[ColdStartClass::ALL.iter().position(|c| *c == ColdStartClass::Csb).unwrap()];
            assert_eq!((css, csb), (0, 0), "term {term}");
        }
    }

    #[test]
    fn noise_columns_and_transfer_credit() {
        let cfg = SynthConfig { n_noise_features: 3, ..small() };
        let d = generate_synthetic(&cfg).unwrap();
        assert_eq!(d.truth.noise_features, vec!["noise_00", "noise_01", "noise_02"]);
        assert!(d.records.iter().all(|r| r.extra.len() == 3));
        let credits: Vec<_> = d.records.iter().filter(|r| r.institution_id.is_some()).collect();
        assert!(!credits.is_empty());
        assert!(credits.iter().all(|r| r.student.transfer && r.instructor_id.is_none()));
        assert!(credits.iter().all(|r| r.grade.unwrap().value() >= 2.0));
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[1.0, 0.0]), vec![7, 0]);
    }
}
