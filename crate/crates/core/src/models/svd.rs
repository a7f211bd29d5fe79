//! Dot-product matrix factorization over student/course ids, plus the
//! nearest-course post-processing step.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdConfig {
    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            k: 8,
            epochs: 50,
            learning_rate: 0.005,
            lambda: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdModel {
    pub k: usize,
    pub student_factors: HashMap<String, Vec<f64>>,
    pub course_factors: HashMap<String, Vec<f64>>,
}

/// Fit on (student, course, grade) triples by per-entry stochastic updates.
pub fn svd_fit(train: &[(&str, &str, f64)], config: &SvdConfig, seed: u64) -> Result<SvdModel> {
    if config.k == 0 {
        return Err(Error::InvalidConfig("svd rank must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let k = config.k;
    let mean = train.iter().map(|t| t.2).sum::<f64>() / train.len() as f64;
    // Start near the rank-k factorization of a constant matrix at the mean.
    let base = (mean.max(0.0) / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut students: Vec<&str> = train.iter().map(|t| t.0).collect();
    let mut courses: Vec<&str> = train.iter().map(|t| t.1).collect();
    students.sort_unstable();
    students.dedup();
    courses.sort_unstable();
    courses.dedup();
    let s_index: HashMap<&str, usize> = students.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let c_index: HashMap<&str, usize> = courses.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let mut init = |n: usize| -> Vec<f64> { (0..n * k).map(|_| base + rng.random_range(-0.01..0.01)).collect() };
    let mut p = init(students.len());
    let mut q = init(courses.len());

    let entries: Vec<(usize, usize, f64)> = train.iter().map(|(s, c, g)| (s_index[s], c_index[c], *g)).collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let (lr, lambda) = (config.learning_rate, config.lambda);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            let (i, j, g) = entries[e];
            let (pi, qj) = (&mut p[i * k..(i + 1) * k], &mut q[j * k..(j + 1) * k]);
            let err = g - super::dot(pi, qj);
            for f in 0..k {
                let (a, b) = (pi[f], qj[f]);
                pi[f] += lr * (err * b - lambda * a);
                qj[f] += lr * (err * a - lambda * b);
            }
        }
        super::check_finite(p.iter().chain(&q).sum(), || format!("svd epoch {epoch}"))?;
    }

    let collect = |ids: &[&str], m: &[f64]| -> HashMap<String, Vec<f64>> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), m[i * k..(i + 1) * k].to_vec()))
            .collect()
    };
    Ok(SvdModel {
        k,
        student_factors: collect(&students, &p),
        course_factors: collect(&courses, &q),
    })
}

impl SvdModel {
    /// `v_i · v_j`, or `None` when either id was not seen in training.
    pub fn predict(&self, student: &str, course: &str) -> Option<f64> {
        let a = self.student_factors.get(student)?;
        let b = self.course_factors.get(course)?;
        Some(super::dot(a, b))
    }

    fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (u, v) = (self.course_factors.get(a)?, self.course_factors.get(b)?);
        let norm = super::dot(u, u).sqrt() * super::dot(v, v).sqrt();
        (norm > 0.0).then(|| super::dot(u, v) / norm)
    }

    /// Replace the target course with the completed course closest in
    /// latent space and predict that one instead. Ties keep the first
    /// candidate in `history` order.
    pub fn svdknn_predict(&self, student: &str, course: &str, history: &[String]) -> Option<f64> {
        if history.is_empty() {
            return None;
        }
        if !self.course_factors.contains_key(course) {
            return self.predict(student, course);
        }
        let mut best: Option<(&str, f64)> = None;
        for c in history {
            if let Some(sim) = self.cosine(course, c) {
                if best.is_none_or(|(_, b)| sim > b) {
                    best = Some((c, sim));
                }
            }
        }
        match best {
            Some((c, _)) => self.predict(student, c),
            None => self.predict(student, course),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(students: &[(&str, Vec<f64>)], courses: &[(&str, Vec<f64>)]) -> SvdModel {
        SvdModel {
            k: students.first().map_or(0, |s| s.1.len()),
            student_factors: students.iter().map(|(s, v)| (s.to_string(), v.clone())).collect(),
            course_factors: courses.iter().map(|(c, v)| (c.to_string(), v.clone())).collect(),
        }
    }

    #[test]
    fn dot_product_prediction() {
        let m = model(&[("s", vec![1.0, 0.0]), ("z", vec![0.0, 0.0])], &[("c", vec![3.0, 5.0])]);
        assert_eq!(m.predict("s", "c"), Some(3.0));
        assert_eq!(m.predict("z", "c"), Some(0.0));
        assert_eq!(m.predict("s", "unseen"), None);
        assert_eq!(m.predict("unseen", "c"), None);
    }

    #[test]
    fn rank_one_reconstruction() {
        let a = [1.0, 1.2, 1.5, 0.8, 1.1, 1.3];
        let b = [1.5, 2.0, 2.5, 1.8, 2.2];
        let ids_s: Vec<String> = (0..a.len()).map(|i| format!("s{i}")).collect();
        let ids_c: Vec<String> = (0..b.len()).map(|j| format!("c{j}")).collect();
        let mut train = Vec::new();
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                train.push((ids_s[i].as_str(), ids_c[j].as_str(), ai * bj));
            }
        }
        let cfg = SvdConfig {
            k: 1,
            epochs: 2000,
            learning_rate: 0.01,
            lambda: 0.0,
        };
        let m = svd_fit(&train, &cfg, 0).unwrap();
        let rmse = (train
            .iter()
            .map(|(s, c, g)| (m.predict(s, c).unwrap() - g).powi(2))
            .sum::<f64>()
            / train.len() as f64)
            .sqrt();
        assert!(rmse < 0.05, "{rmse}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(svd_fit(&[], &SvdConfig::default(), 0).is_err());
        let cfg = SvdConfig { k: 0, ..SvdConfig::default() };
        assert!(svd_fit(&[("s", "c", 3.0)], &cfg, 0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let train = [("a", "x", 3.0), ("a", "y", 2.0), ("b", "x", 4.0), ("b", "y", 3.33)];
        let m1 = svd_fit(&train, &SvdConfig::default(), 4).unwrap();
        let m2 = svd_fit(&train, &SvdConfig::default(), 4).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn knn_single_candidate() {
        let m = model(
            &[("s", vec![1.0, 2.0])],
            &[("c", vec![1.0, 0.0]), ("d", vec![0.5, 0.5]), ("e", vec![0.0, 1.0])],
        );
        let hist = vec!["d".to_string()];
        assert_eq!(m.svdknn_predict("s", "c", &hist), m.predict("s", "d"));
    }

    #[test]
    fn knn_prefers_target_when_taken() {
        let m = model(
            &[("s", vec![1.0, 2.0])],
            &[("c", vec![1.0, 0.0]), ("d", vec![0.5, 0.5]), ("e", vec![0.0, 1.0])],
        );
        let hist = vec!["e".to_string(), "c".to_string(), "d".to_string()];
        assert_eq!(m.svdknn_predict("s", "c", &hist), m.predict("s", "c"));
    }

    #[test]
    fn knn_picks_most_similar() {
        let m = model(
            &[("s", vec![1.0, 2.0])],
            &[("c", vec![1.0, 0.1]), ("d", vec![0.5, 0.5]), ("e", vec![0.0, 1.0])],
        );
        let hist = vec!["e".to_string(), "d".to_string()];
        assert_eq!(m.svdknn_predict("s", "c", &hist), m.predict("s", "d"));
    }

    #[test]
    fn knn_without_history_is_absent() {
        let m = model(&[("s", vec![1.0])], &[("c", vec![1.0])]);
        assert_eq!(m.svdknn_predict("s", "c", &[]), None);
    }
}
