//! Uniform-random, global-mean and mean-of-means baselines.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` i.i.d. uniform draws on [0, 4].
pub fn ur_predict(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..=4.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMean {
    pub mean: f64,
}

pub fn gm_fit(grades: &[f64]) -> Result<GlobalMean> {
    if grades.is_empty() {
        return Err(Error::EmptyTraining);
    }
    Ok(GlobalMean {
        mean: grades.iter().sum::<f64>() / grades.len() as f64,
    })
}

impl GlobalMean {
    pub fn predict(&self, n: usize) -> Vec<f64> {
        vec![self.mean; n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeansModel {
    pub global_mean: f64,
    pub per_student_mean: HashMap<String, f64>,
    pub per_course_mean: HashMap<String, f64>,
}

fn group_means<'a>(items: impl Iterator<Item = (&'a str, f64)>) -> HashMap<String, f64> {
    let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
    for (k, g) in items {
        let e = acc.entry(k).or_default();
        e.0 += g;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k.to_string(), s / n as f64))
        .collect()
}

/// Fit from (student, course, grade) triples.
pub fn mom_fit(train: &[(&str, &str, f64)]) -> Result<MeansModel> {
    let grades: Vec<f64> = train.iter().map(|t| t.2).collect();
    let global = gm_fit(&grades)?;
    Ok(MeansModel {
        global_mean: global.mean,
        per_student_mean: group_means(train.iter().map(|(s, _, g)| (*s, *g))),
        per_course_mean: group_means(train.iter().map(|(_, c, g)| (*c, *g))),
    })
}

impl MeansModel {
    /// Equal-weight mean of the available components among global, student and course means.
    pub fn predict(&self, student: &str, course: &str) -> f64 {
        let mut sum = self.global_mean;
        let mut n = 1.0;
        for m in [self.per_student_mean.get(student), self.per_course_mean.get(course)]
            .into_iter()
            .flatten()
        {
            sum += m;
            n += 1.0;
        }
        sum / n
    }
}
