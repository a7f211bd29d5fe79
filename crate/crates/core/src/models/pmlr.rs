//! Personalized multi-linear regression with a global intercept and
//! regularized biases. Every parameter is kept nonnegative by projecting
//! after each stochastic update.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmlrConfig {
    pub k: usize,
    pub lambda_w: f64,
    pub lambda_b: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Multiplicative learning-rate decay applied after each epoch.
    pub decay: f64,
}

impl Default for PmlrConfig {
    fn default() -> Self {
        Self {
            k: 4,
            lambda_w: 0.01,
            lambda_b: 0.5,
            learning_rate: 0.001,
            epochs: 100,
            decay: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmlrModel {
    pub k: usize,
    pub n_cols: usize,
    pub w0: f64,
    pub student_bias: HashMap<String, f64>,
    pub course_bias: HashMap<String, f64>,
    pub membership: HashMap<String, Vec<f64>>,
    /// Regression coefficients, `k × p` row-major.
    pub w: Vec<f64>,
}

impl PmlrModel {
    /// Smallest parameter value across the whole model.
    pub fn min_parameter(&self) -> f64 {
        std::iter::once(self.w0)
            .chain(self.student_bias.values().copied())
            .chain(self.course_bias.values().copied())
            .chain(self.membership.values().flatten().copied())
            .chain(self.w.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn predict_row(&self, student: &str, course: &str, idx: &[u32], val: &[f64]) -> f64 {
        let uniform = 1.0 / self.k as f64;
        let member = self.membership.get(student);
        let mut y = self.w0
            + self.student_bias.get(student).copied().unwrap_or(0.0)
            + self.course_bias.get(course).copied().unwrap_or(0.0);
        for l in 0..self.k {
            let h: f64 = idx
                .iter()
                .zip(val)
                .map(|(c, x)| self.w[l * self.n_cols + *c as usize] * x)
                .sum();
            y += member.map_or(uniform, |m| m[l]) * h;
        }
        y
    }

    pub fn predict(&self, m: &DesignMatrix) -> Vec<f64> {
        (0..m.n_rows())
            .map(|i| {
                let (idx, val) = m.row(i);
                self.predict_row(&m.meta[i].student_id, &m.meta[i].course_id, idx, val)
            })
            .collect()
    }
}

struct State {
    k: usize,
    p: usize,
    w0: f64,
    s: Vec<f64>,
    c: Vec<f64>,
    pm: Vec<f64>,
    w: Vec<f64>,
}

fn index<'a>(ids: impl Iterator<Item = &'a str>) -> (Vec<&'a str>, HashMap<&'a str, usize>) {
    let mut names: Vec<&str> = ids.collect();
    names.sort_unstable();
    names.dedup();
    let map = names.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    (names, map)
}

pub fn pmlr_fit(train: &DesignMatrix, config: &PmlrConfig, seed: u64) -> Result<PmlrModel> {
    fit_inner(train, config, seed, None)
}

/// As [`pmlr_fit`], calling `observe` with a snapshot after every epoch.
pub fn pmlr_fit_observed(
    train: &DesignMatrix,
    config: &PmlrConfig,
    seed: u64,
    mut observe: impl FnMut(usize, &PmlrModel),
) -> Result<PmlrModel> {
    fit_inner(train, config, seed, Some(&mut observe))
}

fn fit_inner(
    train: &DesignMatrix,
    config: &PmlrConfig,
    seed: u64,
    mut observe: Option<&mut dyn FnMut(usize, &PmlrModel)>,
) -> Result<PmlrModel> {
    if config.k == 0 {
        return Err(Error::InvalidConfig("pmlr needs k ≥ 1".into()));
    }
    if config.epochs == 0 {
        return Err(Error::InvalidConfig("pmlr needs at least one epoch".into()));
    }
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::EmptyTraining);
    }
    let y = train.labels()?;
    let (students, s_index) = index(train.meta.iter().map(|m| m.student_id.as_str()));
    let (courses, c_index) = index(train.meta.iter().map(|m| m.course_id.as_str()));
    let si: Vec<usize> = train.meta.iter().map(|m| s_index[m.student_id.as_str()]).collect();
    let ci: Vec<usize> = train.meta.iter().map(|m| c_index[m.course_id.as_str()]).collect();
    let mut s_count = vec![0.0; students.len()];
    let mut c_count = vec![0.0; courses.len()];
    for i in 0..n {
        s_count[si[i]] += 1.0;
        c_count[ci[i]] += 1.0;
    }

    let (k, p) = (config.k, train.n_cols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut small = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(0.0..0.01)).collect() };
    let mut st = State {
        k,
        p,
        w0: (y.iter().sum::<f64>() / n as f64).max(0.0),
        s: small(students.len()),
        c: small(courses.len()),
        pm: vec![1.0 / k as f64; students.len() * k],
        w: small(k * p),
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut lr = config.learning_rate;
    let mut h = vec![0.0; k];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &r in &order {
            let (idx, val) = train.row(r);
            let (a, b) = (si[r], ci[r]);
            for (l, hl) in h.iter_mut().enumerate() {
                *hl = idx.iter().zip(val).map(|(c, x)| st.w[l * p + *c as usize] * x).sum();
            }
            let member = &st.pm[a * k..(a + 1) * k];
            let pred = st.w0 + st.s[a] + st.c[b] + super::dot(member, &h);
            let e = y[r] - pred;

            st.w0 = (st.w0 + lr * e).max(0.0);
            st.s[a] = (st.s[a] + lr * (e - config.lambda_b / s_count[a] * st.s[a])).max(0.0);
            st.c[b] = (st.c[b] + lr * (e - config.lambda_b / c_count[b] * st.c[b])).max(0.0);
            for l in 0..k {
                let pl = st.pm[a * k + l];
                for (c, x) in idx.iter().zip(val) {
                    let wi = l * p + *c as usize;
                    st.w[wi] = (st.w[wi] + lr * e * pl * x).max(0.0);
                }
                st.pm[a * k + l] = (pl + lr * (e * h[l] - config.lambda_w / s_count[a] * pl)).max(0.0);
            }
        }
        // The coefficient penalty is shared by all rows; apply one epoch's worth at once.
        let shrink = (1.0 - lr * config.lambda_w).max(0.0);
        st.w.iter_mut().for_each(|x| *x *= shrink);
        let total = st.w0 + st.s.iter().sum::<f64>() + st.c.iter().sum::<f64>() + st.w.iter().sum::<f64>();
        super::check_finite(total, || format!("pmlr epoch {epoch}"))?;
        if let Some(obs) = observe.as_deref_mut() {
            obs(epoch, &snapshot(&st, &students, &courses));
        }
        lr *= config.decay;
    }
    Ok(snapshot(&st, &students, &courses))
}

fn snapshot(st: &State, students: &[&str], courses: &[&str]) -> PmlrModel {
    PmlrModel {
        k: st.k,
        n_cols: st.p,
        w0: st.w0,
        student_bias: students.iter().zip(&st.s).map(|(s, v)| (s.to_string(), *v)).collect(),
        course_bias: courses.iter().zip(&st.c).map(|(c, v)| (c.to_string(), *v)).collect(),
        membership: students
            .iter()
            .enumerate()
            .map(|(i, s)| (s.to_string(), st.pm[i * st.k..(i + 1) * st.k].to_vec()))
            .collect(),
        w: st.w.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::RowMeta;

    fn with_ids(mut m: DesignMatrix, ids: &[(String, String)]) -> DesignMatrix {
        m.meta = ids
            .iter()
            .enumerate()
            .map(|(i, (s, c))| RowMeta {
                student_id: s.clone(),
                course_id: c.clone(),
                ..m.meta[i].clone()
            })
            .collect();
        m
    }

    fn hand_model() -> PmlrModel {
        PmlrModel {
            k: 2,
            n_cols: 3,
            w0: 1.0,
            student_bias: [("a".to_string(), 0.5)].into(),
            course_bias: [("x".to_string(), 0.25)].into(),
            membership: [("a".to_string(), vec![0.2, 0.8])].into(),
            w: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        }
    }

    #[test]
    fn hand_computed_prediction() {
        let m = hand_model();
        let x = [1.0, -2.0, 3.0];
        let h0 = 0.1 * 1.0 + 0.2 * -2.0 + 0.3 * 3.0;
        let h1 = 0.4 * 1.0 + 0.5 * -2.0 + 0.6 * 3.0;
        let expect = 1.0 + 0.5 + 0.25 + 0.2 * h0 + 0.8 * h1;
        let got = m.predict_row("a", "x", &[0, 1, 2], &x);
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn unseen_entities_use_intercept_and_uniform_membership() {
        let mut m = hand_model();
        m.w.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(m.predict_row("new", "new", &[0], &[1.0]), 1.0);
        let m = hand_model();
        let expect = 1.0 + 0.5 * (0.1 + 0.4);
        assert!((m.predict_row("new", "new", &[0], &[1.0]) - expect).abs() < 1e-12);
    }

    #[test]
    fn single_model_without_content() {
        let m = PmlrModel {
            k: 1,
            n_cols: 0,
            w0: 2.0,
            student_bias: [("a".to_string(), 0.3)].into(),
            course_bias: [("x".to_string(), 0.4)].into(),
            membership: [("a".to_string(), vec![1.0])].into(),
            w: vec![],
        };
        assert!((m.predict_row("a", "x", &[], &[]) - 2.7).abs() < 1e-12);
    }

    #[test]
    fn recovers_planted_biases() {
        let s_true: Vec<f64> = (0..20).map(|i| (i % 5) as f64 * 0.2).collect();
        let c_true: Vec<f64> = (0..15).map(|j| (j % 4) as f64 * 0.25).collect();
        let mut ids = Vec::new();
        let mut y = Vec::new();
        for (i, s) in s_true.iter().enumerate() {
            for (j, c) in c_true.iter().enumerate() {
                ids.push((format!("s{i}"), format!("c{j}")));
                y.push(Some(1.5 + s + c));
            }
        }
        let rows = vec![Vec::new(); ids.len()];
        let m = with_ids(DesignMatrix::from_rows(&rows, 0, y), &ids);
        let cfg = PmlrConfig { epochs: 400, learning_rate: 0.01, ..PmlrConfig::default() };
        let fit = pmlr_fit(&m, &cfg, 1).unwrap();
        for (i, s) in s_true.iter().enumerate() {
            let got = fit.student_bias[&format!("s{i}")];
            assert!((got - s).abs() < 0.1, "student {i}: {got} vs {s}");
        }
        for (j, c) in c_true.iter().enumerate() {
            let got = fit.course_bias[&format!("c{j}")];
            assert!((got - c).abs() < 0.1, "course {j}: {got} vs {c}");
        }
    }

    #[test]
    fn zero_targets_drive_parameters_to_zero() {
        let ids: Vec<(String, String)> = (0..60).map(|i| (format!("s{}", i % 6), format!("c{}", i % 5))).collect();
        let rows: Vec<Vec<(u32, f64)>> = (0..60).map(|i| vec![(0, (i % 3) as f64 - 1.0), (1, 1.0)]).collect();
        let m = with_ids(DesignMatrix::from_rows(&rows, 2, vec![Some(0.0); 60]), &ids);
        let cfg = PmlrConfig { epochs: 300, learning_rate: 0.01, ..PmlrConfig::default() };
        let fit = pmlr_fit(&m, &cfg, 2).unwrap();
        assert!(fit.w0 < 1e-3);
        assert!(fit.student_bias.values().all(|v| *v < 1e-3));
        assert!(fit.course_bias.values().all(|v| *v < 1e-3));
        let pred = fit.predict(&m);
        assert!(pred.iter().all(|p| p.abs() < 1e-3));
    }

    #[test]
    fn nonnegative_after_every_epoch() {
        let ids: Vec<(String, String)> = (0..80).map(|i| (format!("s{}", i % 8), format!("c{}", i % 7))).collect();
        let rows: Vec<Vec<(u32, f64)>> = (0..80).map(|i| vec![(0, (i % 5) as f64 - 2.0), (1, -1.0)]).collect();
        let y: Vec<Option<f64>> = (0..80).map(|i| Some(((i * 3) % 5) as f64 * 0.8)).collect();
        let m = with_ids(DesignMatrix::from_rows(&rows, 2, y), &ids);
        let cfg = PmlrConfig { epochs: 30, learning_rate: 0.05, ..PmlrConfig::default() };
        let mut epochs = 0;
        pmlr_fit_observed(&m, &cfg, 3, |_, model| {
            epochs += 1;
            assert!(model.min_parameter() >= 0.0);
        })
        .unwrap();
        assert_eq!(epochs, 30);
    }

    #[test]
    fn rejects_zero_rank() {
        let m = DesignMatrix::from_rows(&[vec![]], 0, vec![Some(1.0)]);
        assert!(pmlr_fit(&m, &PmlrConfig { k: 0, ..PmlrConfig::default() }, 0).is_err());
    }
}
