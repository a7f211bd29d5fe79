//! Least-squares linear regression fit by stochastic updates under an L1
//! penalty (truncated-gradient shrinkage after each step).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub l1: f64,
    pub iterations: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            l1: 0.001,
            iterations: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, idx: &[u32], val: &[f64]) -> f64 {
        self.intercept + idx.iter().zip(val).map(|(c, v)| self.coef[*c as usize] * v).sum::<f64>()
    }

    pub fn predict(&self, m: &DesignMatrix) -> Vec<f64> {
        (0..m.n_rows())
            .map(|i| {
                let (idx, val) = m.row(i);
                self.predict_row(idx, val)
            })
            .collect()
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

pub fn sgd_fit(train: &DesignMatrix, config: &SgdConfig, seed: u64) -> Result<LinearModel> {
    if config.iterations == 0 {
        return Err(Error::InvalidConfig("sgd needs at least one iteration".into()));
    }
    if train.n_rows() == 0 {
        return Err(Error::EmptyTraining);
    }
    let y = train.labels()?;
    let mut model = LinearModel {
        intercept: y.iter().sum::<f64>() / y.len() as f64,
        coef: vec![0.0; train.n_cols],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let (lr, shrink) = (config.learning_rate, config.learning_rate * config.l1);
    for epoch in 0..config.iterations {
        order.shuffle(&mut rng);
        for &i in &order {
            let (idx, val) = train.row(i);
            let err = y[i] - model.predict_row(idx, val);
            model.intercept += lr * err;
            for (c, v) in idx.iter().zip(val) {
                let w = &mut model.coef[*c as usize];
                *w = soft_threshold(*w + lr * err * v, shrink);
            }
        }
        let total = model.intercept + model.coef.iter().sum::<f64>();
        super::check_finite(total, || format!("sgd epoch {epoch}"))?;
    }
    Ok(model)
}
