//! Second-order factorization machine with Gibbs-sampling inference.
//!
//! The sampler follows the standard Bayesian FM construction: Gaussian
//! likelihood with a Gamma prior on the noise precision, and for each
//! parameter group ({w0}, {w}, and every factor column of V) a Gaussian prior
//! whose mean and precision are resampled every sweep from a
//! Normal-Gamma hyperprior. Because every parameter enters the model
//! linearly given the others, each full conditional is Gaussian and the
//! residuals can be updated in place.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoding::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmModel {
    pub w0: f64,
    pub w: Vec<f64>,
    /// Factor rows, `p × k` row-major.
    pub v: Vec<f64>,
    pub k: usize,
}

impl FmModel {
    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            w0: 0.0,
            w: vec![0.0; p],
            v: vec![0.0; p * k],
            k,
        }
    }

    pub fn n_features(&self) -> usize {
        self.w.len()
    }

    pub fn factor(&self, l: usize) -> &[f64] {
        &self.v[l * self.k..(l + 1) * self.k]
    }

    pub fn factor_mut(&mut self, l: usize) -> &mut [f64] {
        let k = self.k;
        &mut self.v[l * k..(l + 1) * k]
    }

    /// Pairwise interaction weight `v_a · v_b`.
    pub fn pairwise(&self, a: usize, b: usize) -> f64 {
        super::dot(self.factor(a), self.factor(b))
    }

    /// Raw prediction in O(k · nnz) via
    /// `Σ_{a<b} x_a x_b v_a·v_b = ½ Σ_f [(Σ_l v_lf x_l)² − Σ_l v_lf² x_l²]`.
    pub fn predict_row(&self, idx: &[u32], val: &[f64]) -> f64 {
        let mut y = self.w0;
        for (&l, &x) in idx.iter().zip(val) {
            y += self.w[l as usize] * x;
        }
        let mut pair = 0.0;
        for f in 0..self.k {
            let (mut s, mut sq) = (0.0, 0.0);
            for (&l, &x) in idx.iter().zip(val) {
                let t = self.v[l as usize * self.k + f] * x;
                s += t;
                sq += t * t;
            }
            pair += s * s - sq;
        }
        y + 0.5 * pair
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

pub fn fm_predict(model: &FmModel, idx: &[u32], val: &[f64]) -> f64 {
    model.predict_row(idx, val)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FmConfig {
    pub k: usize,
    pub iterations: usize,
    pub init_std: f64,
    /// Sweeps discarded before averaging; defaults to half of `iterations`.
    pub burn_in: Option<usize>,
}

impl Default for FmConfig {
    fn default() -> Self {
        Self {
            k: 8,
            iterations: 200,
            init_std: 0.2,
            burn_in: None,
        }
    }
}

impl FmConfig {
    fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 2).min(self.iterations.saturating_sub(1))
    }
}

// Hyperprior constants: noise precision ~ Gamma(1, 1); group precision
// ~ Gamma(1, 1); group mean ~ N(0, 1 / (γ λ)) with γ = 1.
const ALPHA0: f64 = 1.0;
const BETA0: f64 = 1.0;
const ALPHA_LAMBDA: f64 = 1.0;
const BETA_LAMBDA: f64 = 1.0;
const GAMMA0: f64 = 1.0;
const MU0: f64 = 0.0;

#[derive(Debug, Clone)]
pub struct FmFit {
    /// Posterior mean of the parameters over the retained sweeps.
    pub model: FmModel,
    /// Posterior predictive mean for the `test` matrix passed to [`fm_fit`].
    pub test_predictions: Option<Vec<f64>>,
    pub draws: usize,
}

/// Column-major view of the training matrix.
struct Columns {
    ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<f64>,
}

impl Columns {
    fn from_csr(m: &DesignMatrix) -> Self {
        let p = m.n_cols;
        let mut counts = vec![0usize; p + 1];
        for &c in &m.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..p {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut rows = vec![0u32; m.indices.len()];
        let mut vals = vec![0.0; m.indices.len()];
        for i in 0..m.n_rows() {
            let (idx, val) = m.row(i);
            for (&c, &x) in idx.iter().zip(val) {
                let at = fill[c as usize];
                rows[at] = i as u32;
                vals[at] = x;
                fill[c as usize] += 1;
            }
        }
        Self { ptr: counts, rows, vals }
    }

    fn col(&self, c: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.ptr[c], self.ptr[c + 1]);
        (&self.rows[a..b], &self.vals[a..b])
    }
}

struct Hyper {
    mean: f64,
    precision: f64,
}

fn gamma(rng: &mut ChaCha8Rng, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng)
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Resample the Normal-Gamma hyperparameters of a parameter group.
fn sample_hyper(rng: &mut ChaCha8Rng, values: impl Iterator<Item = f64> + Clone, current_mean: f64) -> Hyper {
    let n = values.clone().count() as f64;
    let sq: f64 = values.clone().map(|x| (x - current_mean).powi(2)).sum();
    let precision = gamma(
        rng,
        (ALPHA_LAMBDA + n + 1.0) / 2.0,
        (BETA_LAMBDA + sq + GAMMA0 * (current_mean - MU0).powi(2)) / 2.0,
    );
    let sum: f64 = values.sum();
    let mean = (sum + GAMMA0 * MU0) / (n + GAMMA0) + std_normal(rng) / ((n + GAMMA0) * precision).sqrt();
    Hyper { mean, precision }
}

/// Draw a parameter from its Gaussian full conditional given
/// `Σ h²` and `Σ h (r + θ h)` where `r = y − ŷ`.
fn draw(rng: &mut ChaCha8Rng, alpha: f64, sum_hh: f64, sum_hr: f64, prior: &Hyper) -> f64 {
    let precision = alpha * sum_hh + prior.precision;
    let mean = (alpha * sum_hr + prior.precision * prior.mean) / precision;
    mean + std_normal(rng) / precision.sqrt()
}

pub fn fm_fit(train: &DesignMatrix, config: &FmConfig, seed: u64, test: Option<&DesignMatrix>) -> Result<FmFit> {
    if train.n_rows() == 0 {
        return Err(Error::EmptyTraining);
    }
    if config.k == 0 || config.iterations == 0 {
        return Err(Error::InvalidConfig("fm needs k ≥ 1 and at least one iteration".into()));
    }
    if let Some(t) = test {
        if t.n_cols != train.n_cols {
            return Err(Error::InvalidConfig("test matrix width differs from training".into()));
        }
    }
    let y = train.labels()?;
    let n = y.len();
    let p = train.n_cols;
    let k = config.k;
    let cols = Columns::from_csr(train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut model = FmModel::zeros(p, k);
    for x in model.v.iter_mut() {
        *x = config.init_std * std_normal(&mut rng);
    }
    let mut resid: Vec<f64> = (0..n)
        .map(|i| {
            let (idx, val) = train.row(i);
            y[i] - model.predict_row(idx, val)
        })
        .collect();
    let mut q = vec![0.0; n];

    let mut w0_hyper = Hyper { mean: 0.0, precision: 1.0 };
    let mut w_hyper = Hyper { mean: 0.0, precision: 1.0 };
    let mut v_hyper: Vec<Hyper> = (0..k).map(|_| Hyper { mean: 0.0, precision: 1.0 }).collect();

    let burn_in = config.burn_in();
    let mut mean_model = FmModel::zeros(p, k);
    let mut test_sum = test.map(|t| vec![0.0; t.n_rows()]);
    let mut draws = 0usize;

    for sweep in 0..config.iterations {
        let sse: f64 = resid.iter().map(|r| r * r).sum();
        let alpha = gamma(&mut rng, (ALPHA0 + n as f64) / 2.0, (BETA0 + sse) / 2.0);
        if !alpha.is_finite() || !sse.is_finite() {
            return Err(Error::NonFinite(format!("fm gibbs sweep {sweep}: noise precision")));
        }

        // Intercept.
        w0_hyper = sample_hyper(&mut rng, std::iter::once(model.w0), w0_hyper.mean);
        let sum_r: f64 = resid.iter().sum();
        let old = model.w0;
        model.w0 = draw(&mut rng, alpha, n as f64, sum_r + old * n as f64, &w0_hyper);
        let delta = model.w0 - old;
        resid.iter_mut().for_each(|r| *r -= delta);

        // 1-way weights.
        w_hyper = sample_hyper(&mut rng, model.w.iter().copied(), w_hyper.mean);
        for l in 0..p {
            let (rows, xs) = cols.col(l);
            let old = model.w[l];
            let (mut hh, mut hr) = (0.0, 0.0);
            for (&i, &x) in rows.iter().zip(xs) {
                hh += x * x;
                hr += x * (resid[i as usize] + old * x);
            }
            let new = draw(&mut rng, alpha, hh, hr, &w_hyper);
            model.w[l] = new;
            let delta = new - old;
            for (&i, &x) in rows.iter().zip(xs) {
                resid[i as usize] -= delta * x;
            }
        }

        // Factor columns.
        for f in 0..k {
            v_hyper[f] = sample_hyper(&mut rng, (0..p).map(|l| model.v[l * k + f]), v_hyper[f].mean);
            for (i, qi) in q.iter_mut().enumerate() {
                let (idx, val) = train.row(i);
                *qi = idx.iter().zip(val).map(|(&l, &x)| model.v[l as usize * k + f] * x).sum();
            }
            for l in 0..p {
                let (rows, xs) = cols.col(l);
                let old = model.v[l * k + f];
                let (mut hh, mut hr) = (0.0, 0.0);
                for (&i, &x) in rows.iter().zip(xs) {
                    let h = x * (q[i as usize] - old * x);
                    hh += h * h;
                    hr += h * (resid[i as usize] + old * h);
                }
                let new = draw(&mut rng, alpha, hh, hr, &v_hyper[f]);
                model.v[l * k + f] = new;
                let delta = new - old;
                for (&i, &x) in rows.iter().zip(xs) {
                    let i = i as usize;
                    let h = x * (q[i] - old * x);
                    resid[i] -= delta * h;
                    q[i] += delta * x;
                }
            }
        }

        if !model.w0.is_finite() || resid.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("fm gibbs sweep {sweep}: parameters")));
        }

        if sweep >= burn_in {
            draws += 1;
            mean_model.w0 += model.w0;
            mean_model.w.iter_mut().zip(&model.w).for_each(|(a, b)| *a += b);
            mean_model.v.iter_mut().zip(&model.v).for_each(|(a, b)| *a += b);
            if let (Some(t), Some(sum)) = (test, test_sum.as_mut()) {
                for (i, s) in sum.iter_mut().enumerate() {
                    let (idx, val) = t.row(i);
                    *s += model.predict_row(idx, val);
                }
            }
        }
    }

    let scale = 1.0 / draws as f64;
    mean_model.w0 *= scale;
    mean_model.w.iter_mut().for_each(|x| *x *= scale);
    mean_model.v.iter_mut().for_each(|x| *x *= scale);
    let test_predictions = test_sum.map(|s| s.into_iter().map(|x| x * scale).collect());
    Ok(FmFit {
        model: mean_model,
        test_predictions,
        draws,
    })
}
