//! Uniformly weighted k-nearest-neighbor regression over dense rows.

use serde::{Deserialize, Serialize};

use crate::encoding::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborModel {
    pub k: usize,
    pub n_cols: usize,
    /// Row-major training rows.
    pub rows: Vec<f64>,
    pub targets: Vec<f64>,
}

pub fn knn_fit(train: &DesignMatrix, k: usize) -> Result<NeighborModel> {
    if k == 0 {
        return Err(Error::InvalidConfig("knn needs k ≥ 1".into()));
    }
    if train.n_rows() == 0 {
        return Err(Error::EmptyTraining);
    }
    Ok(NeighborModel {
        k,
        n_cols: train.n_cols,
        rows: train.dense(),
        targets: train.labels()?,
    })
}

impl NeighborModel {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Mean target of the `k` closest training rows (fewer if the model is
    /// smaller). Equal distances are ordered by training position.
    pub fn predict_dense(&self, query: &[f64]) -> f64 {
        let k = self.k.min(self.len());
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.n_cols.max(1))
            .take(self.len())
            .enumerate()
            .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, order);
        }
        dist[..k].sort_unstable_by(order);
        dist[..k].iter().map(|(_, i)| self.targets[*i]).sum::<f64>() / k as f64
    }

    pub fn predict(&self, m: &DesignMatrix) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::EmptyTraining);
        }
        let mut buf = vec![0.0; self.n_cols];
        Ok((0..m.n_rows())
            .map(|i| {
                buf.iter_mut().for_each(|x| *x = 0.0);
                let (idx, val) = m.row(i);
                for (c, v) in idx.iter().zip(val) {
                    buf[*c as usize] = *v;
                }
                self.predict_dense(&buf)
            })
            .collect())
    }
}
