//! Random forest regression on histogram-binned features.
//!
//! Features with at most `MAX_BINS` distinct training values are split
//! exactly; wider features are cut at training quantiles.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::DesignMatrix;
use crate::error::{Error, Result};

const MAX_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features examined per split; defaults to ⌈p/3⌉.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub seed: u64,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_dense(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub max_depth: usize,
    pub max_features: usize,
    pub n_cols: usize,
    /// Training mean; the whole prediction when `max_depth` is zero.
    pub mean: f64,
    /// Squared-error reduction summed over every split on each column,
    /// averaged over trees.
    pub split_gain: Vec<f64>,
}

impl ForestModel {
    pub fn predict_dense(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return self.mean;
        }
        self.trees.iter().map(|t| t.predict_dense(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, m: &DesignMatrix) -> Vec<f64> {
        let dense = m.dense();
        (0..m.n_rows())
            .into_par_iter()
            .map(|i| self.predict_dense(&dense[i * m.n_cols..(i + 1) * m.n_cols]))
            .collect()
    }
}

struct Binned {
    n: usize,
    /// Column-major bin codes.
    codes: Vec<u16>,
    /// Per column: upper edges; bin b holds values ≤ cuts[b], the last bin the rest.
    cuts: Vec<Vec<f64>>,
}

fn column_cuts(values: &mut [f64]) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut uniq: Vec<f64> = values.to_vec();
    uniq.dedup();
    if uniq.len() <= MAX_BINS {
        uniq.pop();
        return uniq;
    }
    let mut cuts: Vec<f64> = (1..MAX_BINS)
        .map(|b| values[b * values.len() / MAX_BINS])
        .collect();
    cuts.dedup();
    if cuts.last() == uniq.last() {
        cuts.pop();
    }
    cuts
}

fn bin(dense: &[f64], n: usize, p: usize) -> Binned {
    let mut codes = vec![0u16; n * p];
    let mut cuts = Vec::with_capacity(p);
    let mut col = vec![0.0; n];
    for c in 0..p {
        for i in 0..n {
            col[i] = dense[i * p + c];
        }
        let edges = column_cuts(&mut col.clone());
        for i in 0..n {
            codes[c * n + i] = edges.partition_point(|e| *e < col[i]) as u16;
        }
        cuts.push(edges);
    }
    Binned { n, codes, cuts }
}

struct Builder<'a> {
    data: &'a Binned,
    y: &'a [f64],
    config: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
    gain: Vec<f64>,
    rng: ChaCha8Rng,
}

struct Best {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl Builder<'_> {
    fn build(&mut self, samples: &mut [u32], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let (sum, count) = samples.iter().fold((0.0, 0usize), |(s, n), &i| (s + self.y[i as usize], n + 1));
        let mean = sum / count as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= self.config.max_depth || count < self.config.min_samples_split.max(2) {
            return id;
        }
        let Some(best) = self.best_split(samples, sum, count) else {
            return id;
        };
        let codes = &self.data.codes[best.feature * self.data.n..(best.feature + 1) * self.data.n];
        let mut lo = 0;
        for j in 0..samples.len() {
            if (codes[samples[j] as usize] as usize) <= best.bin {
                samples.swap(lo, j);
                lo += 1;
            }
        }
        self.gain[best.feature] += best.gain;
        let (left_s, right_s) = samples.split_at_mut(lo);
        let left = self.build(left_s, depth + 1);
        let right = self.build(right_s, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: best.feature as u32,
            threshold: self.data.cuts[best.feature][best.bin],
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, samples: &[u32], sum: f64, count: usize) -> Option<Best> {
        let p = self.data.cuts.len();
        let mut features = sample(&mut self.rng, p, self.mtry).into_vec();
        features.sort_unstable();
        let parent = sum * sum / count as f64;
        let mut best: Option<Best> = None;
        let mut hist_s = Vec::new();
        let mut hist_n = Vec::new();
        for f in features {
            let n_bins = self.data.cuts[f].len() + 1;
            if n_bins < 2 {
                continue;
            }
            hist_s.clear();
            hist_s.resize(n_bins, 0.0);
            hist_n.clear();
            hist_n.resize(n_bins, 0usize);
            let codes = &self.data.codes[f * self.data.n..(f + 1) * self.data.n];
            for &i in samples {
                let b = codes[i as usize] as usize;
                hist_s[b] += self.y[i as usize];
                hist_n[b] += 1;
            }
            let (mut ls, mut ln) = (0.0, 0usize);
            for b in 0..n_bins - 1 {
                ls += hist_s[b];
                ln += hist_n[b];
                if ln == 0 || ln == count {
                    continue;
                }
                let rs = sum - ls;
                let rn = count - ln;
                let gain = ls * ls / ln as f64 + rs * rs / rn as f64 - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|bb| gain > bb.gain) {
                    best = Some(Best { gain, feature: f, bin: b });
                }
            }
        }
        best
    }
}

pub fn rf_fit(train: &DesignMatrix, config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::EmptyTraining);
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("forest needs at least one tree".into()));
    }
    let y = train.labels()?;
    let p = train.n_cols;
    let mtry = config.max_features.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1));
    let mean = y.iter().sum::<f64>() / n as f64;
    if config.max_depth == 0 || p == 0 {
        return Ok(ForestModel {
            trees: Vec::new(),
            max_depth: config.max_depth,
            max_features: mtry,
            n_cols: p,
            mean,
            split_gain: vec![0.0; p],
        });
    }
    let data = bin(&train.dense(), n, p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..config.n_trees).map(|_| rng.random()).collect();
    let grown: Vec<(Tree, Vec<f64>)> = seeds
        .par_iter()
        .map(|&s| {
            let mut b = Builder {
                data: &data,
                y: &y,
                config,
                mtry,
                nodes: Vec::new(),
                gain: vec![0.0; p],
                rng: ChaCha8Rng::seed_from_u64(s),
            };
            let mut samples: Vec<u32> = (0..n).map(|_| b.rng.random_range(0..n as u32)).collect();
            b.build(&mut samples, 0);
            (Tree { seed: s, nodes: b.nodes }, b.gain)
        })
        .collect();
    let mut split_gain = vec![0.0; p];
    for (_, g) in &grown {
        split_gain.iter_mut().zip(g).for_each(|(a, b)| *a += b / config.n_trees as f64);
    }
    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        max_depth: config.max_depth,
        max_features: mtry,
        n_cols: p,
        mean,
        split_gain,
    })
}
