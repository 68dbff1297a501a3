//! Synthetic graphs with controlled homophily.
//!
//! Nodes are split into equal class blocks. Each unordered pair becomes an
//! undirected edge with probability `p_in` (same class) or `p_out`
//! (different classes), where `delta = p_in + (K - 1) p_out` and the
//! expected degree is `(n / K) delta`. Features are 2D Gaussians whose
//! means sit on a circle of radius 300.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ClpError, Result};
use crate::graph::{save_dataset, DatasetManifest, Graph};
use crate::matrix::Matrix;
use crate::metrics::edge_homophily;

/// Above this many nodes pairs are drawn per block instead of tested one by one.
pub const BERNOULLI_MAX_NODES: usize = 5000;
pub const FEATURE_RADIUS: f64 = 300.0;
pub const FEATURE_SCALE: f64 = 3500.0;
pub const FEATURE_AXES: (f64, f64) = (7.0, 2.0);
/// Class count the feature layout was designed for.
pub const REFERENCE_CLASSES: usize = 10;

/// Fractions of `delta` assigned to `p_in`; the endpoints avoid zero
/// probabilities.
pub const P_IN_GRID: [f64; 11] = [0.0001, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.9999];

const FEATURE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub target_avg_degree: f64,
    pub p_in_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeProbabilities {
    pub delta: f64,
    pub p_in: f64,
    pub p_out: f64,
}

impl SyntheticSpec {
    pub fn probabilities(&self) -> Result<EdgeProbabilities> {
        let (n, k) = (self.num_nodes, self.num_classes);
        if k < 2 {
            return Err(ClpError::InvalidArgument("need at least two classes".into()));
        }
        if n == 0 || n % k != 0 {
            return Err(ClpError::InvalidArgument(format!(
                "{n} nodes cannot be split into {k} equal classes"
            )));
        }
        if !(self.target_avg_degree > 0.0) {
            return Err(ClpError::InvalidArgument("average degree must be positive".into()));
        }
        let delta = self.target_avg_degree * k as f64 / n as f64;
        let p_in = self.p_in_fraction * delta;
        let p_out = (delta - p_in) / (k - 1) as f64;
        if !(p_in > 0.0) || !(p_out > 0.0) {
            return Err(ClpError::InvalidArgument(format!(
                "p_in = {p_in}, p_out = {p_out}; both must be positive"
            )));
        }
        if p_in > 1.0 || p_out > 1.0 {
            return Err(ClpError::InvalidArgument(format!(
                "p_in = {p_in}, p_out = {p_out} exceed 1; lower the degree or add nodes"
            )));
        }
        Ok(EdgeProbabilities { delta, p_in, p_out })
    }

    /// Expected edge homophily, `p_in / delta`.
    pub fn target_homophily(&self) -> f64 {
        self.p_in_fraction
    }

    pub fn class_size(&self) -> usize {
        self.num_nodes / self.num_classes
    }
}

/// Contiguous equal blocks: node `v` has class `v / (n / k)`.
pub fn block_labels(n: usize, k: usize) -> Vec<usize> {
    let size = n / k;
    (0..n).map(|v| v / size).collect()
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Edges `(u, v)` with `u < v` sampled between blocks `a <= b`.
fn sample_block(a: usize, b: usize, size: usize, p: f64, large: bool, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let (oa, ob) = (a * size, b * size);
    let mut edges = Vec::new();
    if !large {
        for i in 0..size {
            let start = if a == b { i + 1 } else { 0 };
            for j in start..size {
                if rng.gen::<f64>() < p {
                    edges.push((oa + i, ob + j));
                }
            }
        }
        return edges;
    }
    let pairs = if a == b { size * (size - 1) / 2 } else { size * size } as u64;
    if pairs == 0 {
        return edges;
    }
    let count = Binomial::new(pairs, p).expect("p is a probability").sample(rng) as usize;
    let mut seen = HashSet::with_capacity(count);
    while seen.len() < count {
        let i = rng.gen_range(0..size);
        let j = rng.gen_range(0..size);
        let pair = if a == b {
            if i == j {
                continue;
            }
            (oa + i.min(j), ob + i.max(j))
        } else {
            (oa + i, ob + j)
        };
        if seen.insert(pair) {
            edges.push(pair);
        }
    }
    edges.sort_unstable();
    edges
}

/// Labelled structure with one placeholder feature column.
pub fn generate_structure(spec: &SyntheticSpec) -> Result<Graph> {
    let probs = spec.probabilities()?;
    let (n, k) = (spec.num_nodes, spec.num_classes);
    let size = spec.class_size();
    let large = n > BERNOULLI_MAX_NODES;
    let blocks: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    let edges: Vec<(usize, usize)> = blocks
        .par_iter()
        .map(|&(a, b)| {
            let p = if a == b { probs.p_in } else { probs.p_out };
            let mut rng = block_rng(spec.seed, (a * k + b) as u64);
            sample_block(a, b, size, p, large, &mut rng)
        })
        .collect::<Vec<_>>()
        .concat();
    let labels = block_labels(n, k);
    Graph::with_labels(n, &edges, Matrix::zeros(n, 1), &labels, k, false)
}

/// Mean and covariance of class `c` out of `k`.
pub fn class_moments(c: usize, k: usize) -> ([f64; 2], [[f64; 2]; 2]) {
    let theta = 2.0 * PI * c as f64 / k as f64;
    let (s, co) = theta.sin_cos();
    let (l1, l2) = (FEATURE_SCALE * FEATURE_AXES.0, FEATURE_SCALE * FEATURE_AXES.1);
    let cov = [
        [co * co * l1 + s * s * l2, co * s * (l1 - l2)],
        [co * s * (l1 - l2), s * s * l1 + co * co * l2],
    ];
    ([FEATURE_RADIUS * co, FEATURE_RADIUS * s], cov)
}

fn standard_normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // 1 - U keeps the logarithm finite
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

/// One 2D Gaussian sample per node, drawn in node order.
pub fn gaussian_features(labels: &[usize], num_classes: usize, seed: u64) -> Result<Matrix> {
    if let Some(&bad) = labels.iter().find(|&&c| c >= num_classes) {
        return Err(ClpError::ClassOutOfRange {
            class: bad,
            num_classes,
        });
    }
    let factors: Vec<([f64; 2], [f64; 3])> = (0..num_classes)
        .map(|c| {
            let (mean, cov) = class_moments(c, num_classes);
            let l11 = cov[0][0].sqrt();
            let l21 = cov[1][0] / l11;
            let l22 = (cov[1][1] - l21 * l21).sqrt();
            (mean, [l11, l21, l22])
        })
        .collect();
    let mut rng = block_rng(seed, FEATURE_STREAM);
    let mut out = Matrix::zeros(labels.len(), 2);
    for (v, &c) in labels.iter().enumerate() {
        let (mean, [l11, l21, l22]) = factors[c];
        let (z1, z2) = standard_normal_pair(&mut rng);
        out[(v, 0)] = mean[0] + l11 * z1;
        out[(v, 1)] = mean[1] + l21 * z1 + l22 * z2;
    }
    Ok(out)
}

/// What was asked for and what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub spec: SyntheticSpec,
    pub delta: f64,
    pub p_in: f64,
    pub p_out: f64,
    pub target_homophily: f64,
    pub edge_homophily: f64,
    /// Arcs per node.
    pub avg_degree: f64,
    pub arc_count: usize,
    /// Feature layout extrapolated beyond ten classes.
    pub generalized_features: bool,
}

/// Structure, features and labels.
pub fn generate(spec: &SyntheticSpec) -> Result<(Graph, SyntheticSummary)> {
    let probs = spec.probabilities()?;
    let graph = generate_structure(spec)?;
    let labels = graph.full_labels()?;
    let features = gaussian_features(&labels, spec.num_classes, spec.seed)?;
    let graph = graph.with_features(features)?;
    let summary = SyntheticSummary {
        spec: *spec,
        delta: probs.delta,
        p_in: probs.p_in,
        p_out: probs.p_out,
        target_homophily: spec.target_homophily(),
        edge_homophily: if graph.arc_count() > 0 { edge_homophily(&graph)? } else { f64::NAN },
        avg_degree: graph.arc_count() as f64 / graph.node_count() as f64,
        arc_count: graph.arc_count(),
        generalized_features: spec.num_classes != REFERENCE_CLASSES,
    };
    if summary.generalized_features {
        log::warn!(
            "feature layout generalized from {REFERENCE_CLASSES} to {} classes",
            spec.num_classes
        );
    }
    Ok((graph, summary))
}

/// Generates and writes the dataset files, recording the summary in the manifest.
pub fn generate_to_dir(spec: &SyntheticSpec, dir: &Path) -> Result<(DatasetManifest, SyntheticSummary)> {
    let (graph, summary) = generate(spec)?;
    let manifest = save_dataset(&graph, dir, Some(serde_json::to_value(&summary)?))?;
    Ok((manifest, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Syn1,
    Syn2,
    Syn3,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Syn1, Preset::Syn2, Preset::Syn3];
    pub const FULL_NODES: usize = 10_000;
    pub const CLASSES: usize = 10;

    pub fn avg_degree(self) -> f64 {
        match self {
            Preset::Syn1 => 5.0,
            Preset::Syn2 => 10.0,
            Preset::Syn3 => 15.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Syn1 => "syn1",
            Preset::Syn2 => "syn2",
            Preset::Syn3 => "syn3",
        }
    }

    /// Node count at `scale`, rounded to a multiple of the class count.
    pub fn num_nodes(self, scale: f64) -> Result<usize> {
        if !(scale > 0.0) {
            return Err(ClpError::InvalidArgument(format!("scale {scale} must be positive")));
        }
        let blocks = (Self::FULL_NODES as f64 * scale / Self::CLASSES as f64).round() as usize;
        if blocks < 2 {
            return Err(ClpError::InvalidArgument(format!("scale {scale} leaves too few nodes")));
        }
        Ok(blocks * Self::CLASSES)
    }

    pub fn spec(self, scale: f64, p_in_fraction: f64, seed: u64) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            num_nodes: self.num_nodes(scale)?,
            num_classes: Self::CLASSES,
            target_avg_degree: self.avg_degree(),
            p_in_fraction,
            seed,
        })
    }

    /// One spec per point of [`P_IN_GRID`].
    pub fn sweep(self, scale: f64, seed: u64) -> Result<Vec<SyntheticSpec>> {
        P_IN_GRID.iter().map(|&f| self.spec(scale, f, seed)).collect()
    }
}

impl std::str::FromStr for Preset {
    type Err = ClpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "syn1" => Ok(Preset::Syn1),
            "syn2" => Ok(Preset::Syn2),
            "syn3" => Ok(Preset::Syn3),
            other => Err(ClpError::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}
