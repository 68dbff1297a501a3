//! Homophily statistics, the true compatibility matrix and classification
//! metrics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::compat::{CompatibilityMatrix, Normalization};
use crate::error::{ClpError, Result};
use crate::graph::Graph;
use crate::matrix::{argmax, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub edge_homophily: f64,
    pub node_homophily: f64,
    /// `(node, h_v)` for every node whose induced 1-hop subgraph has edges.
    pub per_node: Vec<(usize, f64)>,
}

pub fn homophily_report(graph: &Graph) -> Result<HomophilyReport> {
    let labels = graph.full_labels()?;
    let per_node = (0..graph.node_count())
        .filter_map(|v| local_homophily_with(graph, &labels, v).map(|h| (v, h)))
        .collect();
    Ok(HomophilyReport {
        edge_homophily: edge_homophily(graph)?,
        node_homophily: node_homophily(graph)?,
        per_node,
    })
}

/// Fraction of arcs joining nodes with the same label.
pub fn edge_homophily(graph: &Graph) -> Result<f64> {
    let labels = graph.full_labels()?;
    if graph.arc_count() == 0 {
        return Err(ClpError::Empty("graph has no edges".into()));
    }
    let same = graph.arcs().filter(|&(s, t)| labels[s] == labels[t]).count();
    Ok(same as f64 / graph.arc_count() as f64)
}

/// Mean over non-isolated nodes of the same-label neighbour fraction.
pub fn node_homophily(graph: &Graph) -> Result<f64> {
    let labels = graph.full_labels()?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for v in 0..graph.node_count() {
        let nbrs = graph.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let same = nbrs.iter().filter(|&&u| labels[u] == labels[v]).count();
        total += same as f64 / nbrs.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(ClpError::Empty("every node is isolated".into()));
    }
    Ok(total / counted as f64)
}

/// Same-label fraction of the arcs inside the subgraph induced by `v` and
/// its neighbours. `None` when that subgraph has no arcs.
pub fn local_homophily(graph: &Graph, v: usize) -> Result<Option<f64>> {
    if v >= graph.node_count() {
        return Err(ClpError::NodeOutOfRange {
            id: v,
            node_count: graph.node_count(),
        });
    }
    let labels = graph.full_labels()?;
    Ok(local_homophily_with(graph, &labels, v))
}

fn local_homophily_with(graph: &Graph, labels: &[usize], v: usize) -> Option<f64> {
    let mut members: HashSet<usize> = graph.neighbors(v).iter().copied().collect();
    members.insert(v);
    let mut total = 0usize;
    let mut same = 0usize;
    for &s in &members {
        for &t in graph.neighbors(s) {
            if members.contains(&t) {
                total += 1;
                if labels[s] == labels[t] {
                    same += 1;
                }
            }
        }
    }
    (total > 0).then(|| same as f64 / total as f64)
}

/// Row `i` is the fraction of arcs leaving class-`i` nodes that land on each
/// class. Classes without outgoing arcs get a uniform row and are listed in
/// `undefined_rows`.
pub fn true_compatibility(graph: &Graph) -> Result<CompatibilityMatrix> {
    let labels = graph.full_labels()?;
    let k = graph.num_classes();
    let mut counts = Matrix::zeros(k, k);
    for (s, t) in graph.arcs() {
        counts[(labels[s], labels[t])] += 1.0;
    }
    let mut undefined_rows = Vec::new();
    for i in 0..k {
        let row = counts.row_mut(i);
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            log::warn!("class {i} has no outgoing arcs; its compatibility row is set to uniform");
            row.fill(1.0 / k as f64);
            undefined_rows.push(i);
        } else {
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    Ok(CompatibilityMatrix {
        values: counts,
        normalization: Normalization::RowStochastic,
        deviation: None,
        undefined_rows,
    })
}

/// Frobenius distance between two compatibility matrices.
pub fn compat_distance(h: &CompatibilityMatrix, h_hat: &CompatibilityMatrix) -> Result<f64> {
    if h.values.shape() != h_hat.values.shape() {
        return Err(ClpError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            h.values.shape(),
            h_hat.values.shape()
        )));
    }
    let sq: f64 = h
        .values
        .as_slice()
        .iter()
        .zip(h_hat.values.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq.sqrt())
}

/// Fraction of `mask` nodes whose arg-max belief equals the label.
pub fn accuracy(beliefs: &Matrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(ClpError::Empty("accuracy mask".into()));
    }
    let correct = mask.iter().filter(|&&v| argmax(beliefs.row(v)) == labels[v]).count();
    Ok(correct as f64 / mask.len() as f64)
}

/// Area under the ROC curve over `mask`, counting ties as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool], mask: &[usize]) -> Result<f64> {
    let mut items: Vec<(f64, bool)> = mask.iter().map(|&v| (scores[v], labels[v])).collect();
    let n_pos = items.iter().filter(|(_, y)| *y).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ClpError::InvalidArgument("ROC-AUC needs both classes in the mask".into()));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney U from average ranks
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j + 1 < items.len() && items[j + 1].0 == items[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * items[i..=j].iter().filter(|(_, y)| *y).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub const BUCKET_COUNT: usize = 11;

/// Bucket index 0..=10 for a local homophily value, rounding half up.
pub fn bucket_of(h: f64) -> usize {
    ((h * 10.0 + 0.5 + 1e-9).floor() as usize).min(BUCKET_COUNT - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub level: f64,
    pub count: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketTable {
    pub buckets: Vec<Bucket>,
    /// Mask nodes whose local homophily is undefined.
    pub undefined: usize,
}

impl BucketTable {
    /// CSV with columns `bucket,count,accuracy`; empty buckets print `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket,count,accuracy\n");
        for b in &self.buckets {
            let acc = b.accuracy.map_or_else(|| "NA".to_string(), |a| format!("{a:.6}"));
            out.push_str(&format!("{:.1},{},{}\n", b.level, b.count, acc));
        }
        out.push_str(&format!("undefined,{},NA\n", self.undefined));
        out
    }
}

/// Accuracy of `beliefs` grouped by the local homophily of each mask node.
pub fn bucket_accuracy(beliefs: &Matrix, graph: &Graph, mask: &[usize]) -> Result<BucketTable> {
    let labels = graph.full_labels()?;
    let mut hits = [0usize; BUCKET_COUNT];
    let mut counts = [0usize; BUCKET_COUNT];
    let mut undefined = 0;
    for &v in mask {
        match local_homophily_with(graph, &labels, v) {
            Some(h) => {
                let b = bucket_of(h);
                counts[b] += 1;
                if argmax(beliefs.row(v)) == labels[v] {
                    hits[b] += 1;
                }
            }
            None => undefined += 1,
        }
    }
    let buckets = (0..BUCKET_COUNT)
        .map(|b| Bucket {
            level: b as f64 / 10.0,
            count: counts[b],
            accuracy: (counts[b] > 0).then(|| hits[b] as f64 / counts[b] as f64),
        })
        .collect();
    Ok(BucketTable { buckets, undefined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn graph(n: usize, edges: &[(usize, usize)], labels: &[usize], k: usize) -> Graph {
        Graph::with_labels(n, edges, Matrix::zeros(n, 1), labels, k, false).unwrap()
    }

    fn triangle() -> Graph {
        graph(3, &[(0, 1), (1, 2), (2, 0)], &[0, 0, 0], 1)
    }

    fn k22() -> Graph {
        graph(4, &[(0, 2), (0, 3), (1, 2), (1, 3)], &[0, 0, 1, 1], 2)
    }

    fn path4() -> Graph {
        graph(4, &[(0, 1), (1, 2), (2, 3)], &[0, 0, 1, 1], 2)
    }

    /// Counts by walking every ordered node pair.
    fn brute_edge_homophily(g: &Graph) -> f64 {
        let labels = g.full_labels().unwrap();
        let (mut same, mut total) = (0, 0);
        for s in 0..g.node_count() {
            for t in 0..g.node_count() {
                if g.out_arcs().contains(s, t) {
                    total += 1;
                    same += usize::from(labels[s] == labels[t]);
                }
            }
        }
        same as f64 / total as f64
    }

    #[test]
    fn homophily_examples() {
        assert_eq!(edge_homophily(&triangle()).unwrap(), 1.0);
        assert_eq!(edge_homophily(&k22()).unwrap(), 0.0);
        assert_abs_diff_eq!(edge_homophily(&path4()).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(brute_edge_homophily(&path4()), 2.0 / 3.0, epsilon = 1e-15);

        assert_eq!(node_homophily(&triangle()).unwrap(), 1.0);
        assert_eq!(node_homophily(&k22()).unwrap(), 0.0);
        assert_abs_diff_eq!(node_homophily(&path4()).unwrap(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn homophily_errors() {
        let empty = graph(2, &[], &[0, 1], 2);
        assert!(edge_homophily(&empty).is_err());
        assert!(node_homophily(&empty).is_err());
        let unlabelled = Graph::new(2, &[(0, 1)], Matrix::zeros(2, 1), None, 0, false).unwrap();
        assert!(matches!(edge_homophily(&unlabelled), Err(ClpError::MissingLabels(_))));
    }

    #[test]
    fn isolated_nodes_excluded_from_node_homophily() {
        let g = graph(3, &[(0, 1)], &[0, 0, 1], 2);
        assert_eq!(node_homophily(&g).unwrap(), 1.0);
    }

    #[test]
    fn local_homophily_examples() {
        let same = graph(4, &[(0, 1), (0, 2), (0, 3)], &[1, 1, 1, 1], 2);
        assert_eq!(local_homophily(&same, 0).unwrap(), Some(1.0));
        let opposite = graph(4, &[(0, 1), (0, 2), (0, 3)], &[1, 0, 0, 0], 2);
        assert_eq!(local_homophily(&opposite, 0).unwrap(), Some(0.0));
        let p = graph(3, &[(0, 1), (1, 2)], &[0, 0, 1], 2);
        assert_eq!(local_homophily(&p, 1).unwrap(), Some(0.5));
        let isolated = graph(2, &[], &[0, 0], 1);
        assert_eq!(local_homophily(&isolated, 0).unwrap(), None);
    }

    #[test]
    fn local_homophily_counts_neighbour_neighbour_edges() {
        // star centre 0 with leaves 1,2 (class 1) joined to each other
        let g = graph(3, &[(0, 1), (0, 2), (1, 2)], &[0, 1, 1], 2);
        assert_abs_diff_eq!(local_homophily(&g, 0).unwrap().unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn true_compatibility_examples() {
        let h = true_compatibility(&triangle()).unwrap();
        assert_eq!(h.values, Matrix::identity(1));
        let h = true_compatibility(&k22()).unwrap();
        assert_eq!(h.values.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        let h = true_compatibility(&path4()).unwrap();
        let expect = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in h.values.as_slice().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn class_without_arcs_gets_uniform_row() {
        let g = graph(3, &[(0, 1)], &[0, 0, 1], 2);
        let h = true_compatibility(&g).unwrap();
        assert_eq!(h.undefined_rows, vec![1]);
        assert_eq!(h.values.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn compat_distance_examples() {
        let id = CompatibilityMatrix::row_stochastic(Matrix::identity(2));
        let anti = CompatibilityMatrix::row_stochastic(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let half = CompatibilityMatrix::row_stochastic(Matrix::filled(2, 2, 0.5));
        assert_eq!(compat_distance(&id, &id).unwrap(), 0.0);
        assert_eq!(compat_distance(&id, &anti).unwrap(), 2.0);
        assert_eq!(compat_distance(&id, &half).unwrap(), 1.0);
        let three = CompatibilityMatrix::row_stochastic(Matrix::identity(3));
        assert!(compat_distance(&id, &three).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let labels = [0, 1, 1, 0];
        let b = crate::graph::one_hot(&labels, 2).unwrap();
        let all = [0, 1, 2, 3];
        assert_eq!(accuracy(&b, &labels, &all).unwrap(), 1.0);
        let flipped = [1, 0, 0, 1];
        assert_eq!(accuracy(&b, &flipped, &all).unwrap(), 0.0);
        let half = [0, 1, 0, 1];
        assert_eq!(accuracy(&b, &half, &all).unwrap(), 0.5);
        assert!(accuracy(&b, &labels, &[]).is_err());
        // ties resolve to class 0
        let tied = Matrix::filled(1, 2, 0.5);
        assert_eq!(accuracy(&tied, &[0], &[0]).unwrap(), 1.0);
    }

    /// Counts concordant positive/negative pairs directly.
    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn roc_auc_examples() {
        let all = [0, 1, 2, 3];
        let labels = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels, &all).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &labels, &all).unwrap(), 0.5);
        let scores = [0.1, 0.4, 0.35, 0.8];
        assert_eq!(brute_auc(&scores, &labels), 0.75);
        assert_eq!(roc_auc(&scores, &labels, &all).unwrap(), 0.75);
        assert!(roc_auc(&scores, &[true; 4], &all).is_err());
    }

    #[test]
    fn bucket_rounding() {
        assert_eq!(bucket_of(0.25), 3);
        assert_eq!(bucket_of(0.35), 4);
        assert_eq!(bucket_of(0.04), 0);
        assert_eq!(bucket_of(1.0), 10);
        assert_eq!(bucket_of(2.0 / 3.0), 7);
    }

    #[test]
    fn bucket_table_all_homophilous() {
        let g = triangle();
        let b = crate::graph::one_hot(&[0, 0, 0], 1).unwrap();
        let t = bucket_accuracy(&b, &g, &[0, 1, 2]).unwrap();
        assert_eq!(t.buckets.len(), 11);
        assert_eq!(t.buckets[10].count, 3);
        assert_eq!(t.buckets[10].accuracy, Some(1.0));
        assert!(t.buckets[..10].iter().all(|b| b.accuracy.is_none()));
        assert_eq!(t.to_csv().lines().count(), 13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = Graph> {
            (3usize..25).prop_flat_map(|n| {
                (
                    proptest::collection::vec((0..n, 0..n), 1..60),
                    proptest::collection::vec(0usize..3, n),
                )
                    .prop_map(move |(edges, labels)| graph(n, &edges, &labels, 3))
            })
        }

        proptest! {
            #[test]
            fn edge_homophily_matches_brute_force(g in arb_graph()) {
                prop_assume!(g.arc_count() > 0);
                let fast = edge_homophily(&g).unwrap();
                prop_assert!((fast - brute_edge_homophily(&g)).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&fast));
            }

            #[test]
            fn compatibility_rows_sum_to_one(g in arb_graph()) {
                let h = true_compatibility(&g).unwrap();
                for s in h.values.row_sums() {
                    prop_assert!((s - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn uniform_labels_are_fully_homophilous(n in 2usize..20, edges in proptest::collection::vec((0usize..20, 0usize..20), 1..40)) {
                let edges: Vec<_> = edges.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
                prop_assume!(!edges.is_empty());
                let g = graph(n, &edges, &vec![0; n], 1);
                prop_assert_eq!(edge_homophily(&g).unwrap(), 1.0);
                prop_assert_eq!(node_homophily(&g).unwrap(), 1.0);
                prop_assert_eq!(true_compatibility(&g).unwrap().values, Matrix::identity(1));
            }

            #[test]
            fn bipartite_flip_complements_edge_homophily(
                left in 1usize..8,
                right in 1usize..8,
                pairs in proptest::collection::vec((0usize..64, 0usize..64), 1..30),
                labels in proptest::collection::vec(0usize..2, 16),
            ) {
                let n = left + right;
                let edges: Vec<_> = pairs.into_iter().map(|(a, b)| (a % left, left + b % right)).collect();
                let base: Vec<usize> = labels[..n].to_vec();
                let flipped: Vec<usize> = base.iter().enumerate().map(|(v, &l)| if v < left { 1 - l } else { l }).collect();
                let h1 = edge_homophily(&graph(n, &edges, &base, 2)).unwrap();
                let h2 = edge_homophily(&graph(n, &edges, &flipped, 2)).unwrap();
                prop_assert!((h1 + h2 - 1.0).abs() < 1e-12);
            }

            #[test]
            fn accuracy_ignores_row_scaling(
                rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 1..20),
                scales in proptest::collection::vec(0.1f64..100.0, 20),
                labels in proptest::collection::vec(0usize..3, 20),
            ) {
                let b = Matrix::from_rows(&rows).unwrap();
                let mut scaled = b.clone();
                for i in 0..b.rows() {
                    scaled.row_mut(i).iter_mut().for_each(|x| *x *= scales[i]);
                }
                let mask: Vec<usize> = (0..b.rows()).collect();
                prop_assert_eq!(accuracy(&b, &labels, &mask).unwrap(), accuracy(&scaled, &labels, &mask).unwrap());
            }

            #[test]
            fn auc_invariant_under_monotone_map(
                scores in proptest::collection::vec(-5.0f64..5.0, 4..40),
                bits in proptest::collection::vec(any::<bool>(), 40),
            ) {
                let labels = &bits[..scores.len()];
                prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
                let mask: Vec<usize> = (0..scores.len()).collect();
                let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
                let a = roc_auc(&scores, labels, &mask).unwrap();
                prop_assert!((a - roc_auc(&mapped, labels, &mask).unwrap()).abs() < 1e-12);
                prop_assert!((a - brute_auc(&scores, labels)).abs() < 1e-12);
            }
        }
    }
}
