//! Prior beliefs and estimation of the class compatibility matrix.
//!
//! The estimate counts, for every training node of class `i`, the prior
//! belief mass of its neighbours in each class `j`, then balances the count
//! matrix to a doubly stochastic one with Sinkhorn-Knopp.

use serde::{Deserialize, Serialize};

use crate::error::{ClpError, Result};
use crate::graph::Graph;
use crate::matrix::{argmax, Matrix};

/// Relative floor added to every raw score before balancing.
pub const FLOOR_EPSILON: f64 = 1e-8;
pub const SINKHORN_TOL: f64 = 1e-9;
pub const SINKHORN_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefKind {
    BasePrediction,
    Prior,
    Propagated,
}

/// Per-node class scores, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    pub values: Matrix,
    pub kind: BeliefKind,
}

impl Beliefs {
    /// Wraps `values`, checking row sums for base predictions and priors.
    pub fn new(values: Matrix, kind: BeliefKind) -> Result<Self> {
        match kind {
            BeliefKind::BasePrediction | BeliefKind::Prior => {
                for (i, row) in values.iter_rows().enumerate() {
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-9 || row.iter().any(|&x| x < 0.0) {
                        return Err(ClpError::InvalidArgument(format!(
                            "row {i} of {kind:?} beliefs is not a probability vector (sum {s})"
                        )));
                    }
                }
            }
            BeliefKind::Propagated => {
                if values.as_slice().iter().any(|x| !x.is_finite()) {
                    return Err(ClpError::InvalidArgument("propagated beliefs are not finite".into()));
                }
            }
        }
        Ok(Self { values, kind })
    }

    pub fn node_count(&self) -> usize {
        self.values.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.cols()
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.values.argmax_rows()
    }

    /// Rows rescaled to sum to one; all-zero rows become uniform.
    pub fn renormalized(&self) -> Matrix {
        let k = self.values.cols();
        let mut out = self.values.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|x| *x /= s);
            } else {
                row.fill(1.0 / k as f64);
            }
        }
        out
    }

    /// TSV with `node_id`, the renormalized class probabilities and the
    /// arg-max class (taken before renormalization).
    pub fn to_tsv(&self) -> String {
        let labels = self.argmax();
        let probs = self.renormalized();
        let mut out = String::new();
        for (v, row) in probs.iter_rows().enumerate() {
            debug_assert_eq!(argmax(row), labels[v]);
            out.push_str(&v.to_string());
            for x in row {
                out.push_str(&format!("\t{x:.10}"));
            }
            out.push_str(&format!("\t{}\n", labels[v]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    RowStochastic,
    DoublyStochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityMatrix {
    pub values: Matrix,
    pub normalization: Normalization,
    /// Largest row/column sum deviation left by Sinkhorn-Knopp.
    pub deviation: Option<f64>,
    /// Rows that had no supporting data.
    pub undefined_rows: Vec<usize>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    normalization: Normalization,
    deviation: Option<f64>,
    undefined_rows: &'a [usize],
}

impl CompatibilityMatrix {
    pub fn row_stochastic(values: Matrix) -> Self {
        Self {
            values,
            normalization: Normalization::RowStochastic,
            deviation: None,
            undefined_rows: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.values.rows()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.iter_rows() {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            normalization: self.normalization,
            deviation: self.deviation,
            undefined_rows: &self.undefined_rows,
        })?)
    }
}

/// Training rows become their one-hot label; all other rows keep the base
/// prediction.
pub fn prior_beliefs(d_hat: &Beliefs, y_onehot: &Matrix, train: &[usize]) -> Result<Beliefs> {
    if d_hat.values.shape() != y_onehot.shape() {
        return Err(ClpError::DimensionMismatch(format!(
            "base predictions {:?} vs labels {:?}",
            d_hat.values.shape(),
            y_onehot.shape()
        )));
    }
    let mut values = d_hat.values.clone();
    for &v in train {
        if v >= values.rows() {
            return Err(ClpError::NodeOutOfRange {
                id: v,
                node_count: values.rows(),
            });
        }
        values.row_mut(v).copy_from_slice(y_onehot.row(v));
    }
    Beliefs::new(values, BeliefKind::Prior)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOutcome {
    pub matrix: Matrix,
    /// Max |row sum - 1| or |column sum - 1| at exit.
    pub deviation: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn marginal_deviation(m: &Matrix) -> f64 {
    m.row_sums()
        .into_iter()
        .chain(m.col_sums())
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Alternating row then column normalization until every marginal is
/// within `tol` of one. Not reaching `tol` is reported through
/// `converged = false`, not as an error.
pub fn sinkhorn_knopp(m: &Matrix, tol: f64, max_iters: usize) -> Result<SinkhornOutcome> {
    let n = m.rows();
    if m.cols() != n {
        return Err(ClpError::DimensionMismatch(format!("{n}x{} is not square", m.cols())));
    }
    if m.as_slice().iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(ClpError::InvalidArgument("Sinkhorn input must be finite and nonnegative".into()));
    }
    let mut x = m.clone();
    let mut deviation = marginal_deviation(&x);
    let mut iterations = 0;
    while deviation >= tol && iterations < max_iters {
        for i in 0..n {
            let row = x.row_mut(i);
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        let cols = x.col_sums();
        for i in 0..n {
            for (v, &s) in x.row_mut(i).iter_mut().zip(&cols) {
                if s > 0.0 {
                    *v /= s;
                }
            }
        }
        iterations += 1;
        deviation = marginal_deviation(&x);
    }
    let converged = deviation < tol;
    if !converged {
        log::warn!("Sinkhorn-Knopp stopped after {iterations} iterations at deviation {deviation:e}");
    }
    Ok(SinkhornOutcome {
        matrix: x,
        deviation,
        iterations,
        converged,
    })
}

/// Raw class-to-class scores: row `i` sums the prior beliefs of the
/// out-neighbours of every training node labelled `i`.
pub fn raw_compatibility_scores(graph: &Graph, b0: &Beliefs, y_onehot: &Matrix, train: &[usize]) -> Result<Matrix> {
    let k = b0.num_classes();
    if b0.node_count() != graph.node_count() || y_onehot.shape() != b0.values.shape() {
        return Err(ClpError::DimensionMismatch(format!(
            "graph has {} nodes, beliefs {:?}, labels {:?}",
            graph.node_count(),
            b0.values.shape(),
            y_onehot.shape()
        )));
    }
    let mut raw = Matrix::zeros(k, k);
    for &u in train {
        let y = y_onehot.row(u);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for &w in graph.neighbors(u) {
                for (r, &b) in raw.row_mut(i).iter_mut().zip(b0.values.row(w)) {
                    *r += yi * b;
                }
            }
        }
    }
    Ok(raw)
}

/// Doubly stochastic compatibility estimate from sparse training labels.
pub fn estimate_compatibility(
    graph: &Graph,
    b0: &Beliefs,
    y_onehot: &Matrix,
    train: &[usize],
    tol: f64,
) -> Result<CompatibilityMatrix> {
    if train.is_empty() {
        return Err(ClpError::Empty("training set".into()));
    }
    let mut raw = raw_compatibility_scores(graph, b0, y_onehot, train)?;
    let k = raw.rows();

    let mut undefined_rows = Vec::new();
    for i in 0..k {
        if raw.row(i).iter().all(|&x| x == 0.0) {
            undefined_rows.push(i);
        }
    }
    if !undefined_rows.is_empty() {
        log::warn!("classes {undefined_rows:?} have no training evidence; their compatibility rows are near-uniform");
    }

    let max = raw.max_value();
    let floor = FLOOR_EPSILON * if max > 0.0 { max } else { 1.0 };
    raw.as_mut_slice().iter_mut().for_each(|x| *x += floor);

    let out = sinkhorn_knopp(&raw, tol, SINKHORN_MAX_ITERS)?;
    Ok(CompatibilityMatrix {
        values: out.matrix,
        normalization: Normalization::DoublyStochastic,
        deviation: Some(out.deviation),
        undefined_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::one_hot;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform(n: usize, k: usize) -> Beliefs {
        Beliefs::new(Matrix::filled(n, k, 1.0 / k as f64), BeliefKind::BasePrediction).unwrap()
    }

    #[test]
    fn prior_beliefs_examples() {
        let d = Beliefs::new(Matrix::filled(1, 3, 1.0 / 3.0), BeliefKind::BasePrediction).unwrap();
        let b = prior_beliefs(&d, &one_hot(&[2], 3).unwrap(), &[0]).unwrap();
        assert_eq!(b.values.row(0), &[0.0, 0.0, 1.0]);

        let d = Beliefs::new(Matrix::from_rows(&[[0.4, 0.6]]).unwrap(), BeliefKind::BasePrediction).unwrap();
        let b = prior_beliefs(&d, &one_hot(&[0], 2).unwrap(), &[]).unwrap();
        assert_eq!(b.values.row(0), &[0.4, 0.6]);

        let b = prior_beliefs(&uniform(3, 2), &one_hot(&[0, 1, 1], 2).unwrap(), &[0]).unwrap();
        assert_eq!(b.values.as_slice(), &[1.0, 0.0, 0.5, 0.5, 0.5, 0.5]);
        assert_eq!(b.kind, BeliefKind::Prior);

        assert!(prior_beliefs(&uniform(3, 2), &one_hot(&[0, 1], 2).unwrap(), &[0]).is_err());
    }

    #[test]
    fn prior_beliefs_idempotent() {
        let d = uniform(4, 3);
        let y = one_hot(&[0, 1, 2, 0], 3).unwrap();
        let once = prior_beliefs(&d, &y, &[1, 3]).unwrap();
        let twice = prior_beliefs(&once, &y, &[1, 3]).unwrap();
        assert_eq!(once.values, twice.values);
    }

    #[test]
    fn base_beliefs_must_be_stochastic() {
        assert!(Beliefs::new(Matrix::filled(1, 2, 0.7), BeliefKind::BasePrediction).is_err());
        assert!(Beliefs::new(Matrix::filled(1, 2, 0.7), BeliefKind::Propagated).is_ok());
    }

    #[test]
    fn sinkhorn_fixed_points() {
        let id = Matrix::identity(3);
        let out = sinkhorn_knopp(&id, 1e-9, 100).unwrap();
        assert_eq!(out.matrix, id);
        assert_eq!(out.iterations, 0);
        let half = Matrix::filled(2, 2, 0.5);
        assert_eq!(sinkhorn_knopp(&half, 1e-9, 100).unwrap().matrix, half);
    }

    /// Independent alternating normalization, written column-first on the
    /// transpose so it shares no code with the implementation.
    fn sinkhorn_oracle(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut x = m;
        for _ in 0..500 {
            for r in &mut x {
                let s = r[0] + r[1];
                r[0] /= s;
                r[1] /= s;
            }
            for j in 0..2 {
                let s = x[0][j] + x[1][j];
                x[0][j] /= s;
                x[1][j] /= s;
            }
        }
        x
    }

    #[test]
    fn sinkhorn_two_by_two() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let out = sinkhorn_knopp(&m, 1e-9, 10_000).unwrap();
        assert!(out.converged);
        for s in out.matrix.row_sums().into_iter().chain(out.matrix.col_sums()) {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
        // a doubly stochastic 2x2 is [[a, 1-a], [1-a, a]]
        assert_abs_diff_eq!(out.matrix[(0, 0)], out.matrix[(1, 1)], epsilon = 1e-9);
        assert_abs_diff_eq!(out.matrix[(0, 1)], out.matrix[(1, 0)], epsilon = 1e-9);
        let oracle = sinkhorn_oracle([[1.0, 2.0], [3.0, 4.0]]);
        // closed form for the limit: a/(1-a) = sqrt(ad/bc) -> a = r/(1+r)
        let r = (4.0f64 / 6.0).sqrt();
        assert_abs_diff_eq!(oracle[0][0], r / (1.0 + r), epsilon = 1e-12);
        assert_abs_diff_eq!(out.matrix[(0, 0)], oracle[0][0], epsilon = 1e-9);
    }

    #[test]
    fn sinkhorn_rejects_bad_input() {
        assert!(sinkhorn_knopp(&Matrix::zeros(2, 3), 1e-9, 10).is_err());
        let neg = Matrix::from_rows(&[[1.0, -1.0], [1.0, 1.0]]).unwrap();
        assert!(sinkhorn_knopp(&neg, 1e-9, 10).is_err());
    }

    #[test]
    fn sinkhorn_reports_non_convergence() {
        // no total support: cannot be balanced
        let m = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let out = sinkhorn_knopp(&m, 1e-12, 5).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 5);
    }

    fn graph(n: usize, edges: &[(usize, usize)], labels: &[usize], k: usize) -> Graph {
        Graph::with_labels(n, edges, Matrix::zeros(n, 1), labels, k, false).unwrap()
    }

    #[test]
    fn homophilous_estimate_is_identity() {
        let g = graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], &[0, 0, 0, 1, 1, 1], 2);
        let labels = g.full_labels().unwrap();
        let y = one_hot(&labels, 2).unwrap();
        let b0 = Beliefs::new(y.clone(), BeliefKind::Prior).unwrap();
        let h = estimate_compatibility(&g, &b0, &y, &[0, 3], SINKHORN_TOL).unwrap();
        assert_eq!(h.normalization, Normalization::DoublyStochastic);
        assert!(h.values[(0, 1)] < 1e-6 && h.values[(1, 0)] < 1e-6);
        assert_abs_diff_eq!(h.values[(0, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn heterophilous_estimate_is_anti_identity() {
        let g = graph(4, &[(0, 2), (0, 3), (1, 2), (1, 3)], &[0, 0, 1, 1], 2);
        let y = one_hot(&g.full_labels().unwrap(), 2).unwrap();
        let b0 = Beliefs::new(y.clone(), BeliefKind::Prior).unwrap();
        let h = estimate_compatibility(&g, &b0, &y, &[0, 2], SINKHORN_TOL).unwrap();
        assert!(h.values[(0, 0)] < 1e-6 && h.values[(1, 1)] < 1e-6);
        assert_abs_diff_eq!(h.values[(0, 1)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn path_estimate_matches_hand_computation() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)], &[0, 0, 1, 1], 2);
        let y = one_hot(&g.full_labels().unwrap(), 2).unwrap();
        let b0 = prior_beliefs(&uniform(4, 2), &y, &[0, 3]).unwrap();
        // node 0 (class 0) sees node 1 = [.5,.5]; node 3 (class 1) sees node 2 = [.5,.5]
        let raw = raw_compatibility_scores(&g, &b0, &y, &[0, 3]).unwrap();
        assert_eq!(raw.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
        let h = estimate_compatibility(&g, &b0, &y, &[0, 3], SINKHORN_TOL).unwrap();
        for &x in h.values.as_slice() {
            assert_abs_diff_eq!(x, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_class_flagged() {
        let g = graph(4, &[(0, 1), (2, 3)], &[0, 0, 1, 1], 2);
        let y = one_hot(&g.full_labels().unwrap(), 2).unwrap();
        let b0 = prior_beliefs(&uniform(4, 2), &y, &[0]).unwrap();
        let h = estimate_compatibility(&g, &b0, &y, &[0], SINKHORN_TOL).unwrap();
        assert_eq!(h.undefined_rows, vec![1]);
        assert!(h.deviation.unwrap() < 1e-9);
        assert!(estimate_compatibility(&g, &b0, &y, &[], SINKHORN_TOL).is_err());
    }

    #[test]
    fn regular_balanced_graph_recovers_true_h() {
        // 4-cycle of classes 0,1,0,1 plus chords: every node has one same-class
        // and two cross-class neighbours, so counts are symmetric with equal sums
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3), (4, 5), (5, 6), (6, 7), (7, 4), (4, 6), (5, 7)];
        let labels = [0, 1, 0, 1, 0, 1, 0, 1];
        let g = graph(8, &edges, &labels, 2);
        let y = one_hot(&labels, 2).unwrap();
        let b0 = Beliefs::new(y.clone(), BeliefKind::Prior).unwrap();
        let all: Vec<usize> = (0..8).collect();
        let h_hat = estimate_compatibility(&g, &b0, &y, &all, SINKHORN_TOL).unwrap();
        let h = crate::metrics::true_compatibility(&g).unwrap();
        assert!(h_hat.values.max_abs_diff(&h.values) < 1e-7);
    }

    #[test]
    fn csv_and_sidecar() {
        let h = CompatibilityMatrix::row_stochastic(Matrix::identity(2));
        assert_eq!(h.to_csv(), "1.0,0.0\n0.0,1.0\n");
        assert!(h.sidecar_json().unwrap().contains("row_stochastic"));
    }

    fn positive_square() -> impl Strategy<Value = Matrix> {
        (1usize..8).prop_flat_map(|n| {
            proptest::collection::vec(0.01f64..10.0, n * n).prop_map(move |v| Matrix::from_vec(n, n, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn sinkhorn_balances_and_is_idempotent(m in positive_square()) {
            let tol = 1e-9;
            let out = sinkhorn_knopp(&m, tol, SINKHORN_MAX_ITERS).unwrap();
            prop_assert!(out.converged);
            for s in out.matrix.row_sums().into_iter().chain(out.matrix.col_sums()) {
                prop_assert!((s - 1.0).abs() < tol);
            }
            let again = sinkhorn_knopp(&out.matrix, tol, SINKHORN_MAX_ITERS).unwrap();
            prop_assert!(again.matrix.max_abs_diff(&out.matrix) < 2.0 * tol);
        }

        #[test]
        fn sinkhorn_scale_invariant(m in positive_square(), c in 0.01f64..100.0) {
            let a = sinkhorn_knopp(&m, 1e-9, SINKHORN_MAX_ITERS).unwrap();
            let b = sinkhorn_knopp(&m.scale(c), 1e-9, SINKHORN_MAX_ITERS).unwrap();
            prop_assert!(a.matrix.max_abs_diff(&b.matrix) < 1e-8);
        }
    }
}
