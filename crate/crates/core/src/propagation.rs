//! Compatible label propagation.
//!
//! Every arc `s -> r` carries a class-indexed weight vector
//! `F[s,r] = (B0[s] H) ∘ B0[r]`, fixed once from the prior beliefs. The
//! message sent along the arc is `F[s,r] ∘ B[s]`, and each class `k`
//! propagates independently through the weighted matrix `A_k` whose entry
//! `(r, s)` is `F[s,r][k]`:
//!
//! ```text
//! B[:,k] <- (1 - alpha) T[:,k] + alpha A_k B[:,k]
//! ```
//!
//! Class `k` converges iff `rho(A_k) < 1 / alpha`; the same linear system is
//! also solved directly for small graphs.

use std::cell::OnceCell;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compat::{BeliefKind, Beliefs, CompatibilityMatrix};
use crate::error::{ClpError, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::sparse::SparseMatrix;

/// Consecutive residual increases treated as divergence.
pub const DIVERGENCE_STREAK: usize = 10;
/// Largest graph the dense closed-form solver accepts.
pub const CLOSED_FORM_MAX_NODES: usize = 5000;

/// Per-arc, per-class weights sharing the arc pattern of the graph.
///
/// Stored receiver-major: row `r` lists the senders `s` of arcs `s -> r`.
/// The weights of arc `p` occupy `weights[p * k..(p + 1) * k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightTensor {
    n: usize,
    k: usize,
    row_ptr: Vec<usize>,
    senders: Vec<usize>,
    weights: Vec<f64>,
}

impl EdgeWeightTensor {
    /// Builds from dense `A_k` slices (row = receiver, column = sender). The
    /// pattern is the union of nonzeros across slices.
    pub fn from_dense(slices: &[Matrix]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| ClpError::Empty("no slices".into()))?;
        let n = first.rows();
        if slices.iter().any(|s| s.shape() != (n, n)) {
            return Err(ClpError::DimensionMismatch("slices must be equal and square".into()));
        }
        let mut row_ptr = vec![0];
        let mut senders = Vec::new();
        let mut weights = Vec::new();
        for r in 0..n {
            for s in 0..n {
                if slices.iter().any(|m| m[(r, s)] != 0.0) {
                    senders.push(s);
                    weights.extend(slices.iter().map(|m| m[(r, s)]));
                }
            }
            row_ptr.push(senders.len());
        }
        Ok(Self {
            n,
            k: slices.len(),
            row_ptr,
            senders,
            weights,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn arc_count(&self) -> usize {
        self.senders.len()
    }

    /// `(sender, receiver, arc index)` for every arc.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (self.senders[p], r, p)))
    }

    /// Weight vector of the arc `sender -> receiver`, if present.
    pub fn weight(&self, sender: usize, receiver: usize) -> Option<Vec<f64>> {
        let range = self.row_ptr[receiver]..self.row_ptr[receiver + 1];
        let pos = self.senders[range.clone()].binary_search(&sender).ok()?;
        Some(self.arc_weights(range.start + pos).to_vec())
    }

    #[inline]
    fn arc_weights(&self, p: usize) -> &[f64] {
        &self.weights[p * self.k..(p + 1) * self.k]
    }

    /// `A_k` as a sparse matrix (row = receiver).
    pub fn slice(&self, k: usize) -> SparseMatrix {
        let values = self.weights.iter().skip(k).step_by(self.k).copied().collect();
        SparseMatrix::new(self.n, self.n, self.row_ptr.clone(), self.senders.clone(), values)
            .expect("tensor pattern is consistent")
    }

    pub fn slices(&self) -> Vec<SparseMatrix> {
        (0..self.num_classes()).map(|k| self.slice(k)).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut t = self.clone();
        t.weights.iter_mut().for_each(|v| *v *= c);
        t
    }
}

/// `(b_sender H) ∘ b_receiver`
pub fn arc_weight(b_sender: &[f64], b_receiver: &[f64], h: &Matrix) -> Vec<f64> {
    let k = h.cols();
    let mut w = vec![0.0; k];
    for (i, &b) in b_sender.iter().enumerate() {
        for (wj, &hij) in w.iter_mut().zip(h.row(i)) {
            *wj += b * hij;
        }
    }
    w.iter_mut().zip(b_receiver).for_each(|(wj, br)| *wj *= br);
    w
}

/// Class-conditioned weights for every arc of `graph`, computed once from
/// the prior beliefs.
pub fn edge_weights(graph: &Graph, b0: &Beliefs, h_hat: &CompatibilityMatrix) -> Result<EdgeWeightTensor> {
    let k = h_hat.num_classes();
    if h_hat.values.cols() != k || b0.num_classes() != k || b0.node_count() != graph.node_count() {
        return Err(ClpError::DimensionMismatch(format!(
            "beliefs {:?}, compatibility {:?}, {} nodes",
            b0.values.shape(),
            h_hat.values.shape(),
            graph.node_count()
        )));
    }
    let bh = b0.values.matmul(&h_hat.values)?;
    let incoming = graph.in_arcs();
    let n = graph.node_count();
    let mut weights = Vec::with_capacity(incoming.nnz() * k);
    for r in 0..n {
        let br = b0.values.row(r);
        for &s in incoming.row(r) {
            weights.extend(bh.row(s).iter().zip(br).map(|(x, b)| x * b));
        }
    }
    Ok(EdgeWeightTensor {
        n,
        k,
        row_ptr: incoming.row_ptr().to_vec(),
        senders: incoming.col_idx().to_vec(),
        weights,
    })
}

/// Messages along every arc, in the tensor's arc order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcMessages {
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    /// One row per arc.
    pub values: Matrix,
}

impl ArcMessages {
    pub fn get(&self, sender: usize, receiver: usize) -> Option<&[f64]> {
        (0..self.senders.len())
            .find(|&i| self.senders[i] == sender && self.receivers[i] == receiver)
            .map(|i| self.values.row(i))
    }
}

#[inline]
fn message_into(awf: &EdgeWeightTensor, p: usize, b_sender: &[f64], normalize: bool, out: &mut [f64]) {
    let mut sum = 0.0;
    for ((o, w), b) in out.iter_mut().zip(awf.arc_weights(p)).zip(b_sender) {
        *o = w * b;
        sum += *o;
    }
    if normalize && sum != 0.0 {
        let inv = 1.0 / sum;
        out.iter_mut().for_each(|o| *o *= inv);
    }
}

/// `F[s,r] ∘ B[s]` per arc, optionally scaled to sum to one (all-zero
/// messages stay zero).
pub fn compute_messages(awf: &EdgeWeightTensor, b: &Matrix, normalize: bool) -> Result<ArcMessages> {
    check_beliefs(awf, b)?;
    let k = awf.num_classes();
    let mut values = Matrix::zeros(awf.arc_count(), k);
    let mut senders = Vec::with_capacity(awf.arc_count());
    let mut receivers = Vec::with_capacity(awf.arc_count());
    for (s, r, p) in awf.arcs() {
        message_into(awf, p, b.row(s), normalize, values.row_mut(p));
        senders.push(s);
        receivers.push(r);
    }
    Ok(ArcMessages {
        senders,
        receivers,
        values,
    })
}

fn check_beliefs(awf: &EdgeWeightTensor, b: &Matrix) -> Result<()> {
    if b.shape() != (awf.node_count(), awf.num_classes()) {
        return Err(ClpError::DimensionMismatch(format!(
            "beliefs {:?} for a tensor over {} nodes and {} classes",
            b.shape(),
            awf.node_count(),
            awf.num_classes()
        )));
    }
    Ok(())
}

/// Sum of incoming messages per node: `[A_k B[:,k]]_k` when not normalized.
pub fn aggregate_clp(awf: &EdgeWeightTensor, b: &Matrix, normalize: bool) -> Result<Matrix> {
    check_beliefs(awf, b)?;
    let mut out = Matrix::zeros(b.rows(), b.cols());
    aggregate_clp_into(awf, b, normalize, &mut out);
    Ok(out)
}

fn aggregate_clp_into(awf: &EdgeWeightTensor, b: &Matrix, normalize: bool, out: &mut Matrix) {
    for r in 0..awf.n {
        let acc = out.row_mut(r);
        acc.fill(0.0);
        for p in awf.row_ptr[r]..awf.row_ptr[r + 1] {
            let w = awf.arc_weights(p);
            let bs = b.row(awf.senders[p]);
            let scale = if normalize {
                let sum: f64 = w.iter().zip(bs).map(|(x, y)| x * y).sum();
                if sum != 0.0 {
                    1.0 / sum
                } else {
                    0.0
                }
            } else {
                1.0
            };
            for ((a, x), y) in acc.iter_mut().zip(w).zip(bs) {
                *a += scale * x * y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleportSource {
    /// The base prediction `D`.
    Base,
    /// The prior beliefs `B0` (training rows clamped to their labels).
    Prior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyNormalization {
    /// 0/1 adjacency.
    Raw,
    /// `D^-1/2 A D^-1/2`
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once the largest entrywise change falls below this.
    pub tol: f64,
    pub message_normalization: bool,
    pub teleport_source: TeleportSource,
    /// Adjacency used by the sender-only variant.
    pub star_adjacency: AdjacencyNormalization,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            max_iters: 1000,
            tol: 1e-9,
            message_normalization: false,
            teleport_source: TeleportSource::Base,
            star_adjacency: AdjacencyNormalization::Raw,
        }
    }
}

impl PropagationConfig {
    /// `alpha = 0` is accepted as the degenerate no-propagation case.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(ClpError::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(ClpError::InvalidArgument("tol and max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual: f64,
    pub per_class: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub records: Vec<IterationRecord>,
}

impl IterationLog {
    pub fn to_csv(&self) -> String {
        let k = self.records.first().map_or(0, |r| r.per_class.len());
        let mut out = String::from("iter,residual");
        for c in 0..k {
            out.push_str(&format!(",class_{c}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{:e}", r.iter, r.residual));
            for x in &r.per_class {
                out.push_str(&format!(",{x:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.residual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub beliefs: Beliefs,
    pub log: IterationLog,
    pub converged: bool,
}

impl Propagation {
    pub fn iterations(&self) -> usize {
        self.log.records.len()
    }
}

/// Runs `B <- (1-alpha) T + alpha step(B)` from `B = T`.
fn iterate<F>(teleport: &Matrix, config: &PropagationConfig, mut step: F) -> Result<Propagation>
where
    F: FnMut(&Matrix, &mut Matrix),
{
    config.validate()?;
    let alpha = config.alpha;
    let k = teleport.cols();
    let mut current = teleport.clone();
    let mut agg = Matrix::zeros(teleport.rows(), k);
    let mut log = IterationLog::default();
    let mut converged = false;
    let mut streak = 0;
    let mut previous = f64::INFINITY;
    for iter in 1..=config.max_iters {
        step(&current, &mut agg);
        let mut per_class = vec![0.0f64; k];
        for (i, (a, (t, b))) in agg
            .as_mut_slice()
            .iter_mut()
            .zip(teleport.as_slice().iter().zip(current.as_slice()))
            .enumerate()
        {
            let next = (1.0 - alpha) * t + alpha * *a;
            let d = (next - b).abs();
            let c = &mut per_class[i % k];
            if d > *c || d.is_nan() {
                *c = d;
            }
            *a = next;
        }
        std::mem::swap(&mut current, &mut agg);
        let residual = if per_class.iter().any(|x| x.is_nan()) {
            f64::NAN
        } else {
            per_class.iter().copied().fold(0.0, f64::max)
        };
        log.records.push(IterationRecord {
            iter,
            residual,
            per_class,
        });
        if !residual.is_finite() {
            return Err(ClpError::Divergence {
                iterations: iter,
                residual,
            });
        }
        if residual < config.tol {
            converged = true;
            break;
        }
        streak = if residual > previous { streak + 1 } else { 0 };
        if streak >= DIVERGENCE_STREAK {
            return Err(ClpError::Divergence {
                iterations: iter,
                residual,
            });
        }
        previous = residual;
    }
    if !converged {
        log::warn!(
            "propagation stopped at max_iters = {} with residual {:e}",
            config.max_iters,
            log.last_residual().unwrap_or(f64::NAN)
        );
    }
    Ok(Propagation {
        beliefs: Beliefs {
            values: current,
            kind: BeliefKind::Propagated,
        },
        log,
        converged,
    })
}

/// Iterative compatible label propagation anchored at `teleport`.
pub fn propagate_clp(awf: &EdgeWeightTensor, teleport: &Matrix, config: &PropagationConfig) -> Result<Propagation> {
    check_beliefs(awf, teleport)?;
    let normalize = config.message_normalization;
    iterate(teleport, config, |b, out| aggregate_clp_into(awf, b, normalize, out))
}

/// Receiver-major adjacency with optional symmetric degree scaling.
pub fn receiver_adjacency(graph: &Graph, norm: AdjacencyNormalization) -> SparseMatrix {
    let incoming = graph.in_arcs();
    let n = graph.node_count();
    let values: Vec<f64> = match norm {
        AdjacencyNormalization::Raw => vec![1.0; incoming.nnz()],
        AdjacencyNormalization::Symmetric => {
            let out_deg: Vec<f64> = (0..n).map(|v| graph.out_arcs().degree(v) as f64).collect();
            (0..n)
                .flat_map(|r| {
                    let din = incoming.degree(r) as f64;
                    let out_deg = &out_deg;
                    incoming.row(r).iter().map(move |&s| 1.0 / (din * out_deg[s]).sqrt())
                })
                .collect()
        }
    };
    SparseMatrix::new(n, n, incoming.row_ptr().to_vec(), incoming.col_idx().to_vec(), values)
        .expect("graph pattern is consistent")
}

fn spmm_into(a: &SparseMatrix, b: &Matrix, out: &mut Matrix) {
    for r in 0..a.rows() {
        let acc = out.row_mut(r);
        acc.fill(0.0);
        for (s, w) in a.row_entries(r) {
            for (o, x) in acc.iter_mut().zip(b.row(s)) {
                *o += w * x;
            }
        }
    }
}

/// Received aggregate `A B H` of the sender-only variant.
pub fn aggregate_clp_star(adjacency: &SparseMatrix, b: &Matrix, h_hat: &Matrix) -> Result<Matrix> {
    if adjacency.cols() != b.rows() || b.cols() != h_hat.rows() {
        return Err(ClpError::DimensionMismatch("A B H shapes".into()));
    }
    let mut ab = Matrix::zeros(adjacency.rows(), b.cols());
    spmm_into(adjacency, b, &mut ab);
    ab.matmul(h_hat)
}

/// Propagation where each message depends only on its sender:
/// `B <- (1-alpha) T + alpha A B H`.
pub fn propagate_clp_star(
    graph: &Graph,
    teleport: &Matrix,
    h_hat: &CompatibilityMatrix,
    config: &PropagationConfig,
) -> Result<Propagation> {
    let k = h_hat.num_classes();
    if teleport.shape() != (graph.node_count(), k) {
        return Err(ClpError::DimensionMismatch(format!(
            "teleport {:?} for {} nodes and {k} classes",
            teleport.shape(),
            graph.node_count()
        )));
    }
    let adjacency = receiver_adjacency(graph, config.star_adjacency);
    let mut ab = Matrix::zeros(teleport.rows(), k);
    iterate(teleport, config, |b, out| {
        spmm_into(&adjacency, b, &mut ab);
        for r in 0..ab.rows() {
            let row = ab.row(r);
            for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = row.iter().enumerate().map(|(i, x)| x * h_hat.values[(i, j)]).sum();
            }
        }
    })
}

/// Classic label propagation with identity compatibility over the
/// symmetrically normalized adjacency, anchored at the one-hot training
/// labels. Nodes that receive no mass get a uniform row.
pub fn propagate_lp(graph: &Graph, y_onehot: &Matrix, train: &[usize], config: &PropagationConfig) -> Result<Propagation> {
    let n = graph.node_count();
    let k = y_onehot.cols();
    if y_onehot.rows() != n {
        return Err(ClpError::DimensionMismatch("label matrix rows".into()));
    }
    let mut teleport = Matrix::zeros(n, k);
    for &v in train {
        teleport.row_mut(v).copy_from_slice(y_onehot.row(v));
    }
    let adjacency = receiver_adjacency(graph, AdjacencyNormalization::Symmetric);
    let mut out = iterate(&teleport, config, |b, agg| spmm_into(&adjacency, b, agg))?;
    let mut empty = 0;
    for r in 0..n {
        let row = out.beliefs.values.row_mut(r);
        if row.iter().all(|&x| x == 0.0) {
            row.fill(1.0 / k as f64);
            empty += 1;
        }
    }
    if empty > 0 {
        log::warn!("{empty} nodes are unreachable from any training node; they get uniform predictions");
    }
    Ok(out)
}

/// Direct solve of `(I - alpha A_k) x = (1 - alpha) t_k` by dense LU.
pub fn closed_form_clp(awf_k: &SparseMatrix, teleport_k: &[f64], alpha: f64, class: usize) -> Result<Vec<f64>> {
    let n = awf_k.rows();
    if awf_k.cols() != n || teleport_k.len() != n {
        return Err(ClpError::DimensionMismatch("closed form needs a square slice and matching teleport".into()));
    }
    if n > CLOSED_FORM_MAX_NODES {
        return Err(ClpError::InvalidArgument(format!(
            "closed form is limited to {CLOSED_FORM_MAX_NODES} nodes, got {n}"
        )));
    }
    let mut system = DMatrix::<f64>::identity(n, n);
    for r in 0..n {
        for (s, w) in awf_k.row_entries(r) {
            system[(r, s)] -= alpha * w;
        }
    }
    let rhs = DVector::from_iterator(n, teleport_k.iter().map(|t| (1.0 - alpha) * t));
    let x = system.lu().solve(&rhs).ok_or(ClpError::Singular { class })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ClpError::Singular { class });
    }
    Ok(x.iter().copied().collect())
}

/// Closed-form solution for every class.
pub fn closed_form_all(awf: &EdgeWeightTensor, teleport: &Matrix, alpha: f64) -> Result<Matrix> {
    check_beliefs(awf, teleport)?;
    let mut out = Matrix::zeros(teleport.rows(), teleport.cols());
    for k in 0..awf.num_classes() {
        let x = closed_form_clp(&awf.slice(k), &teleport.column(k), alpha, k)?;
        out.set_column(k, &x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub rho: f64,
    /// Relative change of the estimate over the last step.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Power-iteration estimate of the largest eigenvalue magnitude.
///
/// The estimate is the geometric mean of the last two growth ratios, which
/// also settles for period-two spectra such as bipartite graphs. A run that
/// has not met `tol` after `iters` steps is restarted from a fresh random
/// vector, at most three times; the best run is reported.
pub fn spectral_radius(m: &SparseMatrix, iters: usize, tol: f64) -> Result<SpectralEstimate> {
    let n = m.rows();
    if m.cols() != n {
        return Err(ClpError::DimensionMismatch(format!("{n}x{} is not square", m.cols())));
    }
    if n == 0 || m.values().iter().all(|&v| v == 0.0) {
        return Ok(SpectralEstimate {
            rho: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut best: Option<SpectralEstimate> = None;
    let mut y = vec![0.0; n];
    for attempt in 0..=3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED ^ attempt);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let s = norm2(&x);
        x.iter_mut().for_each(|v| *v /= s);
        let mut prev_ratio = f64::NAN;
        let mut prev_est = f64::NAN;
        let mut est = SpectralEstimate {
            rho: 0.0,
            residual: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
        for it in 1..=iters {
            m.matvec_into(&x, &mut y);
            let ratio = norm2(&y);
            est.iterations = it;
            if ratio == 0.0 {
                // x fell into the null space; nilpotent along this direction
                est.rho = 0.0;
                est.residual = 0.0;
                est.converged = true;
                break;
            }
            x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / ratio);
            let current = if prev_ratio.is_nan() { ratio } else { (ratio * prev_ratio).sqrt() };
            if !prev_est.is_nan() {
                est.residual = (current - prev_est).abs() / current;
            }
            est.rho = current;
            prev_ratio = ratio;
            prev_est = current;
            if est.residual < tol {
                est.converged = true;
                break;
            }
        }
        let better = match &best {
            None => true,
            Some(b) => (est.converged && !b.converged) || (est.converged == b.converged && est.rho > b.rho),
        };
        if better {
            best = Some(est);
        }
        if est.converged {
            break;
        }
    }
    Ok(best.expect("at least one attempt ran"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    /// A cheap norm bound is already below `1/alpha`.
    CertifiedConvergent { bound: f64 },
    Convergent { rho: f64 },
    Divergent { rho: f64 },
    Inconclusive { rho: f64, residual: f64 },
}

impl Verdict {
    pub fn is_convergent(&self) -> bool {
        matches!(self, Verdict::CertifiedConvergent { .. } | Verdict::Convergent { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::CertifiedConvergent { .. } => "certified",
            Verdict::Convergent { .. } => "convergent",
            Verdict::Divergent { .. } => "divergent",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVerdict {
    pub class: usize,
    /// Sum of absolute entries of the slice.
    pub entrywise_l1: f64,
    pub frobenius: f64,
    pub spectral_radius: Option<SpectralEstimate>,
    pub verdict: Verdict,
}

/// Norms of every slice, with spectral radii computed on first use.
pub struct SliceSpectra {
    slices: Vec<SparseMatrix>,
    l1: Vec<f64>,
    frobenius: Vec<f64>,
    rho: Vec<OnceCell<SpectralEstimate>>,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl SliceSpectra {
    pub fn new(awf: &EdgeWeightTensor) -> Self {
        let slices = awf.slices();
        Self {
            l1: slices.iter().map(SparseMatrix::entrywise_l1).collect(),
            frobenius: slices.iter().map(SparseMatrix::frobenius).collect(),
            rho: slices.iter().map(|_| OnceCell::new()).collect(),
            slices,
            power_iters: 1000,
            power_tol: 1e-8,
        }
    }

    pub fn spectral_radius(&self, k: usize) -> SpectralEstimate {
        *self.rho[k].get_or_init(|| {
            spectral_radius(&self.slices[k], self.power_iters, self.power_tol).expect("slices are square")
        })
    }

    pub fn verdicts(&self, alpha: f64) -> Result<Vec<ClassVerdict>> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ClpError::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
        }
        let limit = 1.0 / alpha;
        Ok((0..self.slices.len())
            .map(|k| {
                // rho <= ||.||_F <= entrywise 1-norm
                let bound = self.frobenius[k].min(self.l1[k]);
                if bound < limit {
                    return ClassVerdict {
                        class: k,
                        entrywise_l1: self.l1[k],
                        frobenius: self.frobenius[k],
                        spectral_radius: None,
                        verdict: Verdict::CertifiedConvergent { bound },
                    };
                }
                let est = self.spectral_radius(k);
                let margin = est.rho * est.residual.max(1e-9);
                let verdict = if !est.converged && est.rho < limit {
                    Verdict::Inconclusive {
                        rho: est.rho,
                        residual: est.residual,
                    }
                } else if est.rho + margin < limit {
                    Verdict::Convergent { rho: est.rho }
                } else if est.rho - margin > limit {
                    Verdict::Divergent { rho: est.rho }
                } else {
                    Verdict::Inconclusive {
                        rho: est.rho,
                        residual: est.residual,
                    }
                };
                ClassVerdict {
                    class: k,
                    entrywise_l1: self.l1[k],
                    frobenius: self.frobenius[k],
                    spectral_radius: Some(est),
                    verdict,
                }
            })
            .collect())
    }
}

/// Per-class convergence verdict for iterating with `alpha`.
pub fn convergence_check(awf: &EdgeWeightTensor, alpha: f64) -> Result<Vec<ClassVerdict>> {
    SliceSpectra::new(awf).verdicts(alpha)
}
