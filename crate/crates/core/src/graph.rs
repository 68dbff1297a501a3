//! Graph storage, validation, TSV file formats and random splits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ClpError, Result};
use crate::matrix::Matrix;

/// Compressed sparse row pattern (no values).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Csr {
    /// Builds from `(row, col)` pairs that are already sorted and unique.
    fn from_sorted(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, _) in pairs {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            row_ptr,
            col_idx: pairs.iter().map(|&(_, c)| c).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn transpose(&self) -> Csr {
        let n = self.n();
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| self.row(i).iter().map(move |&j| (j, i)))
            .collect();
        pairs.sort_unstable();
        Csr::from_sorted(n, &pairs)
    }
}

/// An unweighted graph with node features and optional class labels.
///
/// Arcs are stored source-major. Undirected graphs hold both directions of
/// every edge, self-loops are dropped and duplicate arcs are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    out_arcs: Csr,
    in_arcs: Csr,
    features: Matrix,
    labels: Option<Vec<Option<usize>>>,
    num_classes: usize,
    directed: bool,
}

impl Graph {
    pub fn new(
        node_count: usize,
        arcs: &[(usize, usize)],
        features: Matrix,
        labels: Option<Vec<Option<usize>>>,
        num_classes: usize,
        directed: bool,
    ) -> Result<Self> {
        if features.rows() != node_count {
            return Err(ClpError::InvalidGraph(format!(
                "feature matrix has {} rows for {node_count} nodes",
                features.rows()
            )));
        }
        let mut pairs = Vec::with_capacity(if directed { arcs.len() } else { 2 * arcs.len() });
        for &(s, t) in arcs {
            for id in [s, t] {
                if id >= node_count {
                    return Err(ClpError::NodeOutOfRange { id, node_count });
                }
            }
            if s == t {
                continue;
            }
            pairs.push((s, t));
            if !directed {
                pairs.push((t, s));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        if let Some(labels) = &labels {
            if labels.len() != node_count {
                return Err(ClpError::InvalidGraph(format!(
                    "{} labels for {node_count} nodes",
                    labels.len()
                )));
            }
            for &class in labels.iter().flatten() {
                if class >= num_classes {
                    return Err(ClpError::ClassOutOfRange { class, num_classes });
                }
            }
        }

        let out_arcs = Csr::from_sorted(node_count, &pairs);
        let in_arcs = if directed { out_arcs.transpose() } else { out_arcs.clone() };
        Ok(Self {
            node_count,
            out_arcs,
            in_arcs,
            features,
            labels,
            num_classes,
            directed,
        })
    }

    /// Convenience constructor for fully labelled graphs.
    pub fn with_labels(
        node_count: usize,
        arcs: &[(usize, usize)],
        features: Matrix,
        labels: &[usize],
        num_classes: usize,
        directed: bool,
    ) -> Result<Self> {
        let labels = labels.iter().map(|&l| Some(l)).collect();
        Self::new(node_count, arcs, features, Some(labels), num_classes, directed)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn arc_count(&self) -> usize {
        self.out_arcs.nnz()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Arcs leaving each node (row = source).
    pub fn out_arcs(&self) -> &Csr {
        &self.out_arcs
    }

    /// Arcs entering each node (row = receiver).
    pub fn in_arcs(&self) -> &Csr {
        &self.in_arcs
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.out_arcs.row(v)
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count).flat_map(move |s| self.out_arcs.row(s).iter().map(move |&t| (s, t)))
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Labels for every node, or an error when any is unknown.
    pub fn full_labels(&self) -> Result<Vec<usize>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| ClpError::MissingLabels("graph carries no labels".into()))?;
        labels
            .iter()
            .enumerate()
            .map(|(v, l)| l.ok_or_else(|| ClpError::MissingLabels(format!("node {v} is unlabelled"))))
            .collect()
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l[v])
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.node_count {
            return Err(ClpError::InvalidGraph(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.node_count
            )));
        }
        self.features = features;
        Ok(self)
    }
}

/// Labels as a dense one-hot matrix.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(labels.len(), num_classes);
    for (v, &class) in labels.iter().enumerate() {
        if class >= num_classes {
            return Err(ClpError::ClassOutOfRange { class, num_classes });
        }
        y[(v, class)] = 1.0;
    }
    Ok(y)
}

/// One-hot rows for labelled nodes, zero rows for unknown ones.
pub fn one_hot_partial(labels: &[Option<usize>], num_classes: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(labels.len(), num_classes);
    for (v, class) in labels.iter().enumerate() {
        if let Some(class) = *class {
            if class >= num_classes {
                return Err(ClpError::ClassOutOfRange { class, num_classes });
            }
            y[(v, class)] = 1.0;
        }
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    /// 5% / 5% / 90%
    Sparse,
    /// 10% / 10% / 80%
    Medium,
    /// 48% / 32% / 20%
    Dense,
    Custom { train: f64, validation: f64 },
}

impl SplitScheme {
    pub fn ratios(&self) -> (f64, f64) {
        match *self {
            SplitScheme::Sparse => (0.05, 0.05),
            SplitScheme::Medium => (0.10, 0.10),
            SplitScheme::Dense => (0.48, 0.32),
            SplitScheme::Custom { train, validation } => (train, validation),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SplitScheme::Sparse => "sparse".into(),
            SplitScheme::Medium => "medium".into(),
            SplitScheme::Dense => "dense".into(),
            SplitScheme::Custom { train, validation } => format!("custom({train},{validation})"),
        }
    }
}

impl std::str::FromStr for SplitScheme {
    type Err = ClpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(SplitScheme::Sparse),
            "medium" => Ok(SplitScheme::Medium),
            "dense" => Ok(SplitScheme::Dense),
            other => Err(ClpError::InvalidArgument(format!("unknown split scheme '{other}'"))),
        }
    }
}

/// Disjoint train/validation/test node sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMask {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub instance: u64,
    pub scheme: SplitScheme,
}

impl SplitMask {
    pub fn node_count(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn train_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.node_count()];
        for &v in &self.train {
            flags[v] = true;
        }
        flags
    }
}

/// Partition sizes for `n` nodes: floor for train and validation, the rest is test.
pub fn split_sizes(n: usize, scheme: SplitScheme) -> Result<(usize, usize, usize)> {
    let (tr, va) = scheme.ratios();
    if !(tr > 0.0 && va > 0.0 && tr + va < 1.0) {
        return Err(ClpError::InvalidArgument(format!(
            "split ratios {tr}/{va} must be positive and sum below 1"
        )));
    }
    // the small slack keeps e.g. 0.48 * 1000 from flooring to 479
    let n_train = (tr * n as f64 + 1e-9).floor() as usize;
    let n_val = (va * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(ClpError::InvalidArgument(format!(
            "{n} nodes are too few for a {} split",
            scheme.name()
        )));
    }
    Ok((n_train, n_val, n - n_train - n_val))
}

/// Draws `instances` independent random splits. Instance `i` uses stream `i`
/// of the generator seeded with `seed`. Classes are not stratified.
pub fn make_splits(graph: &Graph, scheme: SplitScheme, seed: u64, instances: usize) -> Result<Vec<SplitMask>> {
    if !graph.has_labels() {
        return Err(ClpError::MissingLabels("splits require a labelled graph".into()));
    }
    if instances == 0 {
        return Err(ClpError::InvalidArgument("instances must be at least 1".into()));
    }
    let n = graph.node_count();
    let (n_train, n_val, _) = split_sizes(n, scheme)?;
    (0..instances as u64)
        .map(|instance| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(instance);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut train = order[..n_train].to_vec();
            let mut validation = order[n_train..n_train + n_val].to_vec();
            let mut test = order[n_train + n_val..].to_vec();
            train.sort_unstable();
            validation.sort_unstable();
            test.sort_unstable();
            Ok(SplitMask {
                train,
                validation,
                test,
                seed,
                instance,
                scheme,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub directed: bool,
    pub partial_labels: bool,
    /// Overrides the class count inferred from the label file.
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub node_count: usize,
    pub num_classes: usize,
    pub directed: bool,
    pub feature_dim: usize,
    pub arc_count: usize,
    /// sha256 hex digest per file name.
    pub checksums: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<serde_json::Value>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> ClpError {
    ClpError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_id(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("'{field}' is not a non-negative integer")))
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut arcs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(s), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(path, lineno, "expected 'src<TAB>dst'"));
        };
        arcs.push((parse_id(path, lineno, s)?, parse_id(path, lineno, t)?));
    }
    Ok(arcs)
}

fn read_features(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut width = 0;
        if !line.is_empty() {
            for field in line.split('\t') {
                let x: f64 = field
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("'{field}' is not a number")))?;
                data.push(x);
                width += 1;
            }
        }
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(parse_err(path, lineno, format!("{width} columns, expected {d}")));
            }
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, dim.unwrap_or(0), data)
}

fn read_labels(path: &Path, node_count: usize) -> Result<Vec<Option<usize>>> {
    let text = fs::read_to_string(path)?;
    let mut labels = vec![None; node_count];
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(v), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(path, lineno, "expected 'node_id<TAB>class_id'"));
        };
        let v = parse_id(path, lineno, v)?;
        let c = parse_id(path, lineno, c)?;
        if v >= node_count {
            return Err(ClpError::NodeOutOfRange { id: v, node_count });
        }
        if labels[v].is_some() {
            return Err(parse_err(path, lineno, format!("node {v} labelled twice")));
        }
        labels[v] = Some(c);
    }
    Ok(labels)
}

/// Loads a graph from the three TSV files. The node count is the number of
/// feature rows.
pub fn load_graph(
    edges_path: &Path,
    features_path: &Path,
    labels_path: Option<&Path>,
    options: LoadOptions,
) -> Result<Graph> {
    let features = read_features(features_path)?;
    let n = features.rows();
    let arcs = read_edges(edges_path)?;
    let labels = match labels_path {
        Some(p) => {
            let labels = read_labels(p, n)?;
            if !options.partial_labels {
                if let Some(v) = labels.iter().position(Option::is_none) {
                    return Err(ClpError::MissingLabels(format!(
                        "node {v} has no entry in {}",
                        p.display()
                    )));
                }
            }
            Some(labels)
        }
        None => None,
    };
    let inferred = labels
        .as_ref()
        .and_then(|l| l.iter().flatten().max().map(|m| m + 1))
        .unwrap_or(0);
    let num_classes = options.num_classes.unwrap_or(inferred);
    Graph::new(n, &arcs, features, labels, num_classes, options.directed)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn edges_tsv(graph: &Graph) -> String {
    let mut out = String::new();
    for (s, t) in graph.arcs() {
        out.push_str(&format!("{s}\t{t}\n"));
    }
    out
}

fn features_tsv(features: &Matrix) -> String {
    let mut out = String::new();
    for row in features.iter_rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    if features.cols() == 0 {
        out = "\n".repeat(features.rows());
    }
    out
}

fn labels_tsv(labels: &[Option<usize>]) -> String {
    let mut out = String::new();
    for (v, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            out.push_str(&format!("{v}\t{c}\n"));
        }
    }
    out
}

/// Saves the TSV trio plus `manifest.json` into `dir`.
pub fn save_dataset(graph: &Graph, dir: &Path, synthetic: Option<serde_json::Value>) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let mut checksums = BTreeMap::new();
    let mut files = vec![
        (EDGES_FILE, edges_tsv(graph)),
        (FEATURES_FILE, features_tsv(graph.features())),
    ];
    if let Some(labels) = graph.labels() {
        files.push((LABELS_FILE, labels_tsv(labels)));
    }
    for (name, body) in &files {
        write_atomic(&dir.join(name), body.as_bytes())?;
        checksums.insert(name.to_string(), sha256_hex(body.as_bytes()));
    }
    let manifest = DatasetManifest {
        node_count: graph.node_count(),
        num_classes: graph.num_classes(),
        directed: graph.is_directed(),
        feature_dim: graph.feature_dim(),
        arc_count: graph.arc_count(),
        checksums,
        synthetic,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Option<DatasetManifest>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

/// Loads a dataset directory. When a manifest is present its checksums are
/// verified and its class count and direction flag take precedence.
pub fn load_dataset(dir: &Path, mut options: LoadOptions) -> Result<Graph> {
    let manifest = read_manifest(dir)?;
    if let Some(m) = &manifest {
        for (name, expected) in &m.checksums {
            let actual = sha256_hex(&fs::read(dir.join(name))?);
            if &actual != expected {
                return Err(ClpError::Checksum(name.clone()));
            }
        }
        options.num_classes = options.num_classes.or(Some(m.num_classes));
        options.directed |= m.directed;
    }
    let labels = dir.join(LABELS_FILE);
    let graph = load_graph(
        &dir.join(EDGES_FILE),
        &dir.join(FEATURES_FILE),
        labels.exists().then_some(labels.as_path()),
        options,
    )?;
    if let Some(m) = &manifest {
        if m.node_count != graph.node_count() {
            return Err(ClpError::InvalidGraph(format!(
                "manifest lists {} nodes, files hold {}",
                m.node_count,
                graph.node_count()
            )));
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn no_features(n: usize) -> Matrix {
        Matrix::zeros(n, 1)
    }

    #[test]
    fn undirected_load_symmetrizes() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0\t1\n1\t2\n");
        let f = write(dir.path(), "f", "0.5\n1\n2\n");
        let l = write(dir.path(), "l", "0\t0\n1\t1\n2\t0\n");
        let g = load_graph(&e, &f, Some(&l), LoadOptions::default()).unwrap();
        assert_eq!(g.arc_count(), 4);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.num_classes(), 2);
        let arcs: Vec<_> = g.arcs().collect();
        assert_eq!(arcs, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn empty_edge_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "");
        let f = write(dir.path(), "f", "1\n2\n");
        let g = load_graph(&e, &f, None, LoadOptions::default()).unwrap();
        assert_eq!(g.arc_count(), 0);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn out_of_range_node_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0\t7\n");
        let f = write(dir.path(), "f", "1\n2\n3\n");
        let err = load_graph(&e, &f, None, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, ClpError::NodeOutOfRange { id: 7, node_count: 3 }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0\t1\n1 2\n");
        let f = write(dir.path(), "f", "1\n2\n3\n");
        match load_graph(&e, &f, None, LoadOptions::default()).unwrap_err() {
            ClpError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_features_and_duplicate_labels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "");
        let f = write(dir.path(), "f", "1\t2\n3\n");
        assert!(load_graph(&e, &f, None, LoadOptions::default()).is_err());

        let f = write(dir.path(), "f2", "1\n2\n");
        let l = write(dir.path(), "l", "0\t0\n0\t1\n1\t0\n");
        assert!(matches!(
            load_graph(&e, &f, Some(&l), LoadOptions::default()),
            Err(ClpError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn missing_label_needs_partial_flag() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0\t1\n");
        let f = write(dir.path(), "f", "1\n2\n");
        let l = write(dir.path(), "l", "0\t1\n");
        assert!(matches!(
            load_graph(&e, &f, Some(&l), LoadOptions::default()),
            Err(ClpError::MissingLabels(_))
        ));
        let opts = LoadOptions {
            partial_labels: true,
            ..Default::default()
        };
        let g = load_graph(&e, &f, Some(&l), opts).unwrap();
        assert_eq!(g.labels().unwrap(), &[Some(1), None]);
        assert!(g.full_labels().is_err());
    }

    #[test]
    fn self_loops_and_duplicates_dropped() {
        let g = Graph::new(3, &[(0, 0), (0, 1), (0, 1), (1, 0)], no_features(3), None, 1, true).unwrap();
        assert_eq!(g.arcs().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        assert_eq!(g.in_arcs().row(1), &[0]);
    }

    #[test]
    fn directed_keeps_orientation() {
        let g = Graph::new(3, &[(0, 1), (0, 2)], no_features(3), None, 1, true).unwrap();
        assert_eq!(g.arc_count(), 2);
        assert_eq!(g.in_arcs().row(2), &[0]);
        assert!(g.in_arcs().row(0).is_empty());
    }

    #[test]
    fn label_out_of_range_rejected() {
        let r = Graph::with_labels(2, &[], no_features(2), &[0, 3], 2, false);
        assert!(matches!(r, Err(ClpError::ClassOutOfRange { class: 3, .. })));
    }

    #[test]
    fn one_hot_examples() {
        let y = one_hot(&[0, 2], 3).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let y = one_hot(&[1], 2).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 1.0]);
        let y = one_hot(&[0, 0, 0], 1).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0, 1.0]);
        assert!(one_hot(&[2], 2).is_err());
    }

    fn labelled(n: usize) -> Graph {
        Graph::with_labels(n, &[], no_features(n), &vec![0; n], 1, false).unwrap()
    }

    #[test]
    fn medium_split_sizes() {
        let masks = make_splits(&labelled(100), SplitScheme::Medium, 3, 1).unwrap();
        let m = &masks[0];
        assert_eq!((m.train.len(), m.validation.len(), m.test.len()), (10, 10, 80));
    }

    #[test]
    fn dense_split_partitions_all_nodes() {
        let masks = make_splits(&labelled(1000), SplitScheme::Dense, 11, 4).unwrap();
        for m in &masks {
            assert_eq!((m.train.len(), m.validation.len(), m.test.len()), (480, 320, 200));
            let mut all: Vec<usize> = m.train.iter().chain(&m.validation).chain(&m.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..1000).collect::<Vec<_>>());
        }
        assert_ne!(masks[0].train, masks[1].train);
    }

    #[test]
    fn splits_are_seeded() {
        let g = labelled(200);
        let a = make_splits(&g, SplitScheme::Sparse, 5, 3).unwrap();
        let b = make_splits(&g, SplitScheme::Sparse, 5, 3).unwrap();
        let c = make_splits(&g, SplitScheme::Sparse, 6, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].train, c[0].train);
    }

    #[test]
    fn tiny_graph_cannot_split() {
        assert!(make_splits(&labelled(10), SplitScheme::Sparse, 0, 1).is_err());
        let unlabelled = Graph::new(100, &[], no_features(100), None, 0, false).unwrap();
        assert!(make_splits(&unlabelled, SplitScheme::Medium, 0, 1).is_err());
    }

    #[test]
    fn dataset_round_trip_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let features = Matrix::from_rows(&[[0.1, -2.5e-7], [1.0 / 3.0, 4.0], [f64::MAX, -0.0]]).unwrap();
        let g = Graph::with_labels(3, &[(0, 1), (1, 2)], features, &[0, 1, 1], 2, false).unwrap();
        save_dataset(&g, dir.path(), None).unwrap();
        let back = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(back, g);
        for (a, b) in back.features().as_slice().iter().zip(g.features().as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        fs::write(dir.path().join(EDGES_FILE), "0\t2\n").unwrap();
        assert!(matches!(
            load_dataset(dir.path(), LoadOptions::default()),
            Err(ClpError::Checksum(_))
        ));
    }
}
