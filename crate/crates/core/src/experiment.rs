//! End-to-end runs: split, train the base MLP, estimate compatibility,
//! propagate over a candidate grid, pick the best candidate on validation
//! and report test accuracy.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compat::{estimate_compatibility, prior_beliefs, Beliefs, CompatibilityMatrix, SINKHORN_TOL};
use crate::error::{ClpError, Result};
use crate::graph::{load_dataset, make_splits, one_hot_partial, write_atomic, Graph, LoadOptions, SplitMask, SplitScheme};
use crate::matrix::Matrix;
use crate::metrics::{
    accuracy, bucket_accuracy, compat_distance, homophily_report, roc_auc, true_compatibility, BucketTable,
};
use crate::mlp::{init_mlp, predict, standardize, train, MlpParams, TrainConfig, TrainingLog};
use crate::propagation::{
    edge_weights, propagate_clp, propagate_clp_star, propagate_lp, receiver_adjacency, spectral_radius,
    AdjacencyNormalization, PropagationConfig, SliceSpectra, TeleportSource, Verdict,
};
use crate::synth::{generate, SyntheticSpec};

pub const REPORT_FILE: &str = "report.json";
pub const PER_SEED_FILE: &str = "per_seed.csv";
pub const CANDIDATES_FILE: &str = "candidates.csv";
/// Residual at which pipeline candidates stop; predictions are read by argmax.
pub const PIPELINE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MlpOnly,
    Lp,
    Clp,
    ClpStar,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MlpOnly => "mlp_only",
            Method::Lp => "lp",
            Method::Clp => "clp",
            Method::ClpStar => "clp_star",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = ClpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" | "mlp_only" => Ok(Method::MlpOnly),
            "lp" => Ok(Method::Lp),
            "clp" => Ok(Method::Clp),
            "clp-star" | "clp_star" => Ok(Method::ClpStar),
            other => Err(ClpError::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// A knob that is either fixed or left to validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    On,
    Off,
    #[default]
    Auto,
}

impl Choice {
    fn message_modes(self) -> Vec<bool> {
        match self {
            Choice::On => vec![true],
            Choice::Off => vec![false],
            Choice::Auto => vec![false, true],
        }
    }
}

impl std::str::FromStr for Choice {
    type Err = ClpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(Choice::On),
            "off" => Ok(Choice::Off),
            "auto" => Ok(Choice::Auto),
            other => Err(ClpError::InvalidArgument(format!("expected on|off|auto, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleportChoice {
    Base,
    Prior,
    #[default]
    Auto,
}

impl TeleportChoice {
    fn sources(self) -> Vec<TeleportSource> {
        match self {
            TeleportChoice::Base => vec![TeleportSource::Base],
            TeleportChoice::Prior => vec![TeleportSource::Prior],
            TeleportChoice::Auto => vec![TeleportSource::Base, TeleportSource::Prior],
        }
    }
}

impl std::str::FromStr for TeleportChoice {
    type Err = ClpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(TeleportChoice::Base),
            "prior" => Ok(TeleportChoice::Prior),
            "auto" => Ok(TeleportChoice::Auto),
            other => Err(ClpError::InvalidArgument(format!("expected base|prior|auto, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Directory holding the TSV files and optionally a manifest.
    Dir(PathBuf),
    Synthetic(SyntheticSpec),
}

pub fn default_alpha_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub scheme: SplitScheme,
    pub seeds: Vec<u64>,
    pub method: Method,
    pub alpha_grid: Vec<f64>,
    pub mlp: TrainConfig,
    /// `alpha` here is ignored in favour of `alpha_grid`.
    pub propagation: PropagationConfig,
    pub normalize_messages: Choice,
    pub teleport: TeleportChoice,
    pub standardize_features: bool,
    pub directed: bool,
    pub partial_labels: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Dir(PathBuf::from(".")),
            scheme: SplitScheme::Medium,
            seeds: (0..10).collect(),
            method: Method::Clp,
            alpha_grid: default_alpha_grid(),
            mlp: TrainConfig::default(),
            propagation: PropagationConfig {
                tol: PIPELINE_TOL,
                star_adjacency: AdjacencyNormalization::Symmetric,
                ..PropagationConfig::default()
            },
            normalize_messages: Choice::Auto,
            teleport: TeleportChoice::Auto,
            standardize_features: true,
            directed: false,
            partial_labels: false,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(ClpError::InvalidArgument("seeds must be nonempty".into()));
        }
        if self.alpha_grid.is_empty() {
            return Err(ClpError::InvalidArgument("alpha grid must be nonempty".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(ClpError::InvalidArgument(format!("alpha {a} outside (0, 1)")));
        }
        self.mlp.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_graph(&self) -> Result<Graph> {
        match &self.dataset {
            DatasetSource::Dir(dir) => load_dataset(
                dir,
                LoadOptions {
                    directed: self.directed,
                    partial_labels: self.partial_labels,
                    num_classes: None,
                },
            ),
            DatasetSource::Synthetic(spec) => Ok(generate(spec)?.0),
        }
    }
}

/// A prepared graph shared by every seed.
pub struct Prepared {
    pub graph: Graph,
    pub features: Matrix,
    /// Unlabelled nodes hold 0 here and never enter an evaluation mask.
    pub labels: Vec<usize>,
    pub true_h: Option<CompatibilityMatrix>,
}

impl Prepared {
    pub fn new(graph: Graph, standardize_features: bool) -> Result<Self> {
        let raw = graph
            .labels()
            .ok_or_else(|| ClpError::MissingLabels("the pipeline needs labels".into()))?;
        let labels = raw.iter().map(|l| l.unwrap_or(0)).collect();
        let fully_labelled = raw.iter().all(Option::is_some);
        let true_h = if fully_labelled && graph.arc_count() > 0 {
            Some(true_compatibility(&graph)?)
        } else {
            None
        };
        let features = if standardize_features {
            standardize(graph.features())
        } else {
            graph.features().clone()
        };
        Ok(Self {
            graph,
            features,
            labels,
            true_h,
        })
    }

    /// Split for one seed, restricted to labelled nodes.
    pub fn split(&self, scheme: SplitScheme, seed: u64) -> Result<SplitMask> {
        let mut mask = make_splits(&self.graph, scheme, seed, 1)?.remove(0);
        let raw = self.graph.labels().expect("checked in new");
        for set in [&mut mask.train, &mut mask.validation, &mut mask.test] {
            set.retain(|&v| raw[v].is_some());
        }
        if mask.train.is_empty() || mask.validation.is_empty() || mask.test.is_empty() {
            return Err(ClpError::MissingLabels(format!("seed {seed}: a partition has no labelled nodes")));
        }
        Ok(mask)
    }
}

/// The base predictor for one seed.
pub struct BaseModel {
    pub params: MlpParams,
    pub log: TrainingLog,
    pub d_hat: Beliefs,
}

pub fn train_base(prep: &Prepared, mask: &SplitMask, mlp: &TrainConfig, seed: u64) -> Result<BaseModel> {
    let config = TrainConfig { seed, ..mlp.clone() };
    let params = init_mlp(
        prep.features.cols(),
        config.hidden_dim,
        config.num_hidden_layers,
        prep.graph.num_classes(),
        seed,
    )?;
    let labels = prep.graph.labels().expect("checked in new");
    let (params, log) = train(&params, &prep.features, labels, mask, &config)?;
    let d_hat = predict(&params, &prep.features)?;
    Ok(BaseModel { params, log, d_hat })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub seed: u64,
    pub alpha: f64,
    pub normalize_messages: Option<bool>,
    pub teleport: Option<TeleportSource>,
    /// `ok`, `skipped_divergent` or `diverged`.
    pub status: String,
    pub iterations: usize,
    pub converged: bool,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVerdicts {
    pub alpha: f64,
    /// One verdict label per class.
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub mlp_test_accuracy: f64,
    /// Two-class graphs only; scored on class 1.
    pub roc_auc: Option<f64>,
    pub chosen_alpha: Option<f64>,
    pub chosen_normalize_messages: Option<bool>,
    pub chosen_teleport: Option<TeleportSource>,
    /// No propagation candidate survived; the MLP prediction was reported.
    pub fallback: bool,
    pub compat_distance: Option<f64>,
    pub verdicts: Vec<AlphaVerdicts>,
    pub mlp_fingerprint: String,
    pub mlp_best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; zero for a single seed.
    pub std: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub scheme: SplitScheme,
    pub per_seed: Vec<SeedReport>,
    pub aggregate: Aggregate,
    pub candidates: Vec<Candidate>,
}

impl RunReport {
    pub fn recompute_aggregate(&self) -> Aggregate {
        Aggregate::of(&self.per_seed.iter().map(|s| s.test_accuracy).collect::<Vec<_>>())
    }

    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from(
            "seed,test_accuracy,val_accuracy,mlp_test_accuracy,chosen_alpha,normalize_messages,teleport,fallback,compat_distance\n",
        );
        for s in &self.per_seed {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{},{},{},{},{}\n",
                s.seed,
                s.test_accuracy,
                s.val_accuracy,
                s.mlp_test_accuracy,
                opt(s.chosen_alpha.map(|a| format!("{a}"))),
                opt(s.chosen_normalize_messages.map(|b| b.to_string())),
                opt(s.chosen_teleport.map(teleport_name)),
                s.fallback,
                opt(s.compat_distance.map(|d| format!("{d:.6}"))),
            ));
        }
        out.push_str(&format!("mean,{:.6}\nstd,{:.6}\n", self.aggregate.mean, self.aggregate.std));
        out
    }

    pub fn candidates_csv(&self) -> String {
        let mut out = String::from("seed,alpha,normalize_messages,teleport,status,iterations,converged,val_acc,test_acc\n");
        for c in &self.candidates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.seed,
                c.alpha,
                opt(c.normalize_messages.map(|b| b.to_string())),
                opt(c.teleport.map(teleport_name)),
                c.status,
                c.iterations,
                c.converged,
                opt(c.val_acc.map(|a| format!("{a:.6}"))),
                opt(c.test_acc.map(|a| format!("{a:.6}"))),
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(REPORT_FILE), serde_json::to_string_pretty(self)?.as_bytes())?;
        write_atomic(&dir.join(PER_SEED_FILE), self.per_seed_csv().as_bytes())?;
        write_atomic(&dir.join(CANDIDATES_FILE), self.candidates_csv().as_bytes())
    }
}

fn opt(v: Option<String>) -> String {
    v.unwrap_or_else(|| "NA".into())
}

fn teleport_name(t: TeleportSource) -> String {
    match t {
        TeleportSource::Base => "base".into(),
        TeleportSource::Prior => "prior".into(),
    }
}

struct Evaluated {
    candidate: Candidate,
    beliefs: Option<Matrix>,
}

fn evaluate(prep: &Prepared, mask: &SplitMask, mut candidate: Candidate, outcome: Result<crate::propagation::Propagation>) -> Result<Evaluated> {
    match outcome {
        Ok(p) => {
            candidate.status = "ok".into();
            candidate.iterations = p.iterations();
            candidate.converged = p.converged;
            candidate.val_acc = Some(accuracy(&p.beliefs.values, &prep.labels, &mask.validation)?);
            candidate.test_acc = Some(accuracy(&p.beliefs.values, &prep.labels, &mask.test)?);
            Ok(Evaluated {
                candidate,
                beliefs: Some(p.beliefs.values),
            })
        }
        Err(ClpError::Divergence { iterations, residual }) => {
            log::warn!(
                "seed {} alpha {}: diverged after {iterations} iterations (residual {residual:e})",
                candidate.seed,
                candidate.alpha
            );
            candidate.status = "diverged".into();
            candidate.iterations = iterations;
            Ok(Evaluated {
                candidate,
                beliefs: None,
            })
        }
        Err(e) => Err(e),
    }
}

fn blank(seed: u64, alpha: f64, normalize: Option<bool>, teleport: Option<TeleportSource>) -> Candidate {
    Candidate {
        seed,
        alpha,
        normalize_messages: normalize,
        teleport,
        status: String::new(),
        iterations: 0,
        converged: false,
        val_acc: None,
        test_acc: None,
    }
}

/// Everything computed for one seed.
pub struct SeedOutcome {
    pub report: SeedReport,
    pub candidates: Vec<Candidate>,
    pub base: BaseModel,
    pub mask: SplitMask,
    pub h_hat: Option<CompatibilityMatrix>,
    /// Final predictions of the reported method.
    pub beliefs: Matrix,
}

/// Runs one seed of `config.method` on a prepared graph.
pub fn run_seed(prep: &Prepared, config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let mask = prep.split(config.scheme, seed)?;
    let base = train_base(prep, &mask, &config.mlp, seed)?;
    let d_hat = &base.d_hat.values;
    let mlp_test = accuracy(d_hat, &prep.labels, &mask.test)?;
    let mlp_val = accuracy(d_hat, &prep.labels, &mask.validation)?;
    let k = prep.graph.num_classes();

    let mut evaluated = Vec::new();
    let mut verdicts = Vec::new();
    let mut h_hat = None;
    let prop = |alpha: f64, normalize: bool| PropagationConfig {
        alpha,
        message_normalization: normalize,
        ..config.propagation.clone()
    };

    match config.method {
        Method::MlpOnly => {}
        Method::Lp => {
            let y = one_hot_partial(prep.graph.labels().expect("labelled"), k)?;
            for &alpha in &config.alpha_grid {
                let out = propagate_lp(&prep.graph, &y, &mask.train, &prop(alpha, false));
                evaluated.push(evaluate(prep, &mask, blank(seed, alpha, None, None), out)?);
            }
        }
        Method::Clp | Method::ClpStar => {
            let y = one_hot_partial(prep.graph.labels().expect("labelled"), k)?;
            let b0 = prior_beliefs(&base.d_hat, &y, &mask.train)?;
            let est = estimate_compatibility(&prep.graph, &b0, &y, &mask.train, SINKHORN_TOL)?;
            let teleports: Vec<(TeleportSource, &Matrix)> = config
                .teleport
                .sources()
                .into_iter()
                .map(|t| (t, if t == TeleportSource::Base { d_hat } else { &b0.values }))
                .collect();
            if config.method == Method::Clp {
                let awf = edge_weights(&prep.graph, &b0, &est)?;
                let spectra = SliceSpectra::new(&awf);
                for &alpha in &config.alpha_grid {
                    let classes = spectra.verdicts(alpha)?;
                    let divergent = classes.iter().any(|c| matches!(c.verdict, Verdict::Divergent { .. }));
                    verdicts.push(AlphaVerdicts {
                        alpha,
                        classes: classes.iter().map(|c| c.verdict.label().to_string()).collect(),
                    });
                    for normalize in config.normalize_messages.message_modes() {
                        for &(source, teleport) in &teleports {
                            let cand = blank(seed, alpha, Some(normalize), Some(source));
                            // the verdict speaks to the linear operator only
                            if divergent && !normalize {
                                let mut cand = cand;
                                cand.status = "skipped_divergent".into();
                                evaluated.push(Evaluated {
                                    candidate: cand,
                                    beliefs: None,
                                });
                                continue;
                            }
                            let out = propagate_clp(&awf, teleport, &prop(alpha, normalize));
                            evaluated.push(evaluate(prep, &mask, cand, out)?);
                        }
                    }
                }
            } else {
                let adjacency = receiver_adjacency(&prep.graph, config.propagation.star_adjacency);
                let rho_a = spectral_radius(&adjacency, 2000, 1e-10)?.rho;
                let rho_h = spectral_radius(&crate::sparse::SparseMatrix::from_dense(&est.values), 2000, 1e-12)?.rho;
                for &alpha in &config.alpha_grid {
                    let rho = rho_a * rho_h;
                    let v = if alpha * rho < 1.0 {
                        Verdict::Convergent { rho }
                    } else {
                        Verdict::Divergent { rho }
                    };
                    verdicts.push(AlphaVerdicts {
                        alpha,
                        classes: vec![v.label().to_string()],
                    });
                    for &(source, teleport) in &teleports {
                        let cand = blank(seed, alpha, None, Some(source));
                        if !v.is_convergent() {
                            let mut cand = cand;
                            cand.status = "skipped_divergent".into();
                            evaluated.push(Evaluated {
                                candidate: cand,
                                beliefs: None,
                            });
                            continue;
                        }
                        let out = propagate_clp_star(&prep.graph, teleport, &est, &prop(alpha, false));
                        evaluated.push(evaluate(prep, &mask, cand, out)?);
                    }
                }
            }
            h_hat = Some(est);
        }
    }

    // strict improvement keeps the earliest candidate on ties
    let mut best: Option<&Evaluated> = None;
    for e in &evaluated {
        if let Some(v) = e.candidate.val_acc {
            if best.map_or(true, |b| v > b.candidate.val_acc.expect("scored")) {
                best = Some(e);
            }
        }
    }
    let fallback = config.method != Method::MlpOnly && best.is_none();
    if fallback {
        log::warn!("seed {seed}: every propagation candidate diverged; reporting the MLP prediction");
    }
    let (beliefs, test_accuracy, val_accuracy) = match best {
        Some(b) => (
            b.beliefs.clone().expect("scored candidates keep beliefs"),
            b.candidate.test_acc.expect("scored"),
            b.candidate.val_acc.expect("scored"),
        ),
        None => (d_hat.clone(), mlp_test, mlp_val),
    };
    let roc = if k == 2 {
        let scores = beliefs.column(1);
        let positive: Vec<bool> = prep.labels.iter().map(|&l| l == 1).collect();
        roc_auc(&scores, &positive, &mask.test).ok()
    } else {
        None
    };
    let compat_distance = match (&prep.true_h, &h_hat) {
        (Some(h), Some(hh)) => Some(compat_distance(h, hh)?),
        _ => None,
    };
    let report = SeedReport {
        seed,
        test_accuracy,
        val_accuracy,
        mlp_test_accuracy: mlp_test,
        roc_auc: roc,
        chosen_alpha: best.map(|b| b.candidate.alpha),
        chosen_normalize_messages: best.and_then(|b| b.candidate.normalize_messages),
        chosen_teleport: best.and_then(|b| b.candidate.teleport),
        fallback,
        compat_distance,
        verdicts,
        mlp_fingerprint: base.params.fingerprint(),
        mlp_best_epoch: base.log.best_epoch,
    };
    Ok(SeedOutcome {
        report,
        candidates: evaluated.into_iter().map(|e| e.candidate).collect(),
        base,
        mask,
        h_hat,
        beliefs,
    })
}

/// Runs every seed in parallel, keeping the per-seed artifacts.
pub fn run_detailed(prep: &Prepared, config: &ExperimentConfig) -> Result<(RunReport, Vec<SeedOutcome>)> {
    config.validate()?;
    let mut outcomes: Vec<SeedOutcome> = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(prep, config, seed))
        .collect::<Result<_>>()?;
    let mut per_seed = Vec::with_capacity(outcomes.len());
    let mut candidates = Vec::new();
    for o in &mut outcomes {
        per_seed.push(o.report.clone());
        candidates.append(&mut o.candidates);
    }
    let mut report = RunReport {
        method: config.method,
        scheme: config.scheme,
        per_seed,
        aggregate: Aggregate::of(&[]),
        candidates,
    };
    report.aggregate = report.recompute_aggregate();
    Ok((report, outcomes))
}

/// Runs every seed in parallel on an already prepared graph.
pub fn run_prepared(prep: &Prepared, config: &ExperimentConfig) -> Result<RunReport> {
    Ok(run_detailed(prep, config)?.0)
}

/// Loads or generates the dataset, runs every seed and writes the report
/// files when `output_dir` is set.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let prep = Prepared::new(config.load_graph()?, config.standardize_features)?;
    let report = run_prepared(&prep, config)?;
    if let Some(dir) = &config.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: f64,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("h,method,mean,std,n_seeds\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{:.6},{}\n", r.h, r.method.name(), r.mean, r.std, r.n_seeds));
    }
    out
}

/// Accuracy per (homophily, method) on graphs generated from the synthetic
/// dataset of `base` with `p_in_fraction` set to each grid value. The graph
/// for one `h` is shared by every method.
pub fn sweep_homophily(base: &ExperimentConfig, h_grid: &[f64], methods: &[Method]) -> Result<Vec<SweepRow>> {
    let DatasetSource::Synthetic(spec) = &base.dataset else {
        return Err(ClpError::InvalidArgument("a sweep needs a synthetic dataset".into()));
    };
    let mut rows = Vec::new();
    for &h in h_grid {
        let spec = SyntheticSpec {
            p_in_fraction: h,
            ..*spec
        };
        let prep = Prepared::new(generate(&spec)?.0, base.standardize_features)?;
        for &method in methods {
            let cfg = ExperimentConfig {
                method,
                dataset: DatasetSource::Synthetic(spec),
                ..base.clone()
            };
            let report = run_prepared(&prep, &cfg)?;
            rows.push(SweepRow {
                h,
                method,
                mean: report.aggregate.mean,
                std: report.aggregate.std,
                n_seeds: report.aggregate.n,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatQualityRow {
    pub scheme: SplitScheme,
    pub label_rate: f64,
    pub mean_dist: f64,
    pub std_dist: f64,
    pub mean_acc: f64,
}

pub fn compat_quality_csv(rows: &[CompatQualityRow]) -> String {
    let mut out = String::from("scheme,label_rate,mean_dist,std_dist,mean_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.scheme.name(),
            r.scheme.ratios().0,
            r.mean_dist,
            r.std_dist,
            r.mean_acc
        ));
    }
    out
}

/// Distance between true and estimated compatibility, and test accuracy,
/// for each split scheme. Uses the configured method when it estimates
/// compatibility, otherwise CLP.
pub fn report_compat_quality(config: &ExperimentConfig, schemes: &[SplitScheme]) -> Result<Vec<CompatQualityRow>> {
    let prep = Prepared::new(config.load_graph()?, config.standardize_features)?;
    if prep.true_h.is_none() {
        return Err(ClpError::MissingLabels("compatibility quality needs every node labelled".into()));
    }
    let method = match config.method {
        Method::Clp | Method::ClpStar => config.method,
        _ => Method::Clp,
    };
    schemes
        .iter()
        .map(|&scheme| {
            let cfg = ExperimentConfig {
                scheme,
                method,
                ..config.clone()
            };
            let report = run_prepared(&prep, &cfg)?;
            let dists: Vec<f64> = report.per_seed.iter().filter_map(|s| s.compat_distance).collect();
            let d = Aggregate::of(&dists);
            Ok(CompatQualityRow {
                scheme,
                label_rate: scheme.ratios().0,
                mean_dist: d.mean,
                std_dist: d.std,
                mean_acc: report.aggregate.mean,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub isolated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub node_count: usize,
    pub arc_count: usize,
    pub num_classes: usize,
    pub edge_homophily: f64,
    pub node_homophily: f64,
    pub true_compatibility: Vec<Vec<f64>>,
    pub undefined_compatibility_rows: Vec<usize>,
    pub out_degree: DegreeStats,
    /// Node count per local-homophily bucket, then nodes with undefined h_v.
    pub local_homophily_histogram: Vec<usize>,
    pub local_homophily_undefined: usize,
}

/// Homophily and degree statistics of a fully labelled graph.
pub fn inspect(graph: &Graph) -> Result<Diagnostics> {
    let report = homophily_report(graph)?;
    let h = true_compatibility(graph)?;
    let n = graph.node_count();
    let degrees: Vec<usize> = (0..n).map(|v| graph.out_arcs().degree(v)).collect();
    let mut hist = vec![0; crate::metrics::BUCKET_COUNT];
    for &(_, hv) in &report.per_node {
        hist[crate::metrics::bucket_of(hv)] += 1;
    }
    Ok(Diagnostics {
        node_count: n,
        arc_count: graph.arc_count(),
        num_classes: graph.num_classes(),
        edge_homophily: report.edge_homophily,
        node_homophily: report.node_homophily,
        true_compatibility: h.values.iter_rows().map(<[f64]>::to_vec).collect(),
        undefined_compatibility_rows: h.undefined_rows.clone(),
        out_degree: DegreeStats {
            min: degrees.iter().copied().min().unwrap_or(0),
            max: degrees.iter().copied().max().unwrap_or(0),
            mean: graph.arc_count() as f64 / n.max(1) as f64,
            isolated: degrees.iter().filter(|&&d| d == 0).count(),
        },
        local_homophily_histogram: hist,
        local_homophily_undefined: n - report.per_node.len(),
    })
}

/// Per-bucket test accuracy of the reported predictions of one seed.
pub fn bucket_report(prep: &Prepared, outcome: &SeedOutcome) -> Result<BucketTable> {
    bucket_accuracy(&outcome.beliefs, &prep.graph, &outcome.mask.test)
}
