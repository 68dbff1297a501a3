use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clp_core::experiment::{
    bucket_report, compat_quality_csv, inspect, report_compat_quality, run_detailed, run_seed, sweep_csv,
    sweep_homophily, train_base, Choice, DatasetSource, ExperimentConfig, Method, Prepared, TeleportChoice,
};
use clp_core::graph::write_atomic;
use clp_core::synth::{generate_to_dir, Preset, P_IN_GRID};
use clp_core::{ClpError, SplitScheme};

/// Compatible label propagation experiments.
#[derive(Parser, Debug)]
#[command(name = "clp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic graphs.
    Synth(Common),
    /// Print homophily, compatibility and degree statistics.
    Inspect(Common),
    /// Train the base MLP only and save checkpoints.
    Train(Common),
    /// Run the full pipeline.
    Run(Common),
    /// Accuracy across homophily levels on synthetic graphs.
    Sweep(Common),
    /// Compatibility estimation quality per split scheme.
    CompatQuality(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Node count relative to the 10,000-node preset.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Same-class share of edges for synthetic graphs, comma separated for sweeps.
    #[arg(long, value_delimiter = ',')]
    homophily: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<SplitScheme>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    directed: bool,
    /// Accept label files that omit some nodes.
    #[arg(long)]
    partial_labels: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_choice)]
    normalize_messages: Option<Choice>,
    #[arg(long, value_parser = parse_teleport)]
    teleport: Option<TeleportChoice>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: ClpError| e.to_string())
}

fn parse_scheme(s: &str) -> Result<SplitScheme, String> {
    s.parse().map_err(|e: ClpError| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: ClpError| e.to_string())
}

fn parse_choice(s: &str) -> Result<Choice, String> {
    s.parse().map_err(|e: ClpError| e.to_string())
}

fn parse_teleport(s: &str) -> Result<TeleportChoice, String> {
    s.parse().map_err(|e: ClpError| e.to_string())
}

enum Failure {
    Usage(String),
    Core(ClpError),
}

impl From<ClpError> for Failure {
    fn from(e: ClpError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

impl Common {
    fn homophily_values(&self) -> Vec<f64> {
        self.homophily.clone().unwrap_or_else(|| P_IN_GRID.to_vec())
    }

    fn config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        match (&self.dataset, self.preset) {
            (Some(_), Some(_)) => return Err(Failure::Usage("--dataset and --preset are exclusive".into())),
            (Some(dir), None) => cfg.dataset = DatasetSource::Dir(dir.clone()),
            (None, Some(preset)) => {
                let seed = cfg.seeds.first().copied().unwrap_or(0);
                cfg.dataset = DatasetSource::Synthetic(preset.spec(self.scale, self.single_homophily_or_mid(), seed)?);
            }
            (None, None) if self.config.is_none() => {
                return Err(Failure::Usage("one of --dataset, --preset or --config is required".into()))
            }
            (None, None) => {}
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(a) = &self.alpha {
            cfg.alpha_grid = a.clone();
        }
        if self.directed {
            cfg.directed = true;
        }
        if self.partial_labels {
            cfg.partial_labels = true;
        }
        if let Some(n) = self.normalize_messages {
            cfg.normalize_messages = n;
        }
        if let Some(t) = self.teleport {
            cfg.teleport = t;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Sweeps take a list of levels; every other command uses one.
    fn single_homophily_or_mid(&self) -> f64 {
        match self.homophily.as_deref() {
            Some([h]) => *h,
            _ => 0.5,
        }
    }

    fn out(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| Failure::Usage("--out is required".into()))
    }
}

fn write(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join(name), text.as_bytes())?;
    Ok(())
}

fn cmd_synth(c: &Common) -> CliResult<()> {
    let preset = c.preset.ok_or_else(|| Failure::Usage("synth needs --preset".into()))?;
    let out = c.out()?;
    let seed = c.seeds.as_ref().and_then(|s| s.first().copied()).unwrap_or(0);
    let levels = c.homophily_values();
    let single = c.homophily.as_ref().is_some_and(|h| h.len() == 1);
    for h in levels {
        let spec = preset.spec(c.scale, h, seed)?;
        let dir = if single { out.to_path_buf() } else { out.join(format!("{}_h{h}", preset.name())) };
        let (_, summary) = generate_to_dir(&spec, &dir)?;
        println!(
            "{}\tn={}\tarcs={}\th={:.4}\tdegree={:.3}",
            dir.display(),
            spec.num_nodes,
            summary.arc_count,
            summary.edge_homophily,
            summary.avg_degree
        );
    }
    Ok(())
}

fn cmd_inspect(c: &Common) -> CliResult<()> {
    let cfg = c.config()?;
    let graph = cfg.load_graph()?;
    let diag = inspect(&graph)?;
    let json = serde_json::to_string_pretty(&diag).map_err(ClpError::from)?;
    println!("{json}");
    if let Some(out) = &c.out {
        write(out, "diagnostics.json", &json)?;
    }
    if c.method.is_some() {
        let prep = Prepared::new(graph, cfg.standardize_features)?;
        let seed = cfg.seeds[0];
        let outcome = run_seed(&prep, &cfg, seed)?;
        let table = bucket_report(&prep, &outcome)?.to_csv();
        print!("{table}");
        if let Some(out) = &c.out {
            write(out, "buckets.csv", &table)?;
        }
    }
    Ok(())
}

fn cmd_train(c: &Common) -> CliResult<()> {
    let cfg = c.config()?;
    let out = c.out()?.to_path_buf();
    let prep = Prepared::new(cfg.load_graph()?, cfg.standardize_features)?;
    for &seed in &cfg.seeds {
        let mask = prep.split(cfg.scheme, seed)?;
        let base = train_base(&prep, &mask, &cfg.mlp, seed)?;
        let dir = out.join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("mlp.bin"), &base.params.to_bytes())?;
        write(&dir, "training_log.csv", &base.log.to_csv())?;
        write(&dir, "base_predictions.tsv", &base.d_hat.to_tsv())?;
        println!(
            "seed {seed}: best epoch {} val acc {:.4} ({})",
            base.log.best_epoch,
            base.log.best_val_acc,
            base.params.fingerprint()
        );
    }
    Ok(())
}

fn cmd_run(c: &Common) -> CliResult<()> {
    let cfg = c.config()?;
    let prep = Prepared::new(cfg.load_graph()?, cfg.standardize_features)?;
    let (report, outcomes) = run_detailed(&prep, &cfg)?;
    if let Some(out) = &cfg.output_dir {
        report.write(out)?;
        for o in &outcomes {
            let dir = out.join(format!("seed{}", o.report.seed));
            let beliefs = clp_core::compat::Beliefs {
                values: o.beliefs.clone(),
                kind: clp_core::compat::BeliefKind::Propagated,
            };
            write(&dir, "beliefs.tsv", &beliefs.to_tsv())?;
            if let Some(h) = &o.h_hat {
                write(&dir, "compatibility.csv", &h.to_csv())?;
                write(&dir, "compatibility.json", &h.sidecar_json()?)?;
            }
        }
    }
    print!("{}", report.per_seed_csv());
    Ok(())
}

fn cmd_sweep(c: &Common) -> CliResult<()> {
    let cfg = c.config()?;
    if !matches!(cfg.dataset, DatasetSource::Synthetic(_)) {
        return Err(Failure::Usage("sweep needs --preset or a synthetic config".into()));
    }
    let methods = match c.method {
        Some(m) => vec![Method::MlpOnly, m],
        None => vec![Method::MlpOnly, Method::Lp, Method::Clp, Method::ClpStar],
    };
    let rows = sweep_homophily(&cfg, &c.homophily_values(), &methods)?;
    let csv = sweep_csv(&rows);
    print!("{csv}");
    if let Some(out) = &cfg.output_dir {
        write(out, "sweep.csv", &csv)?;
    }
    Ok(())
}

fn cmd_compat_quality(c: &Common) -> CliResult<()> {
    let cfg = c.config()?;
    let schemes = match c.scheme {
        Some(s) => vec![s],
        None => vec![SplitScheme::Sparse, SplitScheme::Medium, SplitScheme::Dense],
    };
    let csv = compat_quality_csv(&report_compat_quality(&cfg, &schemes)?);
    print!("{csv}");
    if let Some(out) = &cfg.output_dir {
        write(out, "compat_quality.csv", &csv)?;
    }
    Ok(())
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) | Failure::Core(ClpError::InvalidArgument(_)) => 1,
        Failure::Core(e) if e.is_numerical() => 3,
        Failure::Core(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Synth(c) => cmd_synth(c),
        Command::Inspect(c) => cmd_inspect(c),
        Command::Train(c) => cmd_train(c),
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::CompatQuality(c) => cmd_compat_quality(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
            }
            log::debug!("exiting with code {}", exit_code(&f));
            ExitCode::from(exit_code(&f))
        }
    }
}
