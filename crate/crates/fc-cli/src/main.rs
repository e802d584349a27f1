//! `fc`: functional-connectivity classification pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fc_core::connectivity::{build_feature_matrix, FeatureMatrix, Method, ShrinkageConfig};
use fc_core::dataset::{self, split_stratified_labels};
use fc_core::dimred::{self, PcaSelect};
use fc_core::evaluation::{derive_seed, repeated_cv, replicated_split, StdMode};
use fc_core::recurrent::CellKind;
use fc_core::tuning::{grid_search_recurrent, HyperGrid};

use fc_cli::config::{ModelConfig, ModelKind, PipelineConfig};
use fc_cli::models::{fit_model, parse_optimizer};
use fc_cli::pipeline::run_pipeline;
use fc_cli::report::{render_table, Report};

#[derive(Parser)]
#[command(
    name = "fc",
    about = "Functional-connectivity classification: features, PCA, models, evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled cohort of ROI time series.
    Synth(SynthArgs),
    /// Compute per-subject connectivity and write the cohort feature matrix.
    Connectivity(ConnectivityArgs),
    /// Fit PCA on a feature matrix and write the projected scores.
    Pca(PcaArgs),
    /// Grid-search optimizer x learning rate x batch size for LSTM/GRU.
    Tune(TuneArgs),
    /// Train one model on a feature matrix and save it.
    Train(TrainArgs),
    /// Evaluate a model config under repeated CV or replicated splits.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline from a TOML config.
    Pipeline(PipelineArgs),
    /// Render a stored report as a table or structured JSON.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    n_per_class: usize,
    #[arg(long, default_value_t = 60)]
    t: usize,
    #[arg(long, default_value_t = 20)]
    r: usize,
    #[arg(long, default_value_t = 0.8)]
    effect: f64,
    #[arg(long)]
    seed: u64,
    /// Output directory; series land in <dir>/series, labels in
    /// <dir>/labels.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ConnectivityArgs {
    /// pearson | spearman | partial
    #[arg(long)]
    method: String,
    /// Shrinkage weight for partial correlation.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Directory of <id>.csv or <id>.tsv series files.
    #[arg(long = "in")]
    input: PathBuf,
    /// labels.csv with header id,label.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcaArgs {
    /// Fixed component count.
    #[arg(long, conflicts_with = "var")]
    k: Option<usize>,
    /// Explained-variance target in (0, 1].
    #[arg(long)]
    var: Option<f64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    /// lstm | gru
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 10)]
    neurons: usize,
    #[arg(long)]
    features: PathBuf,
    /// Optional TOML grid file overriding the default axes.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    replicates: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelFlags {
    /// lr | lsvc | ksvc | rfc | abc | lstm | gru
    #[arg(long)]
    model: String,
    /// Optional TOML file of model parameters (same keys as the pipeline
    /// [model] section, kind excluded); explicit flags win over it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    neurons: Option<usize>,
    /// adam | nadam | adagrad
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    c_reg: Option<f64>,
    /// l1 | l2 | elasticnet[:alpha]
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// gini | entropy
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    estimators: Option<usize>,
    #[arg(long)]
    ab_lr: Option<f64>,
    /// off | half | <count>
    #[arg(long)]
    rfe: Option<String>,
    /// off | mean | <value>
    #[arg(long)]
    sfm: Option<String>,
}

impl ModelFlags {
    fn resolve(&self) -> Result<ModelConfig> {
        let kind: ModelKind = self.model.parse()?;
        let mut cfg = ModelConfig::new(kind);
        if let Some(path) = &self.params {
            // Merge the params file over the defaults generically: the file
            // carries the same keys as the [model] section, kind excluded.
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let overrides: toml::Table = text.parse()?;
            let mut base = toml::Table::try_from(&cfg)?;
            for (key, value) in overrides {
                if key == "kind" {
                    bail!("--params file must not set kind; use --model");
                }
                if !base.contains_key(&key) {
                    bail!("unknown model parameter {key:?} in {}", path.display());
                }
                base.insert(key, value);
            }
            cfg = base.try_into()?;
        }
        if let Some(v) = self.neurons {
            cfg.neurons = v;
        }
        if let Some(v) = &self.optimizer {
            cfg.optimizer = v.clone();
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.c_reg {
            cfg.c_reg = v;
        }
        if let Some(v) = &self.penalty {
            cfg.penalty = v.clone();
        }
        if self.gamma.is_some() {
            cfg.gamma = self.gamma;
        }
        if let Some(v) = self.trees {
            cfg.trees = v;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = &self.criterion {
            cfg.criterion = v.clone();
        }
        if let Some(v) = self.estimators {
            cfg.estimators = v;
        }
        if let Some(v) = self.ab_lr {
            cfg.ab_learning_rate = v;
        }
        if let Some(v) = &self.rfe {
            cfg.rfe = v.clone();
        }
        if let Some(v) = &self.sfm {
            cfg.sfm = v.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch loss trace (recurrent models only).
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    features: PathBuf,
    /// cv | split
    #[arg(long, default_value = "cv")]
    protocol: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// sample | population
    #[arg(long, default_value = "sample")]
    std: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// table | structured
    #[arg(long, default_value = "table")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn core_err(e: fc_core::Error) -> anyhow::Error {
    anyhow!("{e}")
}

fn std_mode(s: &str) -> Result<StdMode> {
    match s {
        "sample" => Ok(StdMode::Sample),
        "population" => Ok(StdMode::Population),
        other => bail!("unknown std convention {other:?}"),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cohort = dataset::generate_synthetic_cohort(
        args.n_per_class,
        args.t,
        args.r,
        args.effect,
        args.seed,
    )
    .map_err(core_err)?;
    let series_dir = args.out_dir.join("series");
    let labels = args.out_dir.join("labels.csv");
    dataset::save_cohort(&cohort, &series_dir, &labels).map_err(core_err)?;
    println!("{}", cohort.summary());
    println!("series:      {}", series_dir.display());
    println!("labels:      {}", labels.display());
    Ok(())
}

fn cmd_connectivity(args: ConnectivityArgs) -> Result<()> {
    let method: Method = args.method.parse().map_err(core_err)?;
    let cfg = ShrinkageConfig::new(args.lambda).map_err(core_err)?;
    let cohort = dataset::load_cohort(&args.input, &args.labels).map_err(core_err)?;
    let fm = build_feature_matrix(&cohort, method, &cfg).map_err(core_err)?;
    fm.write_csv(&args.out).map_err(core_err)?;
    println!(
        "{} x {} features ({method}) -> {}",
        fm.n(),
        fm.f(),
        args.out.display()
    );
    Ok(())
}

fn cmd_pca(args: PcaArgs) -> Result<()> {
    let select = match (args.k, args.var) {
        (Some(k), None) => PcaSelect::Components(k),
        (None, Some(v)) => PcaSelect::VarianceTarget(v),
        (None, None) => PcaSelect::VarianceTarget(0.8),
        (Some(_), Some(_)) => bail!("--k and --var are mutually exclusive"),
    };
    let fm = FeatureMatrix::read_csv(&args.input).map_err(core_err)?;
    let model = dimred::fit_pca(&fm, select).map_err(core_err)?;
    dimred::save_model(&model, &args.model_out).map_err(core_err)?;
    let scores = dimred::transform(&model, &fm).map_err(core_err)?;
    scores.write_csv(&args.out).map_err(core_err)?;
    println!(
        "{} -> {} components (explained ratio {:.4}) -> {}",
        fm.f(),
        model.k(),
        model.explained_ratio.sum(),
        args.out.display()
    );
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let kind: CellKind = args.model.parse().map_err(core_err)?;
    let fm = FeatureMatrix::read_csv(&args.features).map_err(core_err)?;

    let mut grid = HyperGrid {
        replicates: args.replicates,
        ..HyperGrid::default()
    };
    if let Some(path) = &args.grid {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct GridFile {
            optimizers: Option<Vec<String>>,
            learning_rates: Option<Vec<f64>>,
            batch_sizes: Option<Vec<usize>>,
            replicates: Option<usize>,
        }
        let gf: GridFile = toml::from_str(&text)?;
        if let Some(opts) = gf.optimizers {
            grid.optimizers = opts
                .iter()
                .map(|s| parse_optimizer(s))
                .collect::<Result<_>>()?;
        }
        if let Some(lrs) = gf.learning_rates {
            grid.learning_rates = lrs;
        }
        if let Some(bs) = gf.batch_sizes {
            grid.batch_sizes = bs;
        }
        if let Some(r) = gf.replicates {
            grid.replicates = r;
        }
    }

    // Nested split: 64/16/20, tuning sees train and validation only.
    let plan =
        split_stratified_labels(&fm.labels, (0.64, 0.16, 0.20), args.seed).map_err(core_err)?;
    let train = fm.subset_rows(&plan.train_idx);
    let val = fm.subset_rows(&plan.val_idx);
    let result = grid_search_recurrent(
        kind,
        args.neurons,
        &train,
        &val,
        &grid,
        args.epochs,
        derive_seed(args.seed, 4),
    )
    .map_err(core_err)?;

    let best = result.best_cell();
    println!(
        "best: optimizer {}, lr {}, batch {} (score {:.4}) over {} cells",
        best.optimizer,
        best.learning_rate,
        best.batch_size,
        result.best_score,
        result.cells.len()
    );
    let text = serde_json::to_string_pretty(&result)?;
    std::fs::write(&args.out, text)?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.model.resolve()?;
    let fm = FeatureMatrix::read_csv(&args.features).map_err(core_err)?;
    let artifacts = fit_model(&cfg, &fm, args.seed)?;
    artifacts.save_json(&args.model_out)?;
    if let Some(outcome) = &artifacts.train_outcome {
        println!(
            "stopped at epoch {}, best epoch {} (val loss {:.6})",
            outcome.stop_epoch, outcome.best_epoch, outcome.best_val_loss
        );
        if let Some(path) = &args.trace_out {
            let mut trace = String::from("epoch,train_loss,val_loss\n");
            for (i, rec) in outcome.trace.iter().enumerate() {
                trace.push_str(&format!("{},{},{}\n", i + 1, rec.train_loss, rec.val_loss));
            }
            std::fs::write(path, trace)?;
        }
    }
    println!("model -> {}", args.model_out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = args.model.resolve()?;
    let fm = FeatureMatrix::read_csv(&args.features).map_err(core_err)?;
    let mode = std_mode(&args.std)?;
    let callback = |train: &FeatureMatrix, test: &FeatureMatrix, seed: u64| {
        fc_cli::models::fit_score(&cfg, train, test, seed)
    };
    let metrics = match args.protocol.as_str() {
        "cv" => repeated_cv(&fm, args.k, args.repeats, args.seed, mode, &callback),
        "split" => replicated_split(
            &fm,
            args.test_fraction,
            args.replicates,
            args.seed,
            mode,
            &callback,
        ),
        other => bail!("unknown protocol {other:?} (cv or split)"),
    }
    .map_err(core_err)?;

    #[derive(serde::Serialize)]
    struct EvalHeader<'a> {
        model: &'a ModelConfig,
        protocol: &'a str,
        k: usize,
        repeats: usize,
        replicates: usize,
        test_fraction: f64,
        std: &'a str,
        seed: u64,
    }
    let report = Report::new(
        EvalHeader {
            model: &cfg,
            protocol: &args.protocol,
            k: args.k,
            repeats: args.repeats,
            replicates: args.replicates,
            test_fraction: args.test_fraction,
            std: &args.std,
            seed: args.seed,
        },
        metrics.clone(),
    )?;
    report.save_json(&args.out)?;
    print!("{}", render_table(&metrics));
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let cfg = PipelineConfig::from_path(&args.config)?;
    let metrics = run_pipeline(&cfg)?;
    print!("{}", render_table(&metrics));
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report = Report::load_json(&args.input)?;
    let rendered = match args.format.as_str() {
        "table" => render_table(&report.metrics),
        "structured" => serde_json::to_string_pretty(&report)? + "\n",
        other => bail!("unknown format {other:?} (table or structured)"),
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Connectivity(args) => cmd_connectivity(args),
        Command::Pca(args) => cmd_pca(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
