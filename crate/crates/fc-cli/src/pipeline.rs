//! End-to-end orchestration: ingest -> connectivity -> PCA -> tune ->
//! train -> evaluate -> report, with every stage persisted under the run's
//! output directory and a stage log on stderr.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use fc_core::connectivity::{build_feature_matrix, FeatureMatrix, Method, ShrinkageConfig};
use fc_core::dataset::{self, Cohort};
use fc_core::dimred::{self, PcaSelect};
use fc_core::evaluation::{derive_seed, repeated_cv, replicated_split, MetricReport};
use fc_core::recurrent::CellKind;
use fc_core::tuning::{grid_search_recurrent, HyperGrid, TuningResult};

use crate::config::{ModelConfig, ModelKind, PcaMode, PipelineConfig, Protocol, TuningConfig};
use crate::models::{self, fit_model};
use crate::report::{render_table, Report};

fn stage(name: &str, detail: &str) {
    eprintln!("[{name}] {detail}");
}

fn core_err(e: fc_core::Error) -> anyhow::Error {
    anyhow!("{e}")
}

/// Resolve the PCA selection from config.
fn pca_select(cfg: &PipelineConfig) -> Result<Option<PcaSelect>> {
    Ok(match cfg.pca.mode {
        PcaMode::Off => None,
        PcaMode::Components => {
            let k = cfg
                .pca
                .k
                .context("pca.mode = \"components\" requires pca.k")?;
            Some(PcaSelect::Components(k))
        }
        PcaMode::Variance => Some(PcaSelect::VarianceTarget(cfg.pca.variance_target)),
    })
}

fn ingest(cfg: &PipelineConfig, out_dir: &Path) -> Result<Cohort> {
    let cohort = match cfg.data.source {
        crate::config::DataSource::Synthetic => {
            let c = dataset::generate_synthetic_cohort(
                cfg.data.n_per_class,
                cfg.data.t,
                cfg.data.r,
                cfg.data.effect,
                cfg.seed,
            )
            .map_err(core_err)?;
            // Persist the generated cohort so later stages are restartable
            // from disk.
            let series_dir = out_dir.join("cohort");
            dataset::save_cohort(&c, &series_dir, &out_dir.join("labels.csv")).map_err(core_err)?;
            c
        }
        crate::config::DataSource::Directory => {
            let series_dir = cfg.data.series_dir.as_ref().expect("validated");
            let labels = cfg.data.labels_file.as_ref().expect("validated");
            dataset::load_cohort(series_dir, labels).map_err(core_err)?
        }
    };
    stage(
        "ingest",
        &format!("{}", cohort.summary()).replace('\n', "; "),
    );
    Ok(cohort)
}

fn connectivity_stage(
    cfg: &PipelineConfig,
    cohort: &Cohort,
    out_dir: &Path,
) -> Result<FeatureMatrix> {
    let method: Method = cfg.connectivity.method.parse().map_err(core_err)?;
    let shrink = ShrinkageConfig::new(cfg.connectivity.lambda).map_err(core_err)?;
    let features = build_feature_matrix(cohort, method, &shrink).map_err(core_err)?;
    features
        .write_csv(&out_dir.join("features.csv"))
        .map_err(core_err)?;
    stage(
        "connectivity",
        &format!(
            "method {} -> {} x {} feature matrix",
            method,
            features.n(),
            features.f()
        ),
    );
    Ok(features)
}

/// Returns the matrix the model sees plus whether PCA must instead be fit
/// inside each train split (leakage-safe mode).
fn pca_stage(
    cfg: &PipelineConfig,
    features: FeatureMatrix,
    out_dir: &Path,
) -> Result<(FeatureMatrix, bool)> {
    let Some(select) = pca_select(cfg)? else {
        stage("pca", &format!("off; feature width stays {}", features.f()));
        return Ok((features, false));
    };
    if cfg.pca.fit_on_train_only {
        stage(
            "pca",
            "deferred: fitting on training rows inside each evaluation split",
        );
        return Ok((features, true));
    }
    let model = dimred::fit_pca(&features, select).map_err(core_err)?;
    dimred::save_model(&model, &out_dir.join("pca_model.txt")).map_err(core_err)?;
    let scores = dimred::transform(&model, &features).map_err(core_err)?;
    scores
        .write_csv(&out_dir.join("scores.csv"))
        .map_err(core_err)?;
    let kept: f64 = model.explained_ratio.sum();
    stage(
        "pca",
        &format!(
            "feature width {} -> {} (explained ratio {:.4})",
            features.f(),
            scores.f(),
            kept
        ),
    );
    Ok((scores, false))
}

fn hyper_grid(tc: &TuningConfig) -> Result<HyperGrid> {
    let mut grid = HyperGrid {
        replicates: tc.replicates,
        ..HyperGrid::default()
    };
    if let Some(opts) = &tc.optimizers {
        grid.optimizers = opts
            .iter()
            .map(|s| models::parse_optimizer(s))
            .collect::<Result<_>>()?;
    }
    if let Some(lrs) = &tc.learning_rates {
        grid.learning_rates = lrs.clone();
    }
    if let Some(bs) = &tc.batch_sizes {
        grid.batch_sizes = bs.clone();
    }
    Ok(grid)
}

fn tuning_stage(
    cfg: &PipelineConfig,
    model_cfg: &mut ModelConfig,
    features: &FeatureMatrix,
    out_dir: &Path,
) -> Result<Option<TuningResult>> {
    if !cfg.tuning.enabled {
        return Ok(None);
    }
    let kind = match model_cfg.kind {
        ModelKind::Lstm => CellKind::Lstm,
        ModelKind::Gru => CellKind::Gru,
        other => bail!("tuning requires a recurrent model, got {other}"),
    };
    // Nested 80/20-of-train split: train vs validation drive the sweep.
    let plan = dataset::split_stratified_labels(
        &features.labels,
        (0.64, 0.16, 0.20),
        derive_seed(cfg.seed, 3),
    )
    .map_err(core_err)?;
    let train = features.subset_rows(&plan.train_idx);
    let val = features.subset_rows(&plan.val_idx);

    let grid = hyper_grid(&cfg.tuning)?;
    let result = grid_search_recurrent(
        kind,
        model_cfg.neurons,
        &train,
        &val,
        &grid,
        cfg.tuning.max_epochs,
        derive_seed(cfg.seed, 4),
    )
    .map_err(core_err)?;

    let best = result.best_cell();
    stage(
        "tune",
        &format!(
            "{} cells; best ({}, lr {}, batch {}) score {:.4}",
            result.cells.len(),
            best.optimizer,
            best.learning_rate,
            best.batch_size,
            result.best_score
        ),
    );
    model_cfg.optimizer = best.optimizer.to_string();
    model_cfg.learning_rate = best.learning_rate;
    model_cfg.batch_size = best.batch_size;

    let text = serde_json::to_string_pretty(&result)?;
    std::fs::write(out_dir.join("tuning.json"), text)?;
    Ok(Some(result))
}

/// Build the evaluation callback: plain fit/score, or PCA-inside-the-fold
/// when the leakage-safe flag is set.
fn eval_callback<'a>(
    model_cfg: &'a ModelConfig,
    pca_in_fold: Option<PcaSelect>,
) -> impl Fn(&FeatureMatrix, &FeatureMatrix, u64) -> fc_core::Result<Vec<f64>> + Sync + 'a {
    move |train: &FeatureMatrix, test: &FeatureMatrix, seed: u64| {
        if let Some(select) = pca_in_fold {
            let pca = dimred::fit_pca(train, select)?;
            let train_scores = dimred::transform(&pca, train)?;
            let test_scores = dimred::transform(&pca, test)?;
            models::fit_score(model_cfg, &train_scores, &test_scores, seed)
        } else {
            models::fit_score(model_cfg, train, test, seed)
        }
    }
}

fn evaluation_stage(
    cfg: &PipelineConfig,
    model_cfg: &ModelConfig,
    features: &FeatureMatrix,
    pca_in_fold: Option<PcaSelect>,
) -> Result<MetricReport> {
    let std_mode = cfg.evaluation.std_mode()?;
    let callback = eval_callback(model_cfg, pca_in_fold);
    let metrics = match cfg.evaluation.protocol {
        Protocol::Cv => repeated_cv(
            features,
            cfg.evaluation.k,
            cfg.evaluation.repeats,
            derive_seed(cfg.seed, 5),
            std_mode,
            &callback,
        ),
        Protocol::Split => replicated_split(
            features,
            cfg.evaluation.test_fraction,
            cfg.evaluation.replicates,
            derive_seed(cfg.seed, 6),
            std_mode,
            &callback,
        ),
    }
    .map_err(core_err)?;
    stage(
        "evaluate",
        &format!(
            "{:?} protocol, {} scores pooled, mean accuracy {:.2}%",
            cfg.evaluation.protocol, metrics.n_scores, metrics.accuracy.average
        ),
    );
    Ok(metrics)
}

/// Run every stage and return the metric report; artifacts land in
/// `cfg.out_dir` and the resolved configuration (tuning-updated) is echoed
/// into the report header.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    // Present while a run is in flight; an aborted run leaves it behind to
    // label the partial artifacts.
    let marker = out_dir.join("INCOMPLETE");
    std::fs::write(
        &marker,
        "pipeline run in progress; artifacts may be partial\n",
    )?;

    let metrics = run_stages(cfg, &out_dir)?;
    std::fs::remove_file(&marker).ok();
    Ok(metrics)
}

fn run_stages(cfg: &PipelineConfig, out_dir: &Path) -> Result<MetricReport> {
    let out_dir = out_dir.to_path_buf();
    let cohort = ingest(cfg, &out_dir).context("stage ingest failed")?;
    let features =
        connectivity_stage(cfg, &cohort, &out_dir).context("stage connectivity failed")?;
    let (features, pca_deferred) =
        pca_stage(cfg, features, &out_dir).context("stage pca failed")?;

    let mut model_cfg = cfg.model.clone();
    tuning_stage(cfg, &mut model_cfg, &features, &out_dir).context("stage tune failed")?;

    // Final fit on a stratified 80/20 training split; the held-out part is
    // untouched by this artifact.
    let plan = dataset::split_stratified_labels(
        &features.labels,
        (0.8, 0.0, 0.2),
        derive_seed(cfg.seed, 8),
    )
    .map_err(core_err)?;
    let train_fm = features.subset_rows(&plan.train_idx);
    let fit_input = if pca_deferred {
        let select = pca_select(cfg)?.expect("deferred implies selected");
        let pca = dimred::fit_pca(&train_fm, select).map_err(core_err)?;
        dimred::save_model(&pca, &out_dir.join("pca_model.txt")).map_err(core_err)?;
        dimred::transform(&pca, &train_fm).map_err(core_err)?
    } else {
        train_fm
    };
    let artifacts = fit_model(&model_cfg, &fit_input, derive_seed(cfg.seed, 9))
        .context("stage train failed")?;
    artifacts.save_json(&out_dir.join("model.json"))?;
    if let Some(outcome) = &artifacts.train_outcome {
        let mut trace = String::from("epoch,train_loss,val_loss\n");
        for (i, rec) in outcome.trace.iter().enumerate() {
            trace.push_str(&format!("{},{},{}\n", i + 1, rec.train_loss, rec.val_loss));
        }
        std::fs::write(out_dir.join("loss_trace.csv"), trace)?;
        stage(
            "train",
            &format!(
                "stopped at epoch {}, best epoch {} (val loss {:.6})",
                outcome.stop_epoch, outcome.best_epoch, outcome.best_val_loss
            ),
        );
    } else {
        stage("train", &format!("{} fitted", model_cfg.kind));
    }

    let pca_in_fold = if pca_deferred { pca_select(cfg)? } else { None };
    let metrics = evaluation_stage(cfg, &model_cfg, &features, pca_in_fold)
        .context("stage evaluate failed")?;

    // Resolved-config echo: the pipeline config with the post-tuning model
    // section.
    let mut resolved = cfg.clone();
    resolved.model = model_cfg;
    let report = Report::new(&resolved, metrics.clone())?;
    report.save_json(&out_dir.join("report.json"))?;
    std::fs::write(out_dir.join("report.txt"), render_table(&metrics))?;
    stage("report", &format!("written to {}", out_dir.display()));
    Ok(metrics)
}
