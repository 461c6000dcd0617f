use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::metrics::{metric_ace_error, metric_pehe};
use super::report::{aggregate, EffectReport, Failure, Fold, FoldAudit, ResultRow, Timing, SCHEMA_VERSION};
use super::{DataSource, EstimatorKind, ExperimentConfig, HarnessError};
use crate::data::{generate_synthetic, load_csv, read_schema, split, Dataset, SynthConfig};
use crate::dvae::{save_checkpoint, ModelConfig};
use crate::estimators::{DvaeCivFit, EffectEstimate, NaiveFit, OracleCivFit, TwoStageConfig};

/// Tracks which rows reach fitting routines so leakage can be counted.
struct LeakAudit {
    test_ids: HashSet<usize>,
    leaked: usize,
}

impl LeakAudit {
    fn new(test: &Dataset) -> Self {
        LeakAudit {
            test_ids: test.row_ids.iter().copied().collect(),
            leaked: 0,
        }
    }

    fn fitted_on(&mut self, ds: &Dataset) {
        self.leaked += ds.row_ids.iter().filter(|r| self.test_ids.contains(r)).count();
    }
}

/// Failed replications carry the stage that failed.
type RepOutcome = Result<Replication, (String, HarnessError)>;

struct Replication {
    rows: Vec<ResultRow>,
    audit: FoldAudit,
    artifacts: Vec<String>,
}

/// Rows for both folds of one fitted estimator.
fn score(
    rep: usize,
    seed: u64,
    truth: Option<f64>,
    folds: [(Fold, &Dataset, EffectEstimate); 2],
) -> Result<Vec<ResultRow>, HarnessError> {
    folds
        .into_iter()
        .map(|(fold, ds, est)| {
            let sqrt_pehe = if ds.has_potential_outcomes() {
                let y1 = ds.y1.as_ref().map(|v| v.to_vec());
                let y0 = ds.y0.as_ref().map(|v| v.to_vec());
                Some(metric_pehe(&est.cace, y1.as_deref(), y0.as_deref())?)
            } else {
                None
            };
            Ok(ResultRow {
                replication: rep,
                seed,
                estimator: est.tag.clone(),
                fold,
                ace: est.ace,
                eps_ace: truth.map(|t| metric_ace_error(est.ace, t)),
                sqrt_pehe,
            })
        })
        .collect()
}

fn run_replication(
    cfg: &ExperimentConfig,
    rep: usize,
    loaded: Option<&Dataset>,
    out_dir: &Path,
) -> RepOutcome {
    let seed = cfg.base_seed.wrapping_add(rep as u64);
    let at = |stage: &str| {
        let stage = stage.to_string();
        move |e: HarnessError| (stage, e)
    };
    let ds = match (&cfg.data, loaded) {
        (DataSource::Synthetic { n }, _) => generate_synthetic(&SynthConfig { n: *n, seed }).map_err(|e| ("data".to_string(), e.into()))?,
        (DataSource::Csv { .. }, Some(d)) => d.clone(),
        (DataSource::Csv { .. }, None) => unreachable!("csv data is loaded before replications start"),
    };
    let (train, test) = split(&ds, cfg.train_fraction, seed).map_err(|e| ("split".to_string(), e.into()))?;
    let truth = ds.meta.true_ace;
    let mut audit = LeakAudit::new(&test);
    let overlap = train.row_ids.iter().filter(|r| audit.test_ids.contains(r)).count();

    let model_cfg = ModelConfig {
        seed,
        ..cfg.model.clone()
    };
    let ts_cfg = TwoStageConfig {
        seed,
        ..cfg.two_stage.clone()
    };
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    for &kind in &cfg.estimators {
        audit.fitted_on(&train);
        let stage = kind.tag();
        let (inside, outside) = match kind {
            EstimatorKind::Naive => {
                let fit = NaiveFit::fit(&train).map_err(|e| (stage.to_string(), e.into()))?;
                (fit.estimate(&train), fit.estimate(&test))
            }
            EstimatorKind::OracleCiv => {
                let fit = OracleCivFit::fit(&train, &ts_cfg).map_err(|e| (stage.to_string(), e.into()))?;
                (fit.estimate(&train), fit.estimate(&test))
            }
            EstimatorKind::DvaeCiv => {
                let fit = DvaeCivFit::fit(&train, &model_cfg, &ts_cfg).map_err(|e| (stage.to_string(), e.into()))?;
                if cfg.save_checkpoints {
                    let dir = out_dir.join("checkpoints");
                    let ckpt = format!("checkpoints/rep_{rep:03}.ckpt");
                    let hist = format!("checkpoints/rep_{rep:03}_history.json");
                    fs::create_dir_all(&dir).map_err(|e| at(stage)(e.into()))?;
                    save_checkpoint(&fit.params, &out_dir.join(&ckpt)).map_err(|e| at(stage)(e.into()))?;
                    let json = serde_json::to_string(&fit.history).map_err(|e| at(stage)(e.into()))?;
                    fs::write(out_dir.join(&hist), json).map_err(|e| at(stage)(e.into()))?;
                    artifacts.extend([ckpt, hist]);
                }
                (fit.estimate(&train), fit.estimate(&test))
            }
        };
        let inside = inside.map_err(|e| at(stage)(e.into()))?;
        let outside = outside.map_err(|e| at(stage)(e.into()))?;
        rows.extend(
            score(
                rep,
                seed,
                truth,
                [(Fold::WithinSample, &train, inside), (Fold::OutOfSample, &test, outside)],
            )
            .map_err(at(stage))?,
        );
    }
    Ok(Replication {
        rows,
        audit: FoldAudit {
            replication: rep,
            train_rows: train.len(),
            test_rows: test.len(),
            overlap,
            leaked: audit.leaked,
        },
        artifacts,
    })
}

/// Runs every replication (in parallel), writes `report.json`,
/// `replications.csv` and per-replication checkpoints to the output
/// directory, and returns the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EffectReport, HarnessError> {
    cfg.validate()?;
    let out_dir = cfg.output_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let loaded = match &cfg.data {
        DataSource::Csv { path, schema } => Some(load_csv(path, &read_schema(schema)?)?),
        DataSource::Synthetic { .. } => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let outcomes: Vec<(usize, f64, RepOutcome)> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let t0 = Instant::now();
                let r = run_replication(cfg, rep, loaded.as_ref(), &out_dir);
                log::info!("replication {rep} done in {:.1}s", t0.elapsed().as_secs_f64());
                (rep, t0.elapsed().as_secs_f64(), r)
            })
            .collect()
    });

    let mut report = EffectReport {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        true_ace: match &cfg.data {
            DataSource::Synthetic { .. } => Some(crate::data::SYNTHETIC_ACE),
            DataSource::Csv { .. } => None,
        },
        rows: Vec::new(),
        failures: Vec::new(),
        aggregates: Vec::new(),
        audits: Vec::new(),
        timings: Vec::new(),
        artifacts: Vec::new(),
    };
    for (rep, seconds, outcome) in outcomes {
        report.timings.push(Timing { replication: rep, seconds });
        match outcome {
            Ok(r) => {
                report.rows.extend(r.rows);
                report.audits.push(r.audit);
                report.artifacts.extend(r.artifacts);
            }
            Err((stage, e)) => {
                log::warn!("replication {rep} failed in {stage}: {e}");
                report.failures.push(Failure {
                    replication: rep,
                    seed: cfg.base_seed.wrapping_add(rep as u64),
                    stage,
                    error: e.to_string(),
                });
            }
        }
    }
    report.aggregates = aggregate(&report.rows);
    report.artifacts.extend(["report.json".to_string(), "replications.csv".to_string()]);
    report.write_csv(&out_dir.join("replications.csv"))?;
    report.write_json(&out_dir.join("report.json"))?;
    Ok(report)
}
