use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{train_fold, RunRecord};
use crate::dataset::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_folds, MetricsRow};
use crate::models::write_atomic;
use crate::textnorm::Normalizer;

pub const CV_SUMMARY_FILE: &str = "cv.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub records: Vec<RunRecord>,
    pub aggregate: MetricsRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvStatus {
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CvSummary {
    status: CvStatus,
    k: usize,
    completed_folds: Vec<usize>,
    errors: Vec<(usize, String)>,
    aggregate: Option<MetricsRow>,
}

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold{fold}"))
}

/// Trains one fresh model per fold of `plan`. Fold `f` uses `cfg` with
/// `fold = f`; its seed stream is derived from `cfg.seed` and `f`.
///
/// `parallel_folds > 1` runs that many folds at once when the `parallel`
/// feature is enabled. Results do not depend on it. With `out`, every
/// finished fold is persisted even if another fails, and `cv.json` records
/// the overall status.
pub fn run_cross_validation(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &TrainConfig,
    normalizer: &Normalizer,
    out: Option<&Path>,
    parallel_folds: usize,
) -> Result<CvResult> {
    cfg.validate()?;
    let folds: Vec<usize> = (0..plan.k).collect();
    let run = |&fold: &usize| {
        let fold_cfg = TrainConfig { fold, ..cfg.clone() };
        let dir = out.map(|o| fold_dir(o, fold));
        train_fold(ds, plan, &fold_cfg, normalizer, dir.as_deref())
    };
    let results = run_folds(&folds, parallel_folds, run)?;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (fold, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::error!("fold {fold} failed: {e}");
                errors.push((fold, e));
            }
        }
    }
    let aggregate = if errors.is_empty() {
        Some(aggregate_folds(&records.iter().map(|r| r.test).collect::<Vec<_>>())?)
    } else {
        None
    };
    if let Some(dir) = out {
        let summary = CvSummary {
            status: if errors.is_empty() { CvStatus::Complete } else { CvStatus::Failed },
            k: plan.k,
            completed_folds: records.iter().map(|r| r.fold).collect(),
            errors: errors.iter().map(|(f, e)| (*f, e.to_string())).collect(),
            aggregate,
        };
        write_atomic(&dir.join(CV_SUMMARY_FILE), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    }
    match (errors.into_iter().next(), aggregate) {
        (Some((_, e)), _) => Err(e),
        (None, Some(aggregate)) => Ok(CvResult { records, aggregate }),
        (None, None) => Err(Error::Metrics("no folds were run".into())),
    }
}

#[cfg(feature = "parallel")]
fn run_folds<F>(folds: &[usize], threads: usize, run: F) -> Result<Vec<Result<RunRecord>>>
where
    F: Fn(&usize) -> Result<RunRecord> + Sync + Send,
{
    use rayon::prelude::*;
    if threads <= 1 {
        return Ok(folds.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} fold workers: {e}")))?;
    Ok(pool.install(|| folds.par_iter().map(run).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_folds<F>(folds: &[usize], _threads: usize, run: F) -> Result<Vec<Result<RunRecord>>>
where
    F: Fn(&usize) -> Result<RunRecord>,
{
    Ok(folds.iter().map(run).collect())
}
