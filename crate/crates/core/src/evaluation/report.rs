//! Result tables and plot data from finished runs.
//!
//! Files written under the output directory:
//!
//! - `metrics.json`: per-model fold rows and averages at full precision
//! - `tables.txt`: per-model fold tables and the cross-model comparison
//! - `durations.txt`, `durations.json`: training time per model
//! - `curves/*.tsv`: `step<TAB>value` series for learning curves and
//!   per-fold test metrics
//!
//! Everything except the duration files depends only on the metrics, so
//! identical runs give byte-identical reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_folds, MetricsRow};
use crate::error::{Error, Result};
use crate::models::{write_atomic, ModelKind};
use crate::training::RunRecord;

const HEADERS: [&str; 4] = ["Accuracy (%)", "Precision (%)", "Recall (%)", "F1-Score (%)"];
const METRIC_KEYS: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub fold: usize,
    #[serde(flatten)]
    pub metrics: MetricsRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    pub name: String,
    pub folds: Vec<FoldRow>,
    pub average: MetricsRow,
    /// Average test metrics of the best-validation checkpoints, when every
    /// fold has one.
    pub best_validation_average: Option<MetricsRow>,
    /// Classes never predicted on some fold's test split.
    pub never_predicted: BTreeMap<usize, Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationRow {
    pub model: ModelKind,
    pub folds: usize,
    pub mean_secs: f64,
    pub total_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub models: Vec<ModelReport>,
    #[serde(skip)]
    pub durations: Vec<DurationRow>,
}

fn group(runs: &[RunRecord]) -> Result<BTreeMap<usize, Vec<&RunRecord>>> {
    if runs.is_empty() {
        return Err(Error::Metrics("no runs to report".into()));
    }
    let mut by_model: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        let key = ModelKind::ALL.iter().position(|&k| k == r.model).expect("known kind");
        by_model.entry(key).or_default().push(r);
    }
    for list in by_model.values_mut() {
        list.sort_by_key(|r| r.fold);
        if list.windows(2).any(|w| w[0].fold == w[1].fold) {
            return Err(Error::Metrics(format!("duplicate fold for {}", list[0].model)));
        }
    }
    Ok(by_model)
}

pub fn build_report(runs: &[RunRecord]) -> Result<Report> {
    let mut models = Vec::new();
    let mut durations = Vec::new();
    for list in group(runs)?.into_values() {
        let kind = list[0].model;
        let rows: Vec<MetricsRow> = list.iter().map(|r| r.test).collect();
        let best: Option<Vec<MetricsRow>> =
            list.iter().map(|r| r.best_validation.as_ref().map(|b| b.test)).collect();
        models.push(ModelReport {
            model: kind,
            name: kind.display_name().to_string(),
            folds: list.iter().map(|r| FoldRow { fold: r.fold, metrics: r.test }).collect(),
            average: aggregate_folds(&rows)?,
            best_validation_average: best.map(|b| aggregate_folds(&b)).transpose()?,
            never_predicted: list
                .iter()
                .filter(|r| !r.never_predicted.is_empty())
                .map(|r| (r.fold, r.never_predicted.clone()))
                .collect(),
        });
        let total: f64 = list.iter().map(|r| r.duration_secs).sum();
        durations.push(DurationRow {
            model: kind,
            folds: list.len(),
            mean_secs: total / list.len() as f64,
            total_secs: total,
        });
    }
    Ok(Report { models, durations })
}

fn table_line(label: &str, cells: &[String], first: usize) -> String {
    let mut s = format!("{label:<first$}");
    for (c, h) in cells.iter().zip(HEADERS) {
        let w = h.chars().count();
        let _ = write!(s, "  {c:>w$}");
    }
    s.push('\n');
    s
}

/// Fold table for one model, ending with the average row.
pub fn fold_table(m: &ModelReport) -> String {
    let headers = HEADERS.map(String::from);
    let mut s = format!("{}\n", m.name);
    s.push_str(&table_line("Metric", &headers, 8));
    for f in &m.folds {
        s.push_str(&table_line(&format!("Fold {}", f.fold + 1), &f.metrics.rendered(), 8));
    }
    s.push_str(&table_line("Average", &m.average.rendered(), 8));
    s
}

pub fn comparison_table(models: &[ModelReport]) -> String {
    let first = models.iter().map(|m| m.name.chars().count()).max().unwrap_or(0).max(5);
    let mut s = table_line("Model", &HEADERS.map(String::from), first);
    for m in models {
        s.push_str(&table_line(&m.name, &m.average.rendered(), first));
    }
    s
}

/// `8 hrs 24 mins` style, with seconds below an hour.
pub fn format_duration(secs: f64) -> String {
    let whole = secs.max(0.0).round() as u64;
    let (h, m, s) = (whole / 3600, whole / 60 % 60, whole % 60);
    let unit = |n: u64, one: &str, many: &str| format!("{n} {}", if n == 1 { one } else { many });
    match (h, m) {
        (0, 0) => format!("{secs:.2} secs"),
        (0, _) => format!("{} {}", unit(m, "min", "mins"), unit(s, "sec", "secs")),
        _ => format!("{} {}", unit(h, "hr", "hrs"), unit(m, "min", "mins")),
    }
}

pub fn duration_table(rows: &[DurationRow]) -> String {
    let names: Vec<&str> = rows.iter().map(|r| r.model.display_name()).collect();
    let first = names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max(5);
    let (a, b) = ("Avg. Training Time/Fold", "Total Elapsed Time");
    let mut s = format!("{:<first$}  {a:<23}  {b}\n", "Model");
    for (r, name) in rows.iter().zip(names) {
        let _ = writeln!(
            s,
            "{name:<first$}  {:<23}  {}",
            format_duration(r.mean_secs),
            format_duration(r.total_secs)
        );
    }
    s
}

fn series(points: impl IntoIterator<Item = (usize, f64)>) -> String {
    points.into_iter().map(|(x, y)| format!("{x}\t{y}\n")).collect()
}

/// Writes every report file and returns the paths written.
pub fn render_report(runs: &[RunRecord], out: &Path) -> Result<Vec<PathBuf>> {
    let report = build_report(runs)?;
    let curves = out.join("curves");
    std::fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
    let mut files: Vec<(PathBuf, String)> = Vec::new();

    files.push((out.join("metrics.json"), serde_json::to_string_pretty(&report)? + "\n"));
    let mut tables = String::new();
    for m in &report.models {
        tables.push_str(&fold_table(m));
        if !m.never_predicted.is_empty() {
            let _ = writeln!(tables, "(never-predicted classes scored with precision 0: {:?})", m.never_predicted);
        }
        tables.push('\n');
    }
    tables.push_str("Overall comparison\n");
    tables.push_str(&comparison_table(&report.models));
    files.push((out.join("tables.txt"), tables));
    files.push((out.join("durations.txt"), duration_table(&report.durations)));
    files.push((out.join("durations.json"), serde_json::to_string_pretty(&report.durations)? + "\n"));

    for list in group(runs)?.into_values() {
        let name = list[0].model.name();
        for r in &list {
            let f = r.fold + 1;
            let train = r.train_losses.iter().enumerate().map(|(e, &l)| (e + 1, l));
            files.push((curves.join(format!("{name}_fold{f}_train_loss.tsv")), series(train)));
            let val = r.validation.iter().map(|p| (p.epoch, p.loss));
            files.push((curves.join(format!("{name}_fold{f}_validation_loss.tsv")), series(val)));
            let val_f1 = r.validation.iter().map(|p| (p.epoch, p.metrics.f1));
            files.push((curves.join(format!("{name}_fold{f}_validation_f1.tsv")), series(val_f1)));
        }
        for (k, key) in METRIC_KEYS.iter().enumerate() {
            let pts = list.iter().map(|r| (r.fold + 1, r.test.values()[k]));
            files.push((curves.join(format!("{name}_test_{key}.tsv")), series(pts)));
        }
    }
    for (k, key) in METRIC_KEYS.iter().enumerate() {
        let pts = report.models.iter().enumerate().map(|(i, m)| (i + 1, m.average.values()[k]));
        files.push((curves.join(format!("comparison_{key}.tsv")), series(pts)));
    }

    let mut written = Vec::with_capacity(files.len());
    for (path, body) in files {
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations_render_in_minutes_and_seconds() {
        assert_eq!(format_duration(8.0 * 3600.0 + 24.0 * 60.0), "8 hrs 24 mins");
        assert_eq!(format_duration(3780.0), "1 hr 3 mins");
        assert_eq!(format_duration(65.0), "1 min 5 secs");
        assert_eq!(format_duration(1.234), "1.23 secs");
    }

    #[test]
    fn fold_table_layout() {
        let row = MetricsRow::from_values([98.82, 98.84, 98.82, 98.81]);
        let m = ModelReport {
            model: ModelKind::Transformer,
            name: "Transformer".into(),
            folds: vec![FoldRow { fold: 0, metrics: row }],
            average: row,
            best_validation_average: None,
            never_predicted: BTreeMap::new(),
        };
        let t = fold_table(&m);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Transformer");
        assert!(lines[1].starts_with("Metric    Accuracy (%)"));
        assert_eq!(lines[2], "Fold 1           98.82          98.84       98.82         98.81");
        assert_eq!(lines[3], "Average          98.82          98.84       98.82         98.81");
    }
}
