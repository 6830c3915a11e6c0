use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::Metrics("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Classes with support that were never predicted; their precision is
    /// taken as 0.
    pub fn never_predicted(&self) -> Vec<usize> {
        (0..self.classes()).filter(|&c| self.support(c) > 0 && self.predicted(c) == 0).collect()
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Metrics(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (i, (&p, &t)) in preds.iter().zip(labels).enumerate() {
        if p >= classes || t >= classes {
            return Err(Error::Metrics(format!(
                "pair {i} (pred {p}, label {t}) outside {classes} classes"
            )));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Per-class values weighted by support.
    #[default]
    Weighted,
    /// Unweighted mean over classes with support.
    Macro,
}

/// Percentages in `[0, 100]` at full precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsRow {
    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        MetricsRow { accuracy: v[0], precision: v[1], recall: v[2], f1: v[3] }
    }

    /// The four values rendered at two decimals.
    pub fn rendered(&self) -> [String; 4] {
        self.values().map(format_pct)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class precision, recall and F1 as fractions. Classes never
/// predicted get precision 0; classes without support get recall 0.
pub fn per_class(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let support = cm.support(c);
            let predicted = cm.predicted(c);
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics { support, precision, recall, f1 }
        })
        .collect()
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsRow> {
    metrics_with(cm, Averaging::Weighted)
}

pub fn metrics_with(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsRow> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Metrics("confusion matrix is empty".into()));
    }
    let accuracy = cm.trace() as f64 / total as f64;
    let classes = per_class(cm);
    let present: Vec<&ClassMetrics> = classes.iter().filter(|c| c.support > 0).collect();
    let row = match averaging {
        Averaging::Weighted => {
            let w = |f: fn(&ClassMetrics) -> f64| {
                present.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / total as f64
            };
            MetricsRow {
                accuracy,
                precision: w(|c| c.precision),
                // Σ support·(tp/support) / total is trace/total; use the
                // exact form so recall and accuracy agree bit for bit.
                recall: accuracy,
                f1: w(|c| c.f1),
            }
        }
        Averaging::Macro => {
            let n = present.len() as f64;
            let m = |f: fn(&ClassMetrics) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / n;
            MetricsRow {
                accuracy,
                precision: m(|c| c.precision),
                recall: m(|c| c.recall),
                f1: m(|c| c.f1),
            }
        }
    };
    Ok(MetricsRow::from_values(row.values().map(|v| v * 100.0)))
}

/// Unweighted mean of each metric. Values are summed in sorted order so
/// the result does not depend on the order of `rows`.
pub fn aggregate_folds(rows: &[MetricsRow]) -> Result<MetricsRow> {
    if rows.is_empty() {
        return Err(Error::Metrics("no fold rows to aggregate".into()));
    }
    let n = rows.len() as f64;
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut column: Vec<f64> = rows.iter().map(|r| r.values()[k]).collect();
        column.sort_by(f64::total_cmp);
        *slot = column.iter().sum::<f64>() / n;
    }
    Ok(MetricsRow::from_values(out))
}

/// Half-up rounding to two decimals. Inputs that are a decimal tie up to
/// binary representation error round up.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let tie_slack = 1e-9 * scaled.abs().max(1.0);
    (scaled + 0.5 + tie_slack).floor() / 100.0
}

pub fn format_pct(x: f64) -> String {
    format!("{:.2}", round2(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_confusion() {
        let cm = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 0], vec![1, 2]]);
        assert_eq!(confusion(&[], &[], 3).unwrap(), ConfusionMatrix::zeros(3));
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(metrics(&cm).unwrap().values(), [100.0; 4]);
    }

    #[test]
    fn weighted_example() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 0], vec![1, 2]]).unwrap();
        let m = metrics(&cm).unwrap();
        assert_eq!(m.rendered(), ["75.00", "87.50", "75.00", "76.67"].map(String::from));
        assert!((m.precision - 87.5).abs() < 1e-12);
        assert!((m.f1 - (0.6666666666666666 + 3.0 * 0.8) / 4.0 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn macro_and_never_predicted() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 0, 0], vec![1, 0, 0], vec![0, 0, 0]]).unwrap();
        assert_eq!(cm.never_predicted(), vec![1]);
        let m = metrics_with(&cm, Averaging::Macro).unwrap();
        // class 0: P 2/3 R 1; class 1: P 0 R 0; class 2 absent
        assert!((m.precision - 100.0 / 3.0).abs() < 1e-9);
        assert!((m.recall - 50.0).abs() < 1e-12);
        assert!(metrics(&ConfusionMatrix::zeros(2)).is_err());
    }

    #[test]
    fn aggregation_and_rounding() {
        let f1 = [98.81, 99.16, 99.37, 99.11, 98.80];
        let rows: Vec<MetricsRow> = f1.iter().map(|&v| MetricsRow::from_values([v; 4])).collect();
        assert_eq!(format_pct(aggregate_folds(&rows).unwrap().f1), "99.05");
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(aggregate_folds(&rows).unwrap(), aggregate_folds(&rev).unwrap());
        assert!(aggregate_folds(&[]).is_err());

        assert_eq!(format_pct(80.285), "80.29");
        assert_eq!(format_pct(0.125), "0.13");
        assert_eq!(format_pct(80.2849), "80.28");
        assert_eq!(format_pct(100.0), "100.00");
    }
}
