use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::textnorm::{normalize, NormalizationConfig};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Examples per dense class id.
    pub class_counts: Vec<usize>,
    /// `(first_index, duplicate_index)` for sentences identical after
    /// normalization.
    pub duplicates: Vec<(usize, usize)>,
    pub empty_texts: Vec<usize>,
    /// Examples whose label is outside the class table or whose surface
    /// disagrees with it.
    pub label_errors: Vec<usize>,
    /// Classes with an empty surface; more than one is an error.
    pub non_idiom_classes: Vec<usize>,
    pub small_classes: Vec<usize>,
    /// Examples whose sentence does not contain the idiom verbatim. Idioms
    /// inflect, so these are warnings only.
    pub surface_mismatches: Vec<usize>,
}

impl ValidationReport {
    pub fn error_count(&self) -> usize {
        self.duplicates.len()
            + self.empty_texts.len()
            + self.label_errors.len()
            + self.non_idiom_classes.len().saturating_sub(1)
    }

    pub fn warning_count(&self) -> usize {
        self.small_classes.len()
            + self.surface_mismatches.len()
            + usize::from(self.non_idiom_classes.is_empty() && !self.class_counts.is_empty())
    }

    pub fn is_ok(&self) -> bool {
        self.error_count() == 0
    }

    pub fn summary(&self) -> String {
        let mut lines = vec![format!(
            "{} errors, {} warnings, {} classes",
            self.error_count(),
            self.warning_count(),
            self.class_counts.len()
        )];
        for (c, n) in self.class_counts.iter().enumerate() {
            lines.push(format!("class {c}: {n} examples"));
        }
        for (a, b) in &self.duplicates {
            lines.push(format!("error: rows {a} and {b} are duplicates"));
        }
        for i in &self.empty_texts {
            lines.push(format!("error: row {i} has empty text"));
        }
        for i in &self.label_errors {
            lines.push(format!("error: row {i} disagrees with the class table"));
        }
        if self.non_idiom_classes.len() > 1 {
            lines.push(format!("error: several non-idiom classes {:?}", self.non_idiom_classes));
        }
        if self.non_idiom_classes.is_empty() && !self.class_counts.is_empty() {
            lines.push("warning: no non-idiom class".into());
        }
        for c in &self.small_classes {
            lines.push(format!("warning: class {c} is below the minimum count"));
        }
        for i in &self.surface_mismatches {
            lines.push(format!("warning: row {i} does not contain its idiom verbatim"));
        }
        lines.join("\n")
    }
}

pub fn validate(ds: &Dataset, min_count: usize) -> ValidationReport {
    let cfg = NormalizationConfig::default();
    let mut report = ValidationReport {
        class_counts: ds.class_counts(),
        ..Default::default()
    };
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (i, e) in ds.examples.iter().enumerate() {
        let text = normalize(&e.text, &cfg);
        if text.is_empty() {
            report.empty_texts.push(i);
            continue;
        }
        match ds.classes.get(e.label) {
            Some(class) if class.surface == e.idiom_surface => {}
            _ => report.label_errors.push(i),
        }
        if !e.idiom_surface.is_empty() && !text.contains(&normalize(&e.idiom_surface, &cfg)) {
            report.surface_mismatches.push(i);
        }
        if let Some(&j) = first_seen.get(&text) {
            report.duplicates.push((j, i));
        } else {
            first_seen.insert(text, i);
        }
    }
    report.non_idiom_classes = ds
        .classes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_non_idiom())
        .map(|(i, _)| i)
        .collect();
    report.small_classes = report
        .class_counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n < min_count)
        .map(|(c, _)| c)
        .collect();
    report
}

#[cfg(test)]
mod tests {
    use super::super::io::{fixtures::TABLE_ONE, parse_dataset};
    use super::*;

    #[test]
    fn table_one_has_only_inflection_warnings() {
        let ds = parse_dataset(TABLE_ONE).unwrap();
        let r = validate(&ds, 1);
        assert_eq!(r.error_count(), 0, "{}", r.summary());
        assert!(!r.surface_mismatches.is_empty());
        assert_eq!(r.class_counts, vec![6]);
    }

    #[test]
    fn duplicates_report_both_rows() {
        let ds = parse_dataset("y\tx\tidiom_y\n1\tsame text\tp\n2\tother\t\n1\tsame  text\tp\n").unwrap();
        let r = validate(&ds, 1);
        assert_eq!(r.duplicates, vec![(0, 2)]);
        assert_eq!(r.error_count(), 1);
    }

    #[test]
    fn empty_text_and_small_classes() {
        let ds = parse_dataset("y\tx\tidiom_y\n1\t\u{200B}\tp\n2\tok\t\n2\tfine\t\n").unwrap();
        let r = validate(&ds, 2);
        assert_eq!(r.empty_texts, vec![0]);
        assert_eq!(r.small_classes, vec![0]);
    }
}
