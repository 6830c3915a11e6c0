//! Labeled idiom sentences: file IO, validation, fold planning and a
//! synthetic generator.

mod folds;
mod io;
mod synthetic;
mod validate;

use serde::{Deserialize, Serialize};

pub use folds::{stratified_nested_folds, Assignment, FoldPlan, FoldSplit, Role};
pub use io::{load_dataset, parse_dataset, save_dataset, to_tsv, HEADER};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use validate::{validate, ValidationReport};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    /// Dense class id.
    pub label: usize,
    pub text: String,
    /// Canonical idiom; empty for the non-idiom class.
    pub idiom_surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub surface: String,
    /// Label value as it appeared in the source file.
    pub original_label: i64,
}

impl ClassInfo {
    pub fn is_non_idiom(&self) -> bool {
        self.surface.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    /// Indexed by dense class id.
    pub classes: Vec<ClassInfo>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for e in &self.examples {
            if let Some(c) = counts.get_mut(e.label) {
                *c += 1;
            }
        }
        counts
    }

    pub fn non_idiom_class(&self) -> Option<usize> {
        self.classes.iter().position(ClassInfo::is_non_idiom)
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Example> {
        indices.iter().map(|&i| &self.examples[i]).collect()
    }
}
