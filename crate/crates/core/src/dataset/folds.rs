//! Nested stratified k-fold planning.
//!
//! Outer level: each class is shuffled with its own seeded stream and dealt
//! round-robin over the k test folds, starting where the previous class
//! stopped so fold sizes stay balanced overall. Inner level: for every outer
//! fold, each class's non-test members are reshuffled and the first
//! `round(0.2·m)` become validation, the rest training.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub const VALIDATION_FRACTION_PERCENT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub test_fold: usize,
    /// Role in each outer fold, indexed by fold id.
    pub roles: Vec<Role>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<Assignment>,
}

/// Example indices of one outer fold.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn validation_count(m: usize) -> usize {
    // round-half-up of m * 20 / 100
    (m * VALIDATION_FRACTION_PERCENT + 50) / 100
}

pub fn stratified_nested_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let counts = ds.class_counts();
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &n)| n < k) {
        return Err(Error::ClassTooSmall { class, count, k });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, e) in ds.examples.iter().enumerate() {
        members
            .get_mut(e.label)
            .ok_or_else(|| Error::Config(format!("example {i} has label {} outside class table", e.label)))?
            .push(i);
    }

    let mut assignments = vec![
        Assignment { test_fold: 0, roles: vec![Role::Train; k] };
        ds.len()
    ];
    let mut offset = 0;
    for (class, idx) in members.iter().enumerate() {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng::stream(seed, &[0, class as u64]));
        for (p, &i) in shuffled.iter().enumerate() {
            let fold = (offset + p) % k;
            assignments[i].test_fold = fold;
            assignments[i].roles[fold] = Role::Test;
        }
        offset = (offset + shuffled.len()) % k;
    }

    for fold in 0..k {
        for (class, idx) in members.iter().enumerate() {
            let mut rest: Vec<usize> =
                idx.iter().copied().filter(|&i| assignments[i].test_fold != fold).collect();
            rest.shuffle(&mut rng::stream(seed, &[1, fold as u64, class as u64]));
            let n_val = validation_count(rest.len());
            for &i in &rest[..n_val] {
                assignments[i].roles[fold] = Role::Validation;
            }
        }
    }
    Ok(FoldPlan { k, seed, assignments })
}

impl FoldPlan {
    pub fn split(&self, fold: usize) -> Result<FoldSplit> {
        if fold >= self.k {
            return Err(Error::Config(format!("fold {fold} out of range for k = {}", self.k)));
        }
        let mut s = FoldSplit::default();
        for (i, a) in self.assignments.iter().enumerate() {
            match a.roles[fold] {
                Role::Train => s.train.push(i),
                Role::Validation => s.validation.push(i),
                Role::Test => s.test.push(i),
            }
        }
        Ok(s)
    }

    /// Checks the plan against a dataset: coverage, disjoint test folds,
    /// per-class proportionality within one example, and the inner 80/20
    /// split within one example per class.
    pub fn check(&self, ds: &Dataset) -> std::result::Result<(), String> {
        if self.assignments.len() != ds.len() {
            return Err(format!("plan covers {} examples, dataset has {}", self.assignments.len(), ds.len()));
        }
        let k = self.k;
        let classes = ds.num_classes();
        let mut test_counts = vec![vec![0usize; k]; classes];
        for (i, a) in self.assignments.iter().enumerate() {
            if a.roles.len() != k || a.test_fold >= k {
                return Err(format!("example {i} has malformed assignment"));
            }
            let tests: Vec<usize> =
                (0..k).filter(|&f| a.roles[f] == Role::Test).collect();
            if tests != [a.test_fold] {
                return Err(format!("example {i} is test in folds {tests:?}"));
            }
            test_counts[ds.examples[i].label][a.test_fold] += 1;
        }
        let totals = ds.class_counts();
        for c in 0..classes {
            let exact = totals[c] as f64 / k as f64;
            for f in 0..k {
                let got = test_counts[c][f] as f64;
                if (got - exact).abs() > 1.0 {
                    return Err(format!("class {c} fold {f}: {got} test examples vs {exact:.2} expected"));
                }
            }
            for f in 0..k {
                let m = totals[c] - test_counts[c][f];
                let val = self
                    .assignments
                    .iter()
                    .zip(&ds.examples)
                    .filter(|(a, e)| e.label == c && a.roles[f] == Role::Validation)
                    .count();
                let exact_val = m as f64 * VALIDATION_FRACTION_PERCENT as f64 / 100.0;
                if (val as f64 - exact_val).abs() > 1.0 {
                    return Err(format!("class {c} fold {f}: {val} validation of {m} non-test"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: FoldPlan = serde_json::from_str(text)?;
        if plan.k < 2 || plan.assignments.iter().any(|a| a.roles.len() != plan.k) {
            return Err(Error::Config("fold plan is malformed".into()));
        }
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
