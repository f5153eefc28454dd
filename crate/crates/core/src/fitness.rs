//! Oracle-deficiency counting and the two lexicographic fitness orders.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::state::{Label, StateRepo};

/// Deficiency counts of one assertion against a repository.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FitnessVector {
    /// Multiplicity-weighted correct states on which the assertion fails or errors.
    pub fp: u64,
    /// Multiplicity-weighted incorrect states on which the assertion passes.
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub size: usize,
}

impl FitnessVector {
    pub fn new(fp: u64, fn_: u64, size: usize) -> Self {
        FitnessVector { fp, fn_, size }
    }

    pub fn is_perfect(&self) -> bool {
        self.fp == 0 && self.fn_ == 0
    }
}

/// Which deficiency a population minimizes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Orders by (fp, fn, size).
    FalsePositives,
    /// Orders by (fn, fp, size).
    FalseNegatives,
}

impl Objective {
    fn key(self, v: &FitnessVector) -> (u64, u64, usize) {
        match self {
            Objective::FalsePositives => (v.fp, v.fn_, v.size),
            Objective::FalseNegatives => (v.fn_, v.fp, v.size),
        }
    }

    /// `Less` means `a` is better than `b`.
    pub fn compare(self, a: &FitnessVector, b: &FitnessVector) -> Ordering {
        self.key(a).cmp(&self.key(b))
    }
}

/// Lexicographic comparison under `objective`; `Less` means `a` is fitter.
pub fn better_for(objective: Objective, a: &FitnessVector, b: &FitnessVector) -> Ordering {
    objective.compare(a, b)
}

/// Counts false positives and false negatives of `e` over `repo`.
///
/// An evaluation error counts as the assertion failing.
pub fn count_deficiencies(e: &Expr, repo: &StateRepo) -> FitnessVector {
    let precision = repo.precision();
    let fp = repo
        .entries(Label::Positive)
        .iter()
        .filter(|entry| !matches!(e.evaluate_unchecked(entry.values(), precision), Ok(true)))
        .map(|entry| entry.multiplicity)
        .sum();
    let fn_ = repo
        .entries(Label::Negative)
        .iter()
        .filter(|entry| matches!(e.evaluate_unchecked(entry.values(), precision), Ok(true)))
        .map(|entry| entry.multiplicity)
        .sum();
    FitnessVector::new(fp, fn_, e.size())
}
