//! Sampling-based search for oracle deficiencies of an assertion.
//!
//! False positives are reference states the assertion rejects. False
//! negatives are mutant states that differ from the reference state in a
//! variable the assertion reads, yet pass it.

use rand::Rng;
use serde::Serialize;

use crate::expr::Expr;
use crate::rng::{fork, Stream};
use crate::state::{Origin, ProgramState};
use crate::subjects::Subject;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchConfig {
    /// Inputs sampled per search.
    pub budget: u64,
    /// Stop after this many counterexamples.
    pub max_found: usize,
    pub precision: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 10_000,
            max_found: 10,
            precision: crate::state::DEFAULT_PRECISION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub states: Vec<ProgramState>,
    pub inputs_examined: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficiencyReport {
    pub fp_states: Vec<ProgramState>,
    pub fn_states: Vec<ProgramState>,
    pub inputs_examined: u64,
    /// Neither search found anything within its budget.
    pub exhausted: bool,
}

fn holds(e: &Expr, subject: &Subject, state: &ProgramState, precision: u32) -> bool {
    let values = state
        .aligned(subject.signature(), precision)
        .expect("subject states conform to their signature");
    matches!(e.evaluate_unchecked(&values, precision), Ok(true))
}

fn push_unique(found: &mut Vec<ProgramState>, state: ProgramState) {
    let dup = found
        .iter()
        .any(|s| s.mutant == state.mutant && s.same_vars(&state));
    if !dup {
        found.push(state);
    }
}

/// Reference states on which `e` fails or errors.
pub fn find_false_positives(subject: &Subject, e: &Expr, cfg: &SearchConfig, rng: &mut impl Rng) -> SearchResult {
    let mut states = Vec::new();
    let mut examined = 0;
    while examined < cfg.budget && states.len() < cfg.max_found {
        examined += 1;
        let input = subject.sample_input(rng);
        let state = subject.capture_reference(&input, cfg.precision, Origin::DeficiencyFp);
        if !holds(e, subject, &state, cfg.precision) {
            push_unique(&mut states, state);
        }
    }
    SearchResult {
        states,
        inputs_examined: examined,
    }
}

/// States of `mutants` that differ from the reference state in a variable
/// referenced by `e` and on which `e` passes. An assertion that references
/// no variable is compared on the whole state.
pub fn find_false_negatives(
    subject: &Subject,
    e: &Expr,
    mutants: &[usize],
    cfg: &SearchConfig,
    rng: &mut impl Rng,
) -> SearchResult {
    let mut indices = e.referenced_vars();
    if indices.is_empty() {
        indices = (0..subject.signature().len()).collect();
    }
    let referenced: Vec<&str> = indices
        .into_iter()
        .map(|i| subject.signature().decls()[i].name.as_str())
        .collect();
    let mut states = Vec::new();
    let mut examined = 0;
    if mutants.is_empty() {
        return SearchResult {
            states,
            inputs_examined: 0,
        };
    }
    'inputs: while examined < cfg.budget {
        examined += 1;
        let input = subject.sample_input(rng);
        let reference = subject.capture_reference(&input, cfg.precision, Origin::DeficiencyFn);
        for &k in mutants {
            let state = subject.capture_mutant(k, &input, cfg.precision, Origin::DeficiencyFn);
            let differs = referenced.iter().any(|name| {
                let (a, b) = (state.vars[*name], reference.vars[*name]);
                a.key_bits() != b.key_bits()
            });
            if differs && holds(e, subject, &state, cfg.precision) {
                push_unique(&mut states, state);
                if states.len() >= cfg.max_found {
                    break 'inputs;
                }
            }
        }
    }
    SearchResult {
        states,
        inputs_examined: examined,
    }
}

/// Runs both searches on disjoint streams derived from `seed` and `round`.
pub fn check(subject: &Subject, e: &Expr, mutants: &[usize], cfg: &SearchConfig, seed: u64, round: u64) -> DeficiencyReport {
    let fp = find_false_positives(subject, e, cfg, &mut fork(seed, Stream::Deficiency, 2 * round));
    let fn_ = find_false_negatives(subject, e, mutants, cfg, &mut fork(seed, Stream::Deficiency, 2 * round + 1));
    let exhausted = fp.states.is_empty() && fn_.states.is_empty();
    DeficiencyReport {
        fp_states: fp.states,
        fn_states: fn_.states,
        inputs_examined: fp.inputs_examined + fn_.inputs_examined,
        exhausted,
    }
}
