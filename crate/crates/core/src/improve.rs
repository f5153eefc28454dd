//! The outer improvement loop: evolve against the repository, search for
//! deficiencies of the result, feed them back, repeat. Ends with validation
//! on fresh inputs and held-out mutants.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deficiency::{check, SearchConfig};
use crate::evolution::{evolve_seeded, Budget, ConfigError, EvolutionConfig};
use crate::expr::{parse, Expr, ParseError};
use crate::fitness::{count_deficiencies, FitnessVector};
use crate::rng::{fork, stream, Stream};
use crate::state::{Label, Origin, Value, DEFAULT_PRECISION};
use crate::subjects::{find_subject, is_incorrect, Subject, SubjectError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subject: String,
    /// Initial assertion; the subject's default when absent.
    pub assertion: Option<String>,
    pub internal_budget: Budget,
    /// Three times the internal budget when absent.
    pub global_budget: Option<Budget>,
    pub init_samples: usize,
    pub validation_samples: usize,
    /// Inputs sampled per deficiency search.
    pub deficiency_budget: u64,
    /// Counterexamples kept per deficiency search.
    pub counterexamples: usize,
    /// Mutant ids reserved for validation; the subject's default when absent.
    pub held_out: Option<Vec<String>>,
    pub seed: u64,
    pub precision: u32,
    pub guided: bool,
    pub max_iterations: usize,
    pub population_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subject: "fast_floor".to_string(),
            assertion: None,
            internal_budget: Budget::WallClock(Duration::from_secs(30)),
            global_budget: None,
            init_samples: 100,
            validation_samples: 10_000,
            deficiency_budget: 10_000,
            counterexamples: 10,
            held_out: None,
            seed: 0,
            precision: DEFAULT_PRECISION,
            guided: true,
            max_iterations: 20,
            population_size: 200,
        }
    }
}

impl RunConfig {
    pub fn global(&self) -> Budget {
        self.global_budget.unwrap_or(match self.internal_budget {
            Budget::WallClock(d) => Budget::WallClock(d * 3),
            Budget::Generations(n) => Budget::Generations(n.saturating_mul(3)),
        })
    }

    fn evolution(&self, budget: Budget, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            population_size: self.population_size,
            budget,
            seed,
            guided: self.guided,
            ..EvolutionConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum ImproveError {
    #[error(transparent)]
    Subject(#[from] SubjectError),
    #[error("initial assertion: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Evolution(#[from] ConfigError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The deficiency search found nothing for the evolved assertion.
    NoDeficiency,
    GlobalBudget,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// The incoming assertion's fitness on this iteration's repository.
    pub incoming: FitnessVector,
    pub evolved: String,
    pub fitness: FitnessVector,
    pub generations: u64,
    pub explored: u64,
    pub zero_fp_explored: bool,
    pub fp_found: usize,
    pub fn_found: usize,
    pub inputs_examined: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingSummary {
    /// Initial assertion on the initial repository.
    pub initial: FitnessVector,
    /// Improved assertion on the final repository.
    pub improved: FitnessVector,
    /// Initial assertion on the final repository.
    pub initial_on_final: FitnessVector,
    pub positives: u64,
    pub negatives: u64,
    pub zero_fp_explored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub assertion: String,
    pub inputs: usize,
    /// Correct validation states on which the assertion fails or errors.
    pub fp: u64,
    /// What the false-negative count and mutation score refer to: the
    /// assertion itself when it has no false positives, otherwise its
    /// conjunct reduction (absent when nothing survived).
    pub scored_assertion: Option<String>,
    pub reduced: bool,
    /// Incorrect held-out states on which the scored assertion passes.
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub incorrect_states: u64,
    pub mutation_score: f64,
    /// No scored assertion or no held-out mutant; the score is reported as 0.
    pub score_undefined: bool,
    pub held_out: Vec<String>,
    pub killed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub initial: ValidationReport,
    pub improved: ValidationReport,
}

/// Wall-clock measurements, kept apart so reports can be compared without them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub total_ms: u128,
    pub init_ms: u128,
    pub evolution_ms: u128,
    pub deficiency_ms: u128,
    pub validation_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementReport {
    pub subject: String,
    pub initial_assertion: String,
    pub improved_assertion: String,
    pub stop_reason: StopReason,
    pub iterations: Vec<IterationRecord>,
    pub training: TrainingSummary,
    pub validation: ValidationSummary,
    pub training_mutants: Vec<String>,
    pub warnings: Vec<String>,
    pub config: RunConfig,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutantSplit {
    pub held_out: Vec<usize>,
    pub training: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Splits a subject's mutants into held-out and training sets. With no
/// held-out mutant, both sets are all mutants.
pub fn split_mutants(subject: &Subject, held_out: Option<&[String]>) -> Result<MutantSplit, SubjectError> {
    let held: Vec<usize> = match held_out {
        Some(ids) => ids.iter().map(|id| subject.mutant_index(id)).collect::<Result<_, _>>()?,
        None => subject.default_held_out(),
    };
    let all: Vec<usize> = (0..subject.mutants().len()).collect();
    if held.is_empty() {
        return Ok(MutantSplit {
            held_out: all.clone(),
            training: all,
            warnings: vec!["no held-out mutants: validation reuses the training mutants".to_string()],
        });
    }
    let training = all.into_iter().filter(|k| !held.contains(k)).collect();
    Ok(MutantSplit {
        held_out: held,
        training,
        warnings: Vec::new(),
    })
}

/// Remaining global budget.
enum Clock {
    Wall(Instant),
    Gens(u64),
}

impl Clock {
    fn slice(&self, internal: Budget) -> Option<Budget> {
        let b = match (self, internal) {
            (Clock::Wall(deadline), Budget::WallClock(d)) => {
                Budget::WallClock(d.min(deadline.saturating_duration_since(Instant::now())))
            }
            (Clock::Gens(left), Budget::Generations(n)) => Budget::Generations(n.min(*left)),
            _ => unreachable!("budget kinds are checked up front"),
        };
        (!b.is_zero()).then_some(b)
    }

    fn spend(&mut self, generations: u64) {
        if let Clock::Gens(left) = self {
            *left = left.saturating_sub(generations);
        }
    }

    fn exhausted(&self) -> bool {
        match self {
            Clock::Wall(deadline) => Instant::now() >= *deadline,
            Clock::Gens(left) => *left == 0,
        }
    }
}

/// Runs the full loop described by `cfg`.
pub fn improve(cfg: &RunConfig) -> Result<ImprovementReport, ImproveError> {
    let started = Instant::now();
    let subject = find_subject(&cfg.subject)?;
    let text = cfg.assertion.clone().unwrap_or_else(|| subject.default_assertion.to_string());
    let initial = parse(&text, subject.signature())?;
    let global = cfg.global();
    let clock = match (cfg.internal_budget, global) {
        (Budget::WallClock(_), Budget::WallClock(d)) => Clock::Wall(started + d),
        (Budget::Generations(_), Budget::Generations(n)) => Clock::Gens(n),
        _ => {
            return Err(ImproveError::Config(
                "internal and global budgets must both be durations or both generation counts".into(),
            ))
        }
    };
    let mut clock = clock;
    cfg.evolution(cfg.internal_budget, cfg.seed).validate()?;
    if cfg.max_iterations == 0 || cfg.validation_samples == 0 {
        return Err(ImproveError::Config("max_iterations and validation_samples must be positive".into()));
    }
    let MutantSplit {
        held_out,
        training,
        warnings,
    } = split_mutants(&subject, cfg.held_out.as_deref())?;

    let t = Instant::now();
    let mut repo = subject.init_repo(cfg.init_samples, &training, cfg.precision, &mut stream(cfg.seed, Stream::Init))?;
    let init_ms = t.elapsed().as_millis();
    let initial_fitness = count_deficiencies(&initial, &repo);

    let search = SearchConfig {
        budget: cfg.deficiency_budget,
        max_found: cfg.counterexamples,
        precision: cfg.precision,
    };
    let mut alpha = initial.clone();
    let mut iterations = Vec::new();
    let mut stop_reason = StopReason::GlobalBudget;
    let mut zero_fp_explored = false;
    let (mut evolution_ms, mut deficiency_ms) = (0, 0);

    for it in 0..cfg.max_iterations {
        let Some(budget) = clock.slice(cfg.internal_budget) else {
            stop_reason = StopReason::GlobalBudget;
            break;
        };
        let seed = fork(cfg.seed, Stream::Evolution, it as u64).gen::<u64>();
        let t = Instant::now();
        let incoming = count_deficiencies(&alpha, &repo);
        let outcome = evolve_seeded(&repo, &[alpha.clone(), initial.clone()], &cfg.evolution(budget, seed));
        evolution_ms += t.elapsed().as_millis();
        clock.spend(outcome.generations);
        zero_fp_explored |= outcome.zero_fp_explored;
        alpha = outcome.best.expr;

        let t = Instant::now();
        let report = check(&subject, &alpha, &training, &search, cfg.seed, it as u64);
        deficiency_ms += t.elapsed().as_millis();
        iterations.push(IterationRecord {
            iteration: it,
            incoming,
            evolved: alpha.to_string(),
            fitness: outcome.best.fitness,
            generations: outcome.generations,
            explored: outcome.explored,
            zero_fp_explored: outcome.zero_fp_explored,
            fp_found: report.fp_states.len(),
            fn_found: report.fn_states.len(),
            inputs_examined: report.inputs_examined,
        });
        if report.exhausted {
            stop_reason = StopReason::NoDeficiency;
            break;
        }
        // the final assertion is always judged on the repository it was evolved on
        if clock.exhausted() {
            stop_reason = StopReason::GlobalBudget;
            break;
        }
        if it + 1 == cfg.max_iterations {
            stop_reason = StopReason::IterationCap;
            break;
        }
        for s in report.fp_states {
            repo.ingest(s, Label::Positive).expect("subject states conform to the signature");
        }
        for s in report.fn_states {
            repo.ingest(s, Label::Negative).expect("subject states conform to the signature");
        }
    }

    let training_summary = TrainingSummary {
        initial: initial_fitness,
        improved: count_deficiencies(&alpha, &repo),
        initial_on_final: count_deficiencies(&initial, &repo),
        positives: repo.weight(Label::Positive),
        negatives: repo.weight(Label::Negative),
        zero_fp_explored,
    };

    let t = Instant::now();
    let set = ValidationSet::sample(&subject, &held_out, cfg.validation_samples, cfg.seed, cfg.precision);
    let validation = ValidationSummary {
        initial: set.score(&initial),
        improved: set.score(&alpha),
    };
    let validation_ms = t.elapsed().as_millis();

    Ok(ImprovementReport {
        subject: subject.name.to_string(),
        initial_assertion: initial.to_string(),
        improved_assertion: alpha.to_string(),
        stop_reason,
        iterations,
        training: training_summary,
        validation,
        training_mutants: training.iter().map(|&k| subject.mutants()[k].id.to_string()).collect(),
        warnings,
        config: cfg.clone(),
        timings: Timings {
            total_ms: started.elapsed().as_millis(),
            init_ms,
            evolution_ms,
            deficiency_ms,
            validation_ms,
        },
    })
}

/// Correct and incorrect states on fresh validation inputs.
pub struct ValidationSet {
    precision: u32,
    inputs: usize,
    positives: Vec<Vec<Value>>,
    /// `(held-out position, values)` of every incorrect held-out state.
    negatives: Vec<(usize, Vec<Value>)>,
    held_out: Vec<String>,
}

impl ValidationSet {
    pub fn sample(subject: &Subject, held_out: &[usize], n: usize, seed: u64, precision: u32) -> ValidationSet {
        let sig = subject.signature();
        let mut rng = stream(seed, Stream::Validation);
        let mut positives = Vec::with_capacity(n);
        let mut negatives = Vec::new();
        for input in subject.sample_inputs(n, &mut rng) {
            let reference = subject.capture_reference(&input, precision, Origin::Validation);
            for (pos, &k) in held_out.iter().enumerate() {
                let state = subject.capture_mutant(k, &input, precision, Origin::Validation);
                if is_incorrect(&reference, &state) {
                    negatives.push((pos, state.aligned(sig, precision).expect("conforming state")));
                }
            }
            positives.push(reference.aligned(sig, precision).expect("conforming state"));
        }
        ValidationSet {
            precision,
            inputs: n,
            positives,
            negatives,
            held_out: held_out.iter().map(|&k| subject.mutants()[k].id.to_string()).collect(),
        }
    }

    pub fn positives(&self) -> &[Vec<Value>] {
        &self.positives
    }

    /// False positives, false negatives and mutation score of `e`, reducing
    /// it to its false-positive-free conjuncts first when needed.
    pub fn score(&self, e: &Expr) -> ValidationReport {
        let p = self.precision;
        let fp = self.positives.iter().filter(|v| !e.passes(v.as_slice(), p)).count() as u64;
        let (scored, reduced) = if fp == 0 {
            (Some(e.clone()), false)
        } else {
            (reduce_conjuncts(e, &self.positives, p), true)
        };
        let mut killed = vec![false; self.held_out.len()];
        let mut fn_ = 0;
        for (pos, values) in &self.negatives {
            let passes = scored.as_ref().is_none_or(|s| s.passes(values.as_slice(), p));
            if passes {
                fn_ += 1;
            } else {
                killed[*pos] = true;
            }
        }
        let score_undefined = scored.is_none() || self.held_out.is_empty();
        let kills = killed.iter().filter(|k| **k).count();
        let mutation_score = if score_undefined {
            0.0
        } else {
            kills as f64 / self.held_out.len() as f64
        };
        ValidationReport {
            assertion: e.to_string(),
            inputs: self.inputs,
            fp,
            scored_assertion: scored.map(|s| s.to_string()),
            reduced,
            fn_,
            incorrect_states: self.negatives.len() as u64,
            mutation_score,
            score_undefined,
            held_out: self.held_out.clone(),
            killed: self
                .held_out
                .iter()
                .zip(&killed)
                .filter(|(_, k)| **k)
                .map(|(id, _)| id.clone())
                .collect(),
        }
    }
}

/// Validates `e` against a subject on `n` fresh inputs and the held-out mutants.
pub fn validate(subject: &Subject, e: &Expr, held_out: &[usize], n: usize, seed: u64, precision: u32) -> ValidationReport {
    ValidationSet::sample(subject, held_out, n, seed, precision).score(e)
}

/// Drops every top-level conjunct of `e` that fails on some positive and
/// conjoins the rest in order; `None` when nothing survives.
pub fn reduce_conjuncts(e: &Expr, positives: &[Vec<Value>], precision: u32) -> Option<Expr> {
    let survivors = e
        .conjuncts()
        .into_iter()
        .filter(|c| positives.iter().all(|v| c.passes(v.as_slice(), precision)))
        .cloned();
    Expr::conjoin(survivors)
}
