//! Two-population co-evolutionary search over assertions.
//!
//! One population ranks individuals by (fp, fn, size), the other by
//! (fn, fp, size). Each generation keeps its best individual, fills the
//! rest with offspring from tournament selection, type-aware crossover and
//! mutation, and every few generations the populations swap their best
//! individuals. The search stops at the first assertion with no deficiency
//! on the repository, or when the budget runs out.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ArithOp, CmpOp, Expr, LogicOp, VarSignature, VarType};
use crate::fitness::{count_deficiencies, FitnessVector, Objective};
use crate::rng::{stream, Stream};
use crate::state::StateRepo;

/// When to stop searching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    WallClock(Duration),
    /// A number of generations; reproducible regardless of machine speed.
    Generations(u64),
}

impl Budget {
    pub fn is_zero(&self) -> bool {
        match self {
            Budget::WallClock(d) => d.is_zero(),
            Budget::Generations(n) => *n == 0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid budget `{0}` (expected e.g. `30s`, `5m`, `250ms`, `1h` or `gens:200`)")]
pub struct BudgetParseError(String);

impl FromStr for Budget {
    type Err = BudgetParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || BudgetParseError(s.to_string());
        let s = s.trim();
        if let Some(n) = s.strip_prefix("gens:") {
            return n.parse().map(Budget::Generations).map_err(|_| err());
        }
        let split = s.find(|c: char| !c.is_ascii_digit() && c != '.').ok_or_else(err)?;
        let (value, unit) = s.split_at(split);
        let value: f64 = value.parse().map_err(|_| err())?;
        let secs = match unit {
            "ms" => value / 1000.0,
            "s" => value,
            "m" => value * 60.0,
            "h" => value * 3600.0,
            _ => return Err(err()),
        };
        Duration::try_from_secs_f64(secs).map(Budget::WallClock).map_err(|_| err())
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Generations(n) => write!(f, "gens:{n}"),
            Budget::WallClock(d) if d.subsec_millis() == 0 => write!(f, "{}s", d.as_secs()),
            Budget::WallClock(d) => write!(f, "{}ms", d.as_millis()),
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub conjunctive_crossover_prob: f64,
    pub migration_interval: u64,
    pub migration_count: usize,
    pub max_depth: usize,
    pub max_size: usize,
    pub budget: Budget,
    pub seed: u64,
    /// `false` runs the unguided baseline: uniform parent selection, no
    /// elitism and no migration.
    pub guided: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 200,
            tournament_size: 7,
            crossover_rate: 0.8,
            mutation_rate: 0.2,
            conjunctive_crossover_prob: 0.25,
            migration_interval: 10,
            migration_count: 5,
            max_depth: 7,
            max_size: 50,
            budget: Budget::WallClock(Duration::from_secs(30)),
            seed: 0,
            guided: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{name} must be in [0, 1], got {value}")]
    Rate { name: &'static str, value: f64 },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("max_depth must be at least 2")]
    DepthTooSmall,
    #[error("migration_count ({0}) exceeds population_size")]
    MigrationTooLarge(usize),
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
            ("conjunctive_crossover_prob", self.conjunctive_crossover_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Rate { name, value });
            }
        }
        if self.population_size == 0 {
            return Err(ConfigError::NotPositive("population_size"));
        }
        if self.tournament_size == 0 {
            return Err(ConfigError::NotPositive("tournament_size"));
        }
        if self.migration_interval == 0 {
            return Err(ConfigError::NotPositive("migration_interval"));
        }
        if self.max_size < 3 {
            return Err(ConfigError::NotPositive("max_size"));
        }
        if self.max_depth < 2 {
            return Err(ConfigError::DepthTooSmall);
        }
        if self.migration_count > self.population_size {
            return Err(ConfigError::MigrationTooLarge(self.migration_count));
        }
        Ok(())
    }

    fn within_limits(&self, e: &Expr) -> bool {
        e.size() <= self.max_size && e.depth() <= self.max_depth
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Individual {
    pub expr: Expr,
    pub fitness: FitnessVector,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub objective: Objective,
    pub members: Vec<Individual>,
}

impl Population {
    /// Best member under the population's own order; ties go to the lowest index.
    pub fn best(&self) -> &Individual {
        self.members
            .iter()
            .min_by(|a, b| self.objective.compare(&a.fitness, &b.fitness))
            .expect("population is never empty")
    }

    /// Member indices from best to worst (stable on ties).
    fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        idx.sort_by(|&a, &b| {
            self.objective
                .compare(&self.members[a].fitness, &self.members[b].fitness)
        });
        idx
    }
}

/// Random well-typed trees over a signature.
pub struct TreeGen<'a> {
    sig: &'a VarSignature,
    bools: Vec<usize>,
    nums: Vec<usize>,
}

const CONST_POOL: [f64; 3] = [0.0, 1.0, 2.0];
const MUTATION_CONST_POOL: [f64; 4] = [0.0, 1.0, 2.0, -1.0];

impl<'a> TreeGen<'a> {
    pub fn new(sig: &'a VarSignature) -> Self {
        TreeGen {
            sig,
            bools: sig.of_type(VarType::Boolean),
            nums: sig.of_type(VarType::Number),
        }
    }

    /// Smallest depth a boolean tree can have over this signature.
    fn min_bool_depth(&self) -> usize {
        if self.bools.is_empty() {
            2
        } else {
            1
        }
    }

    fn num_terminal(&self, rng: &mut impl Rng) -> Expr {
        if !self.nums.is_empty() && rng.gen_bool(0.8) {
            let i = self.nums[rng.gen_range(0..self.nums.len())];
            Expr::NumVar(self.sig.var_ref(i))
        } else {
            Expr::Const(CONST_POOL[rng.gen_range(0..CONST_POOL.len())])
        }
    }

    /// Tree of output type `ty` and depth at most `depth` (at least the
    /// minimum depth for `ty`). `full` grows every branch to `depth`.
    pub fn generate(&self, ty: VarType, depth: usize, full: bool, rng: &mut impl Rng) -> Expr {
        match ty {
            VarType::Number => {
                if depth <= 1 || (!full && rng.gen_bool(0.3)) {
                    return self.num_terminal(rng);
                }
                let op = ArithOp::ALL[rng.gen_range(0..ArithOp::ALL.len())];
                let l = self.generate(VarType::Number, depth - 1, full, rng);
                let r = self.generate(VarType::Number, depth - 1, full, rng);
                Expr::arith(op, l, r)
            }
            VarType::Boolean => {
                let min = self.min_bool_depth();
                let depth = depth.max(min);
                if !self.bools.is_empty() && (depth == 1 || (!full && rng.gen_bool(0.3))) {
                    let i = self.bools[rng.gen_range(0..self.bools.len())];
                    return Expr::BoolVar(self.sig.var_ref(i));
                }
                let nested = depth > min;
                let roll: f64 = rng.gen();
                if !nested || roll < 0.5 {
                    let op = CmpOp::ALL[rng.gen_range(0..CmpOp::ALL.len())];
                    let l = self.generate(VarType::Number, depth - 1, full, rng);
                    let r = self.generate(VarType::Number, depth - 1, full, rng);
                    Expr::cmp(op, l, r)
                } else if roll < 0.85 {
                    let op = LogicOp::ALL[rng.gen_range(0..LogicOp::ALL.len())];
                    let l = self.generate(VarType::Boolean, depth - 1, full, rng);
                    let r = self.generate(VarType::Boolean, depth - 1, full, rng);
                    Expr::logic(op, l, r)
                } else {
                    Expr::not(self.generate(VarType::Boolean, depth - 1, full, rng))
                }
            }
        }
    }
}

/// Seeds both populations with `seeds`, every boolean subexpression of
/// them, and ramped half-and-half random trees (depths 2 to 6) up to
/// capacity.
pub fn init_populations(
    seeds: &[Expr],
    sig: &VarSignature,
    cfg: &EvolutionConfig,
    rng: &mut impl Rng,
) -> (Vec<Expr>, Vec<Expr>) {
    let mut seeded = Vec::new();
    let mut seen = HashSet::new();
    for seed in seeds {
        for node in seed.nodes() {
            if node.output_type() == VarType::Boolean && seen.insert(node.clone()) {
                seeded.push(node.clone());
            }
        }
    }
    seeded.truncate(cfg.population_size);
    let gen = TreeGen::new(sig);
    let max_depth = cfg.max_depth.min(6);
    let mut pops = [seeded.clone(), seeded];
    for members in pops.iter_mut() {
        let mut i = 0usize;
        while members.len() < cfg.population_size {
            let depth = 2 + i % (max_depth - 1);
            let full = (i / (max_depth - 1)).is_multiple_of(2);
            i += 1;
            let tree = gen.generate(VarType::Boolean, depth, full, rng);
            if cfg.within_limits(&tree) {
                members.push(tree);
            }
        }
    }
    let [a, b] = pops;
    (a, b)
}

/// Tournament selection; under the unguided baseline, a uniform draw.
pub fn select_parent<'p>(pop: &'p Population, cfg: &EvolutionConfig, rng: &mut impl Rng) -> &'p Individual {
    let n = pop.members.len();
    if !cfg.guided {
        return &pop.members[rng.gen_range(0..n)];
    }
    let draws: Vec<usize> = (0..cfg.tournament_size).map(|_| rng.gen_range(0..n)).collect();
    let best = draws
        .iter()
        .map(|&i| &pop.members[i].fitness)
        .min_by(|a, b| pop.objective.compare(a, b))
        .expect("tournament size is positive");
    let tied: Vec<usize> = draws
        .into_iter()
        .filter(|&i| pop.objective.compare(&pop.members[i].fitness, best).is_eq())
        .collect();
    &pop.members[tied[rng.gen_range(0..tied.len())]]
}

/// Conjunction of both parents with probability
/// `conjunctive_crossover_prob`, otherwise a type-preserving subtree swap
/// from `p2` into `p1`. Offspring over the limits are retried up to five
/// times before falling back to `p1`.
pub fn crossover(p1: &Expr, p2: &Expr, cfg: &EvolutionConfig, rng: &mut impl Rng) -> Expr {
    for _ in 0..5 {
        let child = if rng.gen_bool(cfg.conjunctive_crossover_prob) {
            Expr::and(p1.clone(), p2.clone())
        } else {
            let targets = p1.nodes();
            let at = rng.gen_range(0..targets.len());
            let ty = targets[at].output_type();
            let donors: Vec<&Expr> = p2.nodes().into_iter().filter(|n| n.output_type() == ty).collect();
            if donors.is_empty() {
                continue;
            }
            let donor = donors[rng.gen_range(0..donors.len())];
            p1.replace_node(at, donor.clone())
        };
        if cfg.within_limits(&child) {
            return child;
        }
    }
    p1.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MutationKind {
    FlipOperator,
    RegrowSubtree,
    PerturbConstant,
    SwapVariable,
}

/// With probability `mutation_rate`, applies one uniformly chosen
/// applicable operator: operator flip within its class, subtree regrowth
/// (depth ≤ 3), constant perturbation, or same-typed variable swap.
pub fn mutate(e: &Expr, sig: &VarSignature, cfg: &EvolutionConfig, rng: &mut impl Rng) -> Expr {
    if !rng.gen_bool(cfg.mutation_rate) {
        return e.clone();
    }
    let gen = TreeGen::new(sig);
    let nodes = e.nodes();
    let operators: Vec<usize> = indices(&nodes, |n| matches!(n, Expr::Arith(..) | Expr::Cmp(..) | Expr::Logic(..)));
    let constants: Vec<usize> = indices(&nodes, |n| matches!(n, Expr::Const(_)));
    let swappable: Vec<usize> = indices(&nodes, |n| match n {
        Expr::NumVar(_) => gen.nums.len() > 1,
        Expr::BoolVar(_) => gen.bools.len() > 1,
        _ => false,
    });
    let mut kinds = vec![MutationKind::RegrowSubtree];
    if !operators.is_empty() {
        kinds.push(MutationKind::FlipOperator);
    }
    if !constants.is_empty() {
        kinds.push(MutationKind::PerturbConstant);
    }
    if !swappable.is_empty() {
        kinds.push(MutationKind::SwapVariable);
    }
    for _ in 0..5 {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let (at, replacement) = match kind {
            MutationKind::FlipOperator => {
                let at = *operators.choose(rng).expect("non-empty");
                (at, flip_operator(nodes[at], rng))
            }
            MutationKind::RegrowSubtree => {
                let at = rng.gen_range(0..nodes.len());
                let depth = rng.gen_range(1..=3);
                (at, gen.generate(nodes[at].output_type(), depth, false, rng))
            }
            MutationKind::PerturbConstant => {
                let at = *constants.choose(rng).expect("non-empty");
                let Expr::Const(c) = nodes[at] else { unreachable!() };
                let v = if rng.gen_bool(0.5) {
                    if rng.gen_bool(0.5) {
                        c + 1.0
                    } else {
                        c - 1.0
                    }
                } else {
                    MUTATION_CONST_POOL[rng.gen_range(0..MUTATION_CONST_POOL.len())]
                };
                (at, Expr::number(v))
            }
            MutationKind::SwapVariable => {
                let at = *swappable.choose(rng).expect("non-empty");
                let (current, pool, boolean) = match nodes[at] {
                    Expr::NumVar(v) => (v.index, &gen.nums, false),
                    Expr::BoolVar(v) => (v.index, &gen.bools, true),
                    _ => unreachable!(),
                };
                let others: Vec<usize> = pool.iter().copied().filter(|&i| i != current).collect();
                let pick = sig.var_ref(others[rng.gen_range(0..others.len())]);
                (at, if boolean { Expr::BoolVar(pick) } else { Expr::NumVar(pick) })
            }
        };
        let child = e.replace_node(at, replacement);
        if cfg.within_limits(&child) {
            return child;
        }
    }
    e.clone()
}

fn indices(nodes: &[&Expr], pred: impl Fn(&Expr) -> bool) -> Vec<usize> {
    nodes.iter().enumerate().filter(|(_, n)| pred(n)).map(|(i, _)| i).collect()
}

fn flip_operator(node: &Expr, rng: &mut impl Rng) -> Expr {
    fn other<T: Copy + PartialEq>(all: &[T], current: T, rng: &mut impl Rng) -> T {
        let choices: Vec<T> = all.iter().copied().filter(|&o| o != current).collect();
        choices[rng.gen_range(0..choices.len())]
    }
    match node {
        Expr::Arith(op, l, r) => Expr::Arith(other(&ArithOp::ALL, *op, rng), l.clone(), r.clone()),
        Expr::Cmp(op, l, r) => Expr::Cmp(other(&CmpOp::ALL, *op, rng), l.clone(), r.clone()),
        Expr::Logic(op, l, r) => Expr::Logic(other(&LogicOp::ALL, *op, rng), l.clone(), r.clone()),
        _ => unreachable!("only operator nodes are flipped"),
    }
}

/// Sends the `migration_count` best of each population (under its own
/// order) to replace the worst of the other.
pub fn migrate(a: &mut Population, b: &mut Population, count: usize) {
    if count == 0 {
        return;
    }
    let from_a: Vec<Individual> = a.ranking().into_iter().take(count).map(|i| a.members[i].clone()).collect();
    let from_b: Vec<Individual> = b.ranking().into_iter().take(count).map(|i| b.members[i].clone()).collect();
    for (slot, ind) in a.ranking().into_iter().rev().zip(from_b) {
        a.members[slot] = ind;
    }
    for (slot, ind) in b.ranking().into_iter().rev().zip(from_a) {
        b.members[slot] = ind;
    }
}

/// Fitness evaluation with memoization over an immutable repository.
struct Evaluator<'r> {
    repo: &'r StateRepo,
    cache: HashMap<Expr, FitnessVector>,
}

const CACHE_LIMIT: usize = 100_000;

impl<'r> Evaluator<'r> {
    fn new(repo: &'r StateRepo) -> Self {
        Evaluator {
            repo,
            cache: HashMap::new(),
        }
    }

    fn evaluate(&mut self, exprs: Vec<Expr>) -> Vec<Individual> {
        if self.cache.len() > CACHE_LIMIT {
            self.cache.clear();
        }
        let mut pending: Vec<&Expr> = Vec::new();
        let mut queued = HashSet::new();
        for e in &exprs {
            if !self.cache.contains_key(e) && queued.insert(e) {
                pending.push(e);
            }
        }
        let repo = self.repo;
        let computed: Vec<FitnessVector> = pending.par_iter().map(|e| count_deficiencies(e, repo)).collect();
        for (e, f) in pending.into_iter().zip(computed) {
            self.cache.insert(e.clone(), f);
        }
        exprs
            .into_iter()
            .map(|expr| {
                let fitness = self.cache[&expr];
                Individual { expr, fitness }
            })
            .collect()
    }
}

/// Everything explored so far, summarized.
#[derive(Debug, Default)]
struct Archive {
    explored: u64,
    /// Lowest fn among zero-fp individuals; ties keep the smaller, then the earlier.
    best_zero_fp: Option<Individual>,
    /// Best under the false-positive order.
    best_fp_order: Option<Individual>,
    perfect: Option<Individual>,
}

impl Archive {
    fn record(&mut self, ind: &Individual) {
        self.explored += 1;
        let f = &ind.fitness;
        if f.fp == 0 {
            let better = self
                .best_zero_fp
                .as_ref()
                .is_none_or(|b| (f.fn_, f.size) < (b.fitness.fn_, b.fitness.size));
            if better {
                self.best_zero_fp = Some(ind.clone());
            }
        }
        let better = self
            .best_fp_order
            .as_ref()
            .is_none_or(|b| Objective::FalsePositives.compare(f, &b.fitness).is_lt());
        if better {
            self.best_fp_order = Some(ind.clone());
        }
        if f.is_perfect() && self.perfect.is_none() {
            self.perfect = Some(ind.clone());
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub best: Individual,
    pub generations: u64,
    pub explored: u64,
    /// Some explored individual had zero false positives.
    pub zero_fp_explored: bool,
    pub elapsed: Duration,
    /// Best fitness of the (FP, FN) populations after each generation,
    /// starting with generation 0.
    pub trace: Vec<(FitnessVector, FitnessVector)>,
}

/// Evolves from a single initial assertion.
pub fn evolve(repo: &StateRepo, alpha: &Expr, cfg: &EvolutionConfig) -> EvolutionOutcome {
    evolve_seeded(repo, std::slice::from_ref(alpha), cfg)
}

/// Evolves from several seed assertions (the first is the primary one).
///
/// Returns the first explored assertion with no deficiency on `repo`;
/// otherwise, on budget expiry, the zero-fp assertion with the fewest false
/// negatives (then smallest, then earliest); if no explored assertion has
/// zero false positives, the best one under the false-positive order.
pub fn evolve_seeded(repo: &StateRepo, seeds: &[Expr], cfg: &EvolutionConfig) -> EvolutionOutcome {
    let start = Instant::now();
    let mut rng = stream(cfg.seed, Stream::Evolution);
    let sig = repo.signature();
    let mut evaluator = Evaluator::new(repo);
    let mut archive = Archive::default();

    let (a, b) = init_populations(seeds, sig, cfg, &mut rng);
    let n_a = a.len();
    let mut all = evaluator.evaluate(a.into_iter().chain(b).collect());
    let fn_members = all.split_off(n_a);
    let mut fp_pop = Population {
        objective: Objective::FalsePositives,
        members: all,
    };
    let mut fn_pop = Population {
        objective: Objective::FalseNegatives,
        members: fn_members,
    };
    for ind in fp_pop.members.iter().chain(&fn_pop.members) {
        archive.record(ind);
    }
    let mut trace = vec![(fp_pop.best().fitness, fn_pop.best().fitness)];
    let mut generation = 0u64;

    while archive.perfect.is_none() && within_budget(&cfg.budget, generation, start) {
        generation += 1;
        let fp_children = offspring(&fp_pop, sig, cfg, &mut rng);
        let fn_children = offspring(&fn_pop, sig, cfg, &mut rng);
        let split = fp_children.len();
        let mut evaluated = evaluator.evaluate(fp_children.into_iter().chain(fn_children).collect());
        let fn_next = evaluated.split_off(split);
        for ind in evaluated.iter().chain(&fn_next) {
            archive.record(ind);
        }
        fp_pop.members = evaluated;
        fn_pop.members = fn_next;
        if cfg.guided && generation.is_multiple_of(cfg.migration_interval) {
            migrate(&mut fp_pop, &mut fn_pop, cfg.migration_count);
        }
        trace.push((fp_pop.best().fitness, fn_pop.best().fitness));
    }

    let zero_fp_explored = archive.best_zero_fp.is_some();
    let best = archive
        .perfect
        .or(archive.best_zero_fp)
        .or(archive.best_fp_order)
        .expect("at least one individual was evaluated");
    EvolutionOutcome {
        best,
        generations: generation,
        explored: archive.explored,
        zero_fp_explored,
        elapsed: start.elapsed(),
        trace,
    }
}

fn within_budget(budget: &Budget, generation: u64, start: Instant) -> bool {
    match budget {
        Budget::Generations(n) => generation < *n,
        Budget::WallClock(d) => start.elapsed() < *d,
    }
}

/// Next generation's expressions: the elite (guided runs only) followed by
/// offspring of selection, crossover and mutation.
fn offspring(pop: &Population, sig: &VarSignature, cfg: &EvolutionConfig, rng: &mut impl Rng) -> Vec<Expr> {
    let capacity = pop.members.len();
    let mut next = Vec::with_capacity(capacity);
    if cfg.guided {
        next.push(pop.best().expr.clone());
    }
    while next.len() < capacity {
        let p1 = select_parent(pop, cfg, rng);
        let child = if rng.gen_bool(cfg.crossover_rate) {
            let p2 = select_parent(pop, cfg, rng);
            crossover(&p1.expr, &p2.expr, cfg, rng)
        } else {
            p1.expr.clone()
        };
        next.push(mutate(&child, sig, cfg, rng));
    }
    next
}
