use oracle_improver::evolution::{evolve, evolve_seeded};
use oracle_improver::expr::parse;
use oracle_improver::fitness::count_deficiencies;
use oracle_improver::rng::{stream, Stream};
use oracle_improver::state::{Label, Origin, ProgramState};
use oracle_improver::subjects::find_subject;
use oracle_improver::{Budget, EvolutionConfig, Objective, StateRepo, Value, VarSignature, VarType};

fn floor_repo(seed: u64) -> StateRepo {
    let floor = find_subject("fast_floor").unwrap();
    floor.init_repo(100, &[0, 1, 2, 3, 4], 9, &mut stream(seed, Stream::Init)).unwrap()
}

fn gens(n: u64, seed: u64) -> EvolutionConfig {
    EvolutionConfig {
        budget: Budget::Generations(n),
        seed,
        ..EvolutionConfig::default()
    }
}

#[test]
fn a_perfect_seed_is_returned_at_generation_zero() {
    let repo = floor_repo(1);
    let alpha = parse("(y == result) && (x >= result) && (x < (result+1))", repo.signature()).unwrap();
    let out = evolve(&repo, &alpha, &gens(50, 1));
    assert_eq!(out.generations, 0);
    assert_eq!(out.best.expr, alpha);
    assert!(out.best.fitness.is_perfect());
}

#[test]
fn running_example_is_repaired_on_the_initial_repository() {
    let repo = floor_repo(2);
    let floor = find_subject("fast_floor").unwrap();
    let alpha = parse(floor.default_assertion, repo.signature()).unwrap();
    let before = count_deficiencies(&alpha, &repo);
    assert!(before.fp > 0 && before.fn_ > 0, "{before:?}");
    let out = evolve(&repo, &alpha, &gens(200, 2));
    assert!(out.best.fitness.is_perfect(), "{:?} {}", out.best.fitness, out.best.expr);
    assert_eq!(count_deficiencies(&out.best.expr, &repo), out.best.fitness);
}

#[test]
fn elitism_never_loses_the_best() {
    let repo = floor_repo(3);
    let alpha = parse("x > result", repo.signature()).unwrap();
    let out = evolve(&repo, &alpha, &gens(40, 3));
    for pair in out.trace.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        assert!(Objective::FalsePositives.compare(&b.0, &a.0).is_le(), "{a:?} -> {b:?}");
        assert!(Objective::FalseNegatives.compare(&b.1, &a.1).is_le(), "{a:?} -> {b:?}");
    }
}

#[test]
fn evolution_is_deterministic_under_a_generation_budget() {
    let repo = floor_repo(4);
    let alpha = parse("x > y", repo.signature()).unwrap();
    let a = evolve(&repo, &alpha, &gens(15, 9));
    let b = evolve(&repo, &alpha, &gens(15, 9));
    assert_eq!(a.best, b.best);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.explored, b.explored);
}

#[test]
fn unguided_search_runs_and_keeps_the_zero_fp_archive() {
    let repo = floor_repo(5);
    let floor = find_subject("fast_floor").unwrap();
    let alpha = parse(floor.default_assertion, repo.signature()).unwrap();
    let cfg = EvolutionConfig {
        guided: false,
        ..gens(20, 5)
    };
    let out = evolve(&repo, &alpha, &cfg);
    assert_eq!(out.generations, 20);
    // the subexpression (y == result) holds on every positive
    assert!(out.zero_fp_explored);
    assert_eq!(out.best.fitness.fp, 0);
}

fn contradictory_repo() -> StateRepo {
    let sig = VarSignature::new([("x", VarType::Number)]).unwrap();
    let mut repo = StateRepo::new(sig);
    let state = |x: f64, m: Option<&str>| ProgramState {
        vars: [("x".to_string(), Value::Num(x))].into_iter().collect(),
        origin: Origin::InitTest,
        input: format!("x={x}"),
        mutant: m.map(str::to_string),
        faulted: false,
    };
    for x in [1.0, 2.0, 3.0] {
        repo.ingest(state(x, None), Label::Positive).unwrap();
        repo.ingest(state(x, Some("M1")), Label::Negative).unwrap();
    }
    repo.ingest(state(10.0, Some("M1")), Label::Negative).unwrap();
    repo
}

#[test]
fn unreachable_perfection_falls_back_to_fewest_false_negatives() {
    let repo = contradictory_repo();
    let alpha = parse("x > 5", repo.signature()).unwrap();
    let out = evolve(&repo, &alpha, &gens(30, 6));
    assert_eq!(out.generations, 30);
    assert!(out.zero_fp_explored);
    // every zero-fp assertion accepts 1, 2 and 3; at best it also rejects 10
    assert_eq!(out.best.fitness.fp, 0);
    assert!((3..=4).contains(&out.best.fitness.fn_), "{:?}", out.best.fitness);
}

#[test]
fn extra_seeds_enter_both_populations() {
    let repo = floor_repo(7);
    let weak = parse("x > y", repo.signature()).unwrap();
    let perfect = parse("(y == result) && (x >= result) && (x < (result+1))", repo.signature()).unwrap();
    let out = evolve_seeded(&repo, &[weak, perfect.clone()], &gens(10, 7));
    assert_eq!(out.generations, 0);
    assert_eq!(out.best.expr, perfect);
}

#[test]
fn wall_clock_budget_stops_the_search() {
    let repo = contradictory_repo();
    let alpha = parse("x > 5", repo.signature()).unwrap();
    let cfg = EvolutionConfig {
        budget: "200ms".parse().unwrap(),
        ..EvolutionConfig::default()
    };
    let out = evolve(&repo, &alpha, &cfg);
    assert!(out.elapsed.as_millis() < 5_000, "{:?}", out.elapsed);
    assert!(out.generations > 0);
}
