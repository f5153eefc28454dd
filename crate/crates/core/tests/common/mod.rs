#![allow(dead_code)]

use std::collections::HashMap;

use oracle_improver::expr::{ArithOp, CmpOp, LogicOp};
use oracle_improver::{Expr, Value, VarSignature, VarType};
use rand::Rng;

/// Two booleans and three numbers.
pub fn mixed_sig() -> VarSignature {
    VarSignature::new([
        ("p", VarType::Boolean),
        ("q", VarType::Boolean),
        ("x", VarType::Number),
        ("y", VarType::Number),
        ("z", VarType::Number),
    ])
    .unwrap()
}

const CONSTS: [f64; 9] = [0.0, 1.0, 2.0, 3.0, 10.0, 0.5, 0.1, 7.25, 1e200];
const VALUES: [f64; 16] = [
    0.0, 1.0, -1.0, 2.0, -3.0, 0.5, -0.5, 0.1, 0.2, 0.3, 12.345, -7.75, 1e-10, 4e-10, 1e15, 1e300,
];

/// Random well-typed tree of the given type with depth at most `depth`.
pub fn random_expr(sig: &VarSignature, ty: VarType, depth: usize, rng: &mut impl Rng) -> Expr {
    let bools = sig.of_type(VarType::Boolean);
    let nums = sig.of_type(VarType::Number);
    let leaf = depth <= 1 || rng.gen_bool(0.25);
    match ty {
        VarType::Number if leaf => {
            if rng.gen_bool(0.6) && !nums.is_empty() {
                Expr::NumVar(sig.var_ref(nums[rng.gen_range(0..nums.len())]))
            } else {
                Expr::Const(CONSTS[rng.gen_range(0..CONSTS.len())])
            }
        }
        VarType::Number => {
            let op = ArithOp::ALL[rng.gen_range(0..ArithOp::ALL.len())];
            Expr::arith(
                op,
                random_expr(sig, VarType::Number, depth - 1, rng),
                random_expr(sig, VarType::Number, depth - 1, rng),
            )
        }
        VarType::Boolean if leaf && !bools.is_empty() && (depth <= 1 || rng.gen_bool(0.5)) => {
            Expr::BoolVar(sig.var_ref(bools[rng.gen_range(0..bools.len())]))
        }
        VarType::Boolean => {
            let depth = depth.max(2);
            let nested_ok = depth > 2 || !bools.is_empty();
            match rng.gen_range(0..3) {
                1 if nested_ok => {
                    let op = LogicOp::ALL[rng.gen_range(0..LogicOp::ALL.len())];
                    Expr::logic(
                        op,
                        random_expr(sig, VarType::Boolean, depth - 1, rng),
                        random_expr(sig, VarType::Boolean, depth - 1, rng),
                    )
                }
                2 if nested_ok => Expr::not(random_expr(sig, VarType::Boolean, depth - 1, rng)),
                _ => {
                    let op = CmpOp::ALL[rng.gen_range(0..CmpOp::ALL.len())];
                    Expr::cmp(
                        op,
                        random_expr(sig, VarType::Number, depth - 1, rng),
                        random_expr(sig, VarType::Number, depth - 1, rng),
                    )
                }
            }
        }
    }
}

/// Random values for every variable of `sig`, in signature order.
pub fn random_values(sig: &VarSignature, rng: &mut impl Rng) -> Vec<Value> {
    sig.decls()
        .iter()
        .map(|d| match d.ty {
            VarType::Boolean => Value::Bool(rng.gen()),
            VarType::Number => {
                let v = VALUES[rng.gen_range(0..VALUES.len())];
                Value::Num(if rng.gen_bool(0.3) { -v } else { v })
            }
        })
        .collect()
}

pub fn env_by_name(sig: &VarSignature, values: &[Value]) -> HashMap<String, Value> {
    sig.decls().iter().zip(values).map(|(d, v)| (d.name.clone(), *v)).collect()
}

/// Half-even rounding on the scaled value, written out by hand.
pub fn oracle_round(v: f64, digits: u32) -> f64 {
    let scale = 10f64.powi(digits as i32);
    let s = v * scale;
    if !s.is_finite() || s.abs() >= 2f64.powi(50) {
        return v;
    }
    let f = s.floor();
    let frac = s - f;
    let r = if frac > 0.5 {
        f + 1.0
    } else if frac < 0.5 || f % 2.0 == 0.0 {
        f
    } else {
        f + 1.0
    };
    r / scale
}

#[derive(Debug, Clone, Copy)]
enum OVal {
    B(bool),
    N(f64),
}

/// Evaluates the fully parenthesized printed form of an assertion.
///
/// `None` stands for any evaluation error. Both operands are always
/// evaluated, so an error anywhere makes the whole expression an error.
pub fn oracle_eval(text: &str, env: &HashMap<String, Value>, precision: u32) -> Option<bool> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let v = term(&tokens, &mut pos, env, precision);
    assert_eq!(pos, tokens.len(), "trailing tokens in {text}");
    match v {
        Some(OVal::B(b)) => Some(b),
        Some(OVal::N(_)) => panic!("numeric root in {text}"),
        None => None,
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' || c == ')' || (c == '!' && chars.get(i + 1) != Some(&'=')) {
            out.push(c.to_string());
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            let start = i;
            while i < chars.len() && "+-*/%=!<>&|^".contains(chars[i]) {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        }
    }
    out
}

fn term(t: &[String], pos: &mut usize, env: &HashMap<String, Value>, precision: u32) -> Option<OVal> {
    let tok = t[*pos].clone();
    *pos += 1;
    if tok == "!" {
        return match term(t, pos, env, precision)? {
            OVal::B(b) => Some(OVal::B(!b)),
            OVal::N(_) => panic!("negated number"),
        };
    }
    if tok != "(" {
        if let Ok(v) = tok.parse::<f64>() {
            return Some(OVal::N(v));
        }
        return Some(match env[&tok] {
            Value::Bool(b) => OVal::B(b),
            Value::Num(n) => OVal::N(n),
        });
    }
    let l = term(t, pos, env, precision);
    let op = t[*pos].clone();
    *pos += 1;
    let r = term(t, pos, env, precision);
    assert_eq!(t[*pos], ")");
    *pos += 1;
    let (l, r) = (l?, r?);
    match (l, r) {
        (OVal::N(a), OVal::N(b)) => {
            let v = match op.as_str() {
                "+" => a + b,
                "-" => a - b,
                "*" => a * b,
                "/" | "%" if b == 0.0 => return None,
                "/" => a / b,
                "%" => a % b,
                cmp => {
                    let (a, b) = (oracle_round(a, precision), oracle_round(b, precision));
                    return Some(OVal::B(match cmp {
                        "==" => a == b,
                        "!=" => a != b,
                        "<" => a < b,
                        "<=" => a <= b,
                        ">" => a > b,
                        ">=" => a >= b,
                        other => panic!("unknown numeric operator {other}"),
                    }));
                }
            };
            if v.is_finite() {
                Some(OVal::N(v))
            } else {
                None
            }
        }
        (OVal::B(a), OVal::B(b)) => Some(OVal::B(match op.as_str() {
            "&&" => a && b,
            "||" => a || b,
            "^" => a != b,
            "->" => !a || b,
            "<=>" => a == b,
            other => panic!("unknown boolean operator {other}"),
        })),
        _ => panic!("ill-typed operands for {op}"),
    }
}

use oracle_improver::evolution::{crossover, init_populations, mutate, EvolutionConfig};
use oracle_improver::fitness::count_deficiencies;
use oracle_improver::improve::reduce_conjuncts;
use oracle_improver::state::{Label, Origin, ProgramState, StateRepo};
use oracle_improver::expr::parse;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Printing then parsing `n` random trees gives back the same trees.
pub fn roundtrip_trees(n: usize, seed: u64) -> Result<(), String> {
    let sig = mixed_sig();
    let mut rng = rng(seed);
    for _ in 0..n {
        let depth = rng.gen_range(1..=7);
        let e = random_expr(&sig, VarType::Boolean, depth, &mut rng);
        let text = e.to_string();
        match parse(&text, &sig) {
            Ok(back) if back == e => {}
            Ok(back) => return Err(format!("{text} reparsed as {back}")),
            Err(err) => return Err(format!("{text} failed to parse: {err}")),
        }
    }
    Ok(())
}

/// The evaluator and the text oracle agree on `n` random (tree, state)
/// pairs. Returns how many pairs evaluated to an error.
pub fn evaluator_agreement(n: usize, seed: u64, max_depth: usize) -> Result<usize, String> {
    let sig = mixed_sig();
    let mut rng = rng(seed);
    let mut errors = 0;
    for _ in 0..n {
        let depth = rng.gen_range(1..=max_depth);
        let e = random_expr(&sig, VarType::Boolean, depth, &mut rng);
        let values = random_values(&sig, &mut rng);
        let precision = if rng.gen_bool(0.8) { 9 } else { rng.gen_range(0..=12) };
        let main = e.evaluate(&values, precision).ok();
        let oracle = oracle_eval(&e.to_string(), &env_by_name(&sig, &values), precision);
        if main != oracle {
            return Err(format!("{e} on {values:?} at precision {precision}: {main:?} vs {oracle:?}"));
        }
        errors += main.is_none() as usize;
    }
    Ok(errors)
}

/// Applies `ops` crossovers and mutations to an evolving pool and checks
/// every offspring against the type and size limits.
pub fn gp_closure(ops: usize, seed: u64) -> Result<(), String> {
    let floor = VarSignature::new([
        ("old_x", VarType::Number),
        ("x", VarType::Number),
        ("y", VarType::Number),
        ("result", VarType::Number),
    ])
    .unwrap();
    let cfg = EvolutionConfig {
        mutation_rate: 1.0,
        ..EvolutionConfig::default()
    };
    let mut rng = rng(seed);
    for (round, sig) in [mixed_sig(), floor].iter().enumerate() {
        let alpha = random_expr(sig, VarType::Boolean, 3, &mut rng);
        let (mut pool, _) = init_populations(&[alpha], sig, &cfg, &mut rng);
        for i in 0..ops / 2 {
            let a = &pool[rng.gen_range(0..pool.len())];
            let b = &pool[rng.gen_range(0..pool.len())];
            let child = if i % 2 == 0 {
                crossover(a, b, &cfg, &mut rng)
            } else {
                mutate(a, sig, &cfg, &mut rng)
            };
            if !child.is_well_typed(sig) || child.output_type() != VarType::Boolean {
                return Err(format!("ill-typed offspring {child:?}"));
            }
            if child.depth() > cfg.max_depth || child.size() > cfg.max_size {
                return Err(format!(
                    "offspring over limits (depth {}, size {}) in round {round}: {child}",
                    child.depth(),
                    child.size()
                ));
            }
            let slot = rng.gen_range(0..pool.len());
            pool[slot] = child;
        }
    }
    Ok(())
}

pub fn random_repo(sig: &VarSignature, positives: usize, negatives: usize, rng: &mut impl Rng) -> StateRepo {
    let mut repo = StateRepo::new(sig.clone());
    for (count, label) in [(positives, Label::Positive), (negatives, Label::Negative)] {
        for i in 0..count {
            let values = random_values(sig, rng);
            let state = ProgramState {
                vars: env_by_name(sig, &values).into_iter().collect(),
                origin: Origin::InitTest,
                input: format!("#{i}"),
                mutant: (label == Label::Negative).then(|| "M1".to_string()),
                faulted: false,
            };
            repo.ingest(state, label).unwrap();
        }
    }
    repo
}

/// fp(!e) = |S+| - fp(e) and fn(!e) = |S-| - fn(e) for assertions that
/// evaluate without error on the whole repository.
pub fn fitness_complementarity(trials: usize, seed: u64) -> Result<usize, String> {
    let sig = mixed_sig();
    let mut rng = rng(seed);
    let mut checked = 0;
    for _ in 0..trials {
        let repo = random_repo(&sig, rng.gen_range(1..20), rng.gen_range(0..20), &mut rng);
        let e = random_expr(&sig, VarType::Boolean, rng.gen_range(1..=5), &mut rng);
        let error_free = repo
            .positives()
            .iter()
            .chain(repo.negatives())
            .all(|entry| e.evaluate(entry.values(), repo.precision()).is_ok());
        if !error_free {
            continue;
        }
        checked += 1;
        let f = count_deficiencies(&e, &repo);
        let g = count_deficiencies(&Expr::not(e.clone()), &repo);
        let (pos, neg) = (repo.weight(Label::Positive), repo.weight(Label::Negative));
        if g.fp != pos - f.fp || g.fn_ != neg - f.fn_ {
            return Err(format!("{e}: {f:?} vs negation {g:?} with |S+|={pos}, |S-|={neg}"));
        }
    }
    Ok(checked)
}

/// Reduced assertions pass every positive they were reduced against, keep
/// exactly the clean conjuncts, and keep their order.
pub fn reduction_fp_free(trials: usize, seed: u64) -> Result<(), String> {
    let sig = mixed_sig();
    let mut rng = rng(seed);
    for _ in 0..trials {
        let parts: Vec<Expr> = (0..rng.gen_range(1..=4))
            .map(|_| random_expr(&sig, VarType::Boolean, rng.gen_range(1..=4), &mut rng))
            .collect();
        let e = Expr::conjoin(parts).unwrap();
        let positives: Vec<Vec<Value>> = (0..rng.gen_range(1..15)).map(|_| random_values(&sig, &mut rng)).collect();
        let clean: Vec<Expr> = e
            .conjuncts()
            .into_iter()
            .filter(|c| positives.iter().all(|v| c.passes(v.as_slice(), 9)))
            .cloned()
            .collect();
        let reduced = reduce_conjuncts(&e, &positives, 9);
        if reduced != Expr::conjoin(clean) {
            return Err(format!("{e} reduced to {reduced:?}"));
        }
        if let Some(r) = reduced {
            if let Some(v) = positives.iter().find(|v| !r.passes(v.as_slice(), 9)) {
                return Err(format!("{r} fails on positive {v:?}"));
            }
        }
    }
    Ok(())
}
