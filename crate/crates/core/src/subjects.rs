//! Built-in subject programs.
//!
//! Each subject is a small method with a reference implementation and a set
//! of hand-seeded mutants, written as a single mutant schema: the program
//! takes `Option<usize>` and `Some(k)` activates mutant `k`. Running a
//! program captures the method parameters at entry (prefixed `old_`) and the
//! parameters and locals visible right before the assertion point.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{VarSignature, VarType};
use crate::state::{round_finite, Label, Origin, ProgramState, StateRepo, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubjectError {
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("unknown mutant `{mutant}` for subject `{subject}`")]
    UnknownMutant { subject: String, mutant: String },
    #[error("sample size must be at least 1")]
    NoSamples,
}

/// Input domain of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    /// Reals in `[lo, hi]` with at most `decimals` fractional digits.
    Real { lo: f64, hi: f64, decimals: u32 },
    Int { lo: i64, hi: i64 },
}

impl Domain {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Domain::Real { lo, hi, .. } => (lo..=hi).contains(&v),
            Domain::Int { lo, hi } => v.fract() == 0.0 && (lo as f64..=hi as f64).contains(&v),
        }
    }

    fn boundaries(&self) -> Vec<f64> {
        let (lo, hi) = match *self {
            Domain::Real { lo, hi, .. } => (lo, hi),
            Domain::Int { lo, hi } => (lo as f64, hi as f64),
        };
        let mut out = vec![lo, hi, 0.0, 1.0, -1.0, lo + 1.0, hi - 1.0];
        out.retain(|v| self.contains(*v));
        out.dedup();
        out
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let roll: f64 = rng.gen();
        if roll < 0.2 {
            let b = self.boundaries();
            return b[rng.gen_range(0..b.len())];
        }
        match *self {
            Domain::Real { lo, hi, .. } if roll < 0.35 => {
                let v = rng.gen_range(lo.ceil()..=hi.floor()).round();
                v + 0.0
            }
            Domain::Real { lo, hi, decimals } => {
                let v = round_finite(rng.gen_range(lo..=hi), decimals);
                v.clamp(lo, hi)
            }
            Domain::Int { lo, hi } => rng.gen_range(lo..=hi) as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Param {
    pub name: &'static str,
    pub domain: Domain,
}

#[derive(Debug, Clone, Serialize)]
pub struct MutantInfo {
    pub id: &'static str,
    pub description: &'static str,
}

/// Parameter and local values at the assertion point.
#[derive(Debug, Clone, PartialEq)]
pub struct Exit {
    pub params: Vec<Value>,
    pub locals: Vec<Value>,
    /// Execution faulted (e.g. division by zero or a runaway loop) before
    /// reaching the assertion point; the values are those held at the fault.
    pub faulted: bool,
}

type Program = fn(&[f64], Option<usize>) -> Exit;

/// A program under analysis.
pub struct Subject {
    pub name: &'static str,
    pub description: &'static str,
    params: Vec<Param>,
    locals: Vec<(&'static str, VarType)>,
    signature: VarSignature,
    program: Program,
    mutants: Vec<MutantInfo>,
    pub default_assertion: &'static str,
    normalize: Option<fn(&mut [f64])>,
}

impl std::fmt::Debug for Subject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Subject").field("name", &self.name).finish_non_exhaustive()
    }
}

/// A concrete input, one value per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Input(pub Vec<f64>);

/// One input executed on the reference and on a set of mutants.
#[derive(Debug, Clone)]
pub struct CapturedRun {
    pub input: String,
    pub correct: ProgramState,
    /// `(mutant index, state)` pairs.
    pub mutants: Vec<(usize, ProgramState)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubjectInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub signature: VarSignature,
    pub params: Vec<Param>,
    pub mutants: Vec<MutantInfo>,
    pub held_out: Vec<&'static str>,
    pub initial_assertion: &'static str,
}

impl Subject {
    fn new(
        name: &'static str,
        description: &'static str,
        params: Vec<Param>,
        locals: Vec<(&'static str, VarType)>,
        program: Program,
        mutants: Vec<MutantInfo>,
        default_assertion: &'static str,
    ) -> Subject {
        let entry = params.iter().map(|p| (format!("old_{}", p.name), VarType::Number));
        let current = params.iter().map(|p| (p.name.to_string(), VarType::Number));
        let local = locals.iter().map(|(n, t)| (n.to_string(), *t));
        let signature = VarSignature::new(entry.chain(current).chain(local)).expect("subject variables are unique");
        Subject {
            name,
            description,
            params,
            locals,
            signature,
            program,
            mutants,
            default_assertion,
            normalize: None,
        }
    }

    fn with_normalizer(mut self, f: fn(&mut [f64])) -> Self {
        self.normalize = Some(f);
        self
    }

    pub fn signature(&self) -> &VarSignature {
        &self.signature
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn mutants(&self) -> &[MutantInfo] {
        &self.mutants
    }

    pub fn mutant_index(&self, id: &str) -> Result<usize, SubjectError> {
        self.mutants
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| SubjectError::UnknownMutant {
                subject: self.name.to_string(),
                mutant: id.to_string(),
            })
    }

    /// Mutants reserved for validation by default: the last two when the
    /// subject has at least six, otherwise none.
    pub fn default_held_out(&self) -> Vec<usize> {
        let n = self.mutants.len();
        if n >= 6 {
            (n - 2..n).collect()
        } else {
            Vec::new()
        }
    }

    pub fn info(&self) -> SubjectInfo {
        SubjectInfo {
            name: self.name,
            description: self.description,
            signature: self.signature.clone(),
            params: self.params.clone(),
            mutants: self.mutants.clone(),
            held_out: self.default_held_out().into_iter().map(|i| self.mutants[i].id).collect(),
            initial_assertion: self.default_assertion,
        }
    }

    pub fn fingerprint(&self, input: &Input) -> String {
        self.params
            .iter()
            .zip(&input.0)
            .map(|(p, v)| format!("{}={}", p.name, v))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Draws `n` inputs mixing uniform values with boundary values
    /// (range endpoints, 0, ±1, integral points).
    pub fn sample_inputs(&self, n: usize, rng: &mut impl Rng) -> Vec<Input> {
        (0..n).map(|_| self.sample_input(rng)).collect()
    }

    pub fn sample_input(&self, rng: &mut impl Rng) -> Input {
        let mut values: Vec<f64> = self.params.iter().map(|p| p.domain.sample(rng)).collect();
        if let Some(f) = self.normalize {
            f(&mut values);
        }
        Input(values)
    }

    fn to_state(&self, input: &Input, exit: Exit, precision: u32, mutant: Option<usize>, origin: Origin) -> ProgramState {
        let round = |v: Value| match v {
            Value::Num(n) => Value::Num(round_finite(n, precision)),
            b => b,
        };
        let mut vars = std::collections::BTreeMap::new();
        for (p, v) in self.params.iter().zip(&input.0) {
            vars.insert(format!("old_{}", p.name), round(Value::Num(*v)));
        }
        for (p, v) in self.params.iter().zip(exit.params) {
            vars.insert(p.name.to_string(), round(v));
        }
        for ((name, _), v) in self.locals.iter().zip(exit.locals) {
            vars.insert(name.to_string(), round(v));
        }
        ProgramState {
            vars,
            origin,
            input: self.fingerprint(input),
            mutant: mutant.map(|k| self.mutants[k].id.to_string()),
            faulted: exit.faulted,
        }
    }

    /// State of the reference implementation at the assertion point.
    pub fn capture_reference(&self, input: &Input, precision: u32, origin: Origin) -> ProgramState {
        let exit = (self.program)(&input.0, None);
        self.to_state(input, exit, precision, None, origin)
    }

    /// State of mutant `k` at the assertion point (or at its fault).
    pub fn capture_mutant(&self, k: usize, input: &Input, precision: u32, origin: Origin) -> ProgramState {
        let exit = (self.program)(&input.0, Some(k));
        self.to_state(input, exit, precision, Some(k), origin)
    }

    /// Runs the reference and every mutant on `input`.
    pub fn run_and_capture(&self, input: &Input, precision: u32) -> CapturedRun {
        let correct = self.capture_reference(input, precision, Origin::InitTest);
        let mutants = (0..self.mutants.len())
            .map(|k| (k, self.capture_mutant(k, input, precision, Origin::InitTest)))
            .collect();
        CapturedRun {
            input: self.fingerprint(input),
            correct,
            mutants,
        }
    }

    /// Builds the initial repository from `n` sampled inputs: reference
    /// states become positives; states of the selected mutants that differ
    /// from the reference state (or faulted) become negatives.
    pub fn init_repo(
        &self,
        n: usize,
        mutants: &[usize],
        precision: u32,
        rng: &mut impl Rng,
    ) -> Result<StateRepo, SubjectError> {
        if n == 0 {
            return Err(SubjectError::NoSamples);
        }
        let mut repo = StateRepo::with_precision(self.signature.clone(), precision);
        for input in self.sample_inputs(n, rng) {
            let correct = self.capture_reference(&input, precision, Origin::InitTest);
            for &k in mutants {
                let state = self.capture_mutant(k, &input, precision, Origin::InitTest);
                if is_incorrect(&correct, &state) {
                    repo.ingest(state, Label::Negative).expect("subject states conform to the signature");
                }
            }
            repo.ingest(correct, Label::Positive).expect("subject states conform to the signature");
        }
        Ok(repo)
    }
}

/// A mutant state is incorrect when it faulted or differs from the
/// reference state of the same input.
pub fn is_incorrect(reference: &ProgramState, mutant: &ProgramState) -> bool {
    mutant.faulted || !mutant.same_vars(reference)
}

pub fn list_subjects() -> Vec<Subject> {
    vec![fast_floor(), abs(), max3(), clamp(), midpoint(), gcd()]
}

pub fn find_subject(name: &str) -> Result<Subject, SubjectError> {
    list_subjects()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| SubjectError::UnknownSubject(name.to_string()))
}

fn num(v: f64) -> Value {
    Value::Num(v + 0.0)
}

fn mutant(id: &'static str, description: &'static str) -> MutantInfo {
    MutantInfo { id, description }
}

fn exit(params: &[f64], locals: Vec<Value>) -> Exit {
    Exit {
        params: params.iter().copied().map(num).collect(),
        locals,
        faulted: false,
    }
}

fn fast_floor() -> Subject {
    fn run(input: &[f64], m: Option<usize>) -> Exit {
        let x = input[0];
        let mut y = if m == Some(5) { x.round() } else { x.trunc() };
        if m == Some(0) {
            y -= 1.0;
        }
        let negative = if m == Some(1) { x > 0.0 } else { x < 0.0 };
        let inexact = if m == Some(3) { y == x } else { y != x };
        if negative && inexact {
            if m == Some(2) {
                y += 1.0;
            } else {
                y -= 1.0;
            }
        }
        let zero = if m == Some(6) { y == 1.0 } else { y == 0.0 };
        let result = if zero {
            if m == Some(4) {
                x
            } else {
                x * y
            }
        } else {
            y
        };
        exit(&[x], vec![num(y), num(result)])
    }
    Subject::new(
        "fast_floor",
        "cast-based floor with a negative-correction branch",
        vec![Param {
            name: "x",
            domain: Domain::Real { lo: -100.0, hi: 100.0, decimals: 3 },
        }],
        vec![("y", VarType::Number), ("result", VarType::Number)],
        run,
        vec![
            mutant("M1", "subtract 1 from the truncating cast"),
            mutant("M2", "x < 0 replaced by x > 0"),
            mutant("M3", "y-- replaced by y++"),
            mutant("M4", "y != x replaced by y == x"),
            mutant("M5", "return x * y replaced by return x"),
            mutant("M6", "truncating cast replaced by rounding"),
            mutant("M7", "y == 0 replaced by y == 1"),
        ],
        "(y == result) && (x > result)",
    )
}

fn abs() -> Subject {
    fn run(input: &[f64], m: Option<usize>) -> Exit {
        let x = input[0];
        let cond = match m {
            Some(0) => x > 0.0,
            Some(1) => x < 1.0,
            Some(4) => x < -1.0,
            _ => x < 0.0,
        };
        let result = if cond {
            match m {
                Some(2) => x,
                Some(3) => -x + 1.0,
                Some(5) => x * x,
                Some(6) => -x - 1.0,
                _ => -x,
            }
        } else {
            x
        };
        exit(&[x], vec![num(result)])
    }
    Subject::new(
        "abs",
        "absolute value",
        vec![Param {
            name: "x",
            domain: Domain::Real { lo: -100.0, hi: 100.0, decimals: 3 },
        }],
        vec![("result", VarType::Number)],
        run,
        vec![
            mutant("M1", "x < 0 replaced by x > 0"),
            mutant("M2", "x < 0 replaced by x < 1"),
            mutant("M3", "-x replaced by x"),
            mutant("M4", "-x replaced by -x + 1"),
            mutant("M5", "x < 0 replaced by x < -1"),
            mutant("M6", "-x replaced by x * x"),
            mutant("M7", "-x replaced by -x - 1"),
        ],
        "(result >= 0)",
    )
}

fn max3() -> Subject {
    fn run(input: &[f64], m: Option<usize>) -> Exit {
        let (a, b, c) = (input[0], input[1], input[2]);
        let mut best = if m == Some(3) { b } else { a };
        let take_b = if m == Some(1) { b < best } else { b > best };
        if take_b {
            best = if m == Some(6) { a } else { b };
        }
        if m != Some(0) {
            let take_c = if m == Some(4) { c > a } else { c > best };
            if take_c {
                best = match m {
                    Some(2) => b,
                    Some(5) => c + 1.0,
                    _ => c,
                };
            }
        }
        exit(&[a, b, c], vec![num(best)])
    }
    let int = Domain::Int { lo: -50, hi: 50 };
    Subject::new(
        "max3",
        "maximum of three integers",
        vec![
            Param { name: "a", domain: int },
            Param { name: "b", domain: int },
            Param { name: "c", domain: int },
        ],
        vec![("result", VarType::Number)],
        run,
        vec![
            mutant("M1", "comparison with c deleted"),
            mutant("M2", "b > m replaced by b < m"),
            mutant("M3", "m = c replaced by m = b"),
            mutant("M4", "m = a replaced by m = b"),
            mutant("M5", "c > m replaced by c > a"),
            mutant("M6", "m = c replaced by m = c + 1"),
            mutant("M7", "m = b replaced by m = a"),
        ],
        "(result >= a) && (result >= b)",
    )
}

fn clamp() -> Subject {
    fn run(input: &[f64], m: Option<usize>) -> Exit {
        let (x, lo, hi) = (input[0], input[1], input[2]);
        let below = if m == Some(4) { x < hi } else { x < lo };
        let above = match m {
            Some(0) => x < hi,
            Some(3) => x > lo,
            _ => x > hi,
        };
        let result = if below {
            match m {
                Some(2) => x,
                Some(5) => hi,
                _ => lo,
            }
        } else if above {
            match m {
                Some(1) => lo,
                Some(6) => hi - 1.0,
                _ => hi,
            }
        } else {
            x
        };
        exit(&[x, lo, hi], vec![Value::Bool(below), num(result)])
    }
    fn order_bounds(v: &mut [f64]) {
        if v[1] > v[2] {
            v.swap(1, 2);
        }
    }
    let real = Domain::Real { lo: -100.0, hi: 100.0, decimals: 2 };
    Subject::new(
        "clamp",
        "clamp x into [lo, hi]",
        vec![
            Param { name: "x", domain: real },
            Param { name: "lo", domain: real },
            Param { name: "hi", domain: real },
        ],
        vec![("below", VarType::Boolean), ("result", VarType::Number)],
        run,
        vec![
            mutant("M1", "x > hi replaced by x < hi"),
            mutant("M2", "return hi replaced by return lo"),
            mutant("M3", "return lo replaced by return x"),
            mutant("M4", "x > hi replaced by x > lo"),
            mutant("M5", "x < lo replaced by x < hi"),
            mutant("M6", "return lo replaced by return hi"),
            mutant("M7", "return hi replaced by return hi - 1"),
        ],
        "(result >= lo) && (result <= hi)",
    )
    .with_normalizer(order_bounds)
}

fn midpoint() -> Subject {
    fn run(input: &[f64], m: Option<usize>) -> Exit {
        let (a, b) = (input[0] as i64, input[1] as i64);
        let result = match m {
            // 32-bit addition wraps around, then truncating division
            Some(0) => ((a as i32).wrapping_add(b as i32) / 2) as i64,
            Some(1) => (a - b) / 2,
            Some(2) => (a + b + 1) / 2,
            Some(3) => a / 2 + b / 2,
            Some(4) => (a + b) / 4,
            Some(5) => a + (b - a) / 2,
            Some(6) => (a * b) / 2,
            _ => (a + b).div_euclid(2),
        };
        exit(&[a as f64, b as f64], vec![num(result as f64)])
    }
    let int = Domain::Int {
        lo: 0,
        hi: i32::MAX as i64,
    };
    Subject::new(
        "midpoint",
        "average of two non-negative 32-bit integers",
        vec![Param { name: "a", domain: int }, Param { name: "b", domain: int }],
        vec![("result", VarType::Number)],
        run,
        vec![
            mutant("M1", "overflow-prone 32-bit sum"),
            mutant("M2", "a + b replaced by a - b"),
            mutant("M3", "(a + b) / 2 replaced by (a + b + 1) / 2"),
            mutant("M4", "(a + b) / 2 replaced by a / 2 + b / 2"),
            mutant("M5", "/ 2 replaced by / 4"),
            mutant("M6", "(a + b) / 2 replaced by a + (b - a) / 2"),
            mutant("M7", "a + b replaced by a * b"),
        ],
        "(result >= 0)",
    )
}

fn gcd() -> Subject {
    const MAX_STEPS: usize = 1000;
    fn run(input: &[f64], m: Option<usize>) -> Exit {
        let (mut a, mut b) = (input[0] as i64, input[1] as i64);
        let mut steps = 0;
        let faulted = |a: i64, b: i64, result: i64| Exit {
            params: vec![num(a as f64), num(b as f64)],
            locals: vec![num(result as f64)],
            faulted: true,
        };
        loop {
            let go = match m {
                Some(0) => b > 1,
                Some(5) => a != 0,
                _ => b != 0,
            };
            if !go {
                break;
            }
            steps += 1;
            if steps > MAX_STEPS {
                return faulted(a, b, 0);
            }
            let t = if m == Some(4) { a } else { b };
            let (num_, den) = if m == Some(1) { (b, a) } else { (a, b) };
            if den == 0 {
                return faulted(a, b, 0);
            }
            b = if m == Some(6) { num_ / den } else { num_ % den };
            a = if m == Some(3) { b } else { t };
        }
        let result = if m == Some(2) { b } else { a };
        exit(&[a as f64, b as f64], vec![num(result as f64)])
    }
    let int = Domain::Int { lo: 0, hi: 200 };
    Subject::new(
        "gcd",
        "Euclid's algorithm; parameters are overwritten by the loop",
        vec![Param { name: "a", domain: int }, Param { name: "b", domain: int }],
        vec![("result", VarType::Number)],
        run,
        vec![
            mutant("M1", "b != 0 replaced by b > 1"),
            mutant("M2", "a % b replaced by b % a"),
            mutant("M3", "return a replaced by return b"),
            mutant("M4", "a = t replaced by a = b"),
            mutant("M5", "t = b replaced by t = a"),
            mutant("M6", "b != 0 replaced by a != 0"),
            mutant("M7", "a % b replaced by a / b"),
        ],
        "(result >= 0) && (b == 0)",
    )
}
