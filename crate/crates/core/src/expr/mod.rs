//! The assertion expression language.
//!
//! Assertions are typed trees over boolean and numeric program variables.
//! Numeric operators are `+ - * / %`, comparisons are
//! `== != < <= > >=`, boolean connectives are `&& || ^ -> <=>` plus
//! prefix `!`. Every assertion root is boolean-typed.

mod eval;
mod parser;

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{Env, EvalError};
pub use parser::{parse, ParseError};

/// Output type of an expression or a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    Boolean,
    Number,
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarType::Boolean => f.write_str("boolean"),
            VarType::Number => f.write_str("number"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: VarType,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("duplicate variable `{0}` in signature")]
    Duplicate(String),
    #[error("invalid variable identifier `{0}`")]
    InvalidIdentifier(String),
}

/// Ordered list of typed variables visible at the assertion point.
///
/// Entry-time copies of method parameters carry the `old_` prefix.
#[derive(Debug, Clone, Default)]
pub struct VarSignature {
    vars: Vec<VarDecl>,
    index: HashMap<String, usize>,
}

impl PartialEq for VarSignature {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars
    }
}

impl Eq for VarSignature {}

impl VarSignature {
    pub fn new<I, S>(vars: I) -> Result<Self, SignatureError>
    where
        I: IntoIterator<Item = (S, VarType)>,
        S: Into<String>,
    {
        let mut sig = VarSignature::default();
        for (name, ty) in vars {
            let name = name.into();
            if !is_identifier(&name) {
                return Err(SignatureError::InvalidIdentifier(name));
            }
            if sig.index.contains_key(&name) {
                return Err(SignatureError::Duplicate(name));
            }
            sig.index.insert(name.clone(), sig.vars.len());
            sig.vars.push(VarDecl { name, ty });
        }
        Ok(sig)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn decls(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Option<(usize, VarType)> {
        self.position(name).map(|i| (i, self.vars[i].ty))
    }

    /// Reference to the variable at `index`, as used inside an [`Expr`].
    pub fn var_ref(&self, index: usize) -> VarRef {
        VarRef {
            name: Arc::from(self.vars[index].name.as_str()),
            index,
        }
    }

    /// Positions of all variables of type `ty`.
    pub fn of_type(&self, ty: VarType) -> Vec<usize> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, d)| d.ty == ty)
            .map(|(i, _)| i)
            .collect()
    }
}

impl Serialize for VarSignature {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.vars.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VarSignature {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let decls = Vec::<VarDecl>::deserialize(deserializer)?;
        VarSignature::new(decls.into_iter().map(|d| (d.name, d.ty))).map_err(serde::de::Error::custom)
    }
}

/// `[A-Za-z_][A-Za-z0-9_.]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// A variable reference resolved against a [`VarSignature`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub name: Arc<str>,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogicOp {
    And,
    Or,
    Xor,
    Implies,
    Equiv,
}

impl ArithOp {
    pub const ALL: [ArithOp; 5] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div, ArithOp::Rem];

    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Rem => "%",
        }
    }
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

impl LogicOp {
    pub const ALL: [LogicOp; 5] = [LogicOp::And, LogicOp::Or, LogicOp::Xor, LogicOp::Implies, LogicOp::Equiv];

    pub fn symbol(self) -> &'static str {
        match self {
            LogicOp::And => "&&",
            LogicOp::Or => "||",
            LogicOp::Xor => "^",
            LogicOp::Implies => "->",
            LogicOp::Equiv => "<=>",
        }
    }
}

/// Typed assertion tree.
///
/// Numeric constants are finite and non-negative; negative values are
/// represented as `(0 - c)`, which is what the concrete syntax `-c` denotes.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    BoolVar(VarRef),
    NumVar(VarRef),
    Const(f64),
    Not(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Logic(LogicOp, Box<Expr>, Box<Expr>),
}

// Constants are finite with no negative zero, so bitwise equality is value equality.
impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Expr::BoolVar(v) | Expr::NumVar(v) => v.index.hash(state),
            Expr::Const(c) => c.to_bits().hash(state),
            Expr::Not(e) => e.hash(state),
            Expr::Arith(op, l, r) => {
                op.hash(state);
                l.hash(state);
                r.hash(state);
            }
            Expr::Cmp(op, l, r) => {
                op.hash(state);
                l.hash(state);
                r.hash(state);
            }
            Expr::Logic(op, l, r) => {
                op.hash(state);
                l.hash(state);
                r.hash(state);
            }
        }
    }
}

impl Expr {
    /// Numeric literal; negative values become `(0 - |v|)`.
    ///
    /// Panics on non-finite input.
    pub fn number(v: f64) -> Expr {
        assert!(v.is_finite(), "numeric constant must be finite");
        if v < 0.0 {
            Expr::arith(ArithOp::Sub, Expr::Const(0.0), Expr::Const(-v))
        } else {
            // folds -0.0 into 0.0
            Expr::Const(v + 0.0)
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn arith(op: ArithOp, l: Expr, r: Expr) -> Expr {
        Expr::Arith(op, Box::new(l), Box::new(r))
    }

    pub fn cmp(op: CmpOp, l: Expr, r: Expr) -> Expr {
        Expr::Cmp(op, Box::new(l), Box::new(r))
    }

    pub fn logic(op: LogicOp, l: Expr, r: Expr) -> Expr {
        Expr::Logic(op, Box::new(l), Box::new(r))
    }

    pub fn and(l: Expr, r: Expr) -> Expr {
        Expr::logic(LogicOp::And, l, r)
    }

    /// `(0 == 0)`
    pub fn always_true() -> Expr {
        Expr::cmp(CmpOp::Eq, Expr::Const(0.0), Expr::Const(0.0))
    }

    /// `(0 != 0)`
    pub fn always_false() -> Expr {
        Expr::cmp(CmpOp::Ne, Expr::Const(0.0), Expr::Const(0.0))
    }

    pub fn output_type(&self) -> VarType {
        match self {
            Expr::NumVar(_) | Expr::Const(_) | Expr::Arith(..) => VarType::Number,
            Expr::BoolVar(_) | Expr::Not(_) | Expr::Cmp(..) | Expr::Logic(..) => VarType::Boolean,
        }
    }

    pub fn children(&self) -> ChildIter<'_> {
        let (a, b) = match self {
            Expr::BoolVar(_) | Expr::NumVar(_) | Expr::Const(_) => (None, None),
            Expr::Not(e) => (Some(&**e), None),
            Expr::Arith(_, l, r) | Expr::Cmp(_, l, r) | Expr::Logic(_, l, r) => (Some(&**l), Some(&**r)),
        };
        ChildIter { a, b }
    }

    /// Total node count.
    pub fn size(&self) -> usize {
        1 + self.children().map(Expr::size).sum::<usize>()
    }

    /// Tree height; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children().map(Expr::depth).max().unwrap_or(0)
    }

    /// Nodes in pre-order. Index `i` of this list addresses the same node
    /// as [`Expr::node`] and [`Expr::replace_node`].
    pub fn nodes(&self) -> Vec<&Expr> {
        let mut out = Vec::with_capacity(16);
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            out.push(e);
            match e {
                Expr::Not(c) => stack.push(c),
                Expr::Arith(_, l, r) | Expr::Cmp(_, l, r) | Expr::Logic(_, l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => {}
            }
        }
        out
    }

    pub fn node(&self, index: usize) -> Option<&Expr> {
        self.nodes().get(index).copied()
    }

    /// Copy of `self` with the pre-order node `index` replaced by `sub`.
    pub fn replace_node(&self, index: usize, sub: Expr) -> Expr {
        let mut out = self.clone();
        let mut sub = Some(sub);
        let mut counter = index;
        replace_rec(&mut out, &mut counter, &mut sub);
        out
    }

    /// Top-level conjuncts: `a && (b && c)` yields `[a, b, c]`.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Logic(LogicOp::And, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                _ => out.push(e),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Left-nested conjunction of `parts`, or `None` when empty.
    pub fn conjoin<I: IntoIterator<Item = Expr>>(parts: I) -> Option<Expr> {
        parts.into_iter().reduce(Expr::and)
    }

    /// Signature positions of all referenced variables, sorted and deduplicated.
    pub fn referenced_vars(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .nodes()
            .into_iter()
            .filter_map(|n| match n {
                Expr::BoolVar(v) | Expr::NumVar(v) => Some(v.index),
                _ => None,
            })
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Re-resolves variable references by name against another signature.
    pub fn rebind(&self, sig: &VarSignature) -> Option<Expr> {
        eval::rebind(self, sig)
    }

    /// Whether every variable reference resolves in `sig` with the right
    /// type and every operator has correctly typed operands.
    pub fn is_well_typed(&self, sig: &VarSignature) -> bool {
        let var_ok = |v: &VarRef, ty: VarType| {
            sig.decls()
                .get(v.index)
                .is_some_and(|d| d.ty == ty && *d.name == *v.name)
        };
        match self {
            Expr::BoolVar(v) => var_ok(v, VarType::Boolean),
            Expr::NumVar(v) => var_ok(v, VarType::Number),
            Expr::Const(c) => c.is_finite() && *c >= 0.0 && c.to_bits() != (-0.0f64).to_bits(),
            Expr::Not(e) => e.output_type() == VarType::Boolean && e.is_well_typed(sig),
            Expr::Arith(_, l, r) | Expr::Cmp(_, l, r) => {
                l.output_type() == VarType::Number
                    && r.output_type() == VarType::Number
                    && l.is_well_typed(sig)
                    && r.is_well_typed(sig)
            }
            Expr::Logic(_, l, r) => {
                l.output_type() == VarType::Boolean
                    && r.output_type() == VarType::Boolean
                    && l.is_well_typed(sig)
                    && r.is_well_typed(sig)
            }
        }
    }
}

fn replace_rec(e: &mut Expr, counter: &mut usize, sub: &mut Option<Expr>) -> bool {
    if *counter == 0 {
        if let Some(s) = sub.take() {
            *e = s;
        }
        return true;
    }
    *counter -= 1;
    match e {
        Expr::Not(c) => replace_rec(c, counter, sub),
        Expr::Arith(_, l, r) | Expr::Cmp(_, l, r) | Expr::Logic(_, l, r) => {
            replace_rec(l, counter, sub) || replace_rec(r, counter, sub)
        }
        _ => false,
    }
}

pub struct ChildIter<'a> {
    a: Option<&'a Expr>,
    b: Option<&'a Expr>,
}

impl<'a> Iterator for ChildIter<'a> {
    type Item = &'a Expr;

    fn next(&mut self) -> Option<&'a Expr> {
        self.a.take().or_else(|| self.b.take())
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized canonical form, e.g. `((y == result) && (x >= result))`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::BoolVar(v) | Expr::NumVar(v) => f.write_str(&v.name),
            // f64 Display never uses exponent notation and is the shortest
            // representation that reads back to the same value.
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Not(e) => write!(f, "!{e}"),
            Expr::Arith(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Cmp(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Logic(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}
