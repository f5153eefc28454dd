use thiserror::Error;

use super::{ArithOp, CmpOp, Expr, LogicOp, VarRef, VarSignature, VarType};
use crate::state::{round_finite, ProgramState, Value};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("modulo by zero")]
    ModuloByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("variable `{0}` is unbound or has the wrong type")]
    Unbound(String),
}

/// Variable bindings an expression can be evaluated against.
pub trait Env {
    fn get(&self, var: &VarRef) -> Option<Value>;
}

/// Positional bindings, aligned with the signature the expression was built on.
impl Env for [Value] {
    fn get(&self, var: &VarRef) -> Option<Value> {
        <[Value]>::get(self, var.index).copied()
    }
}

impl Env for Vec<Value> {
    fn get(&self, var: &VarRef) -> Option<Value> {
        self.as_slice().get(var.index).copied()
    }
}

impl Env for ProgramState {
    fn get(&self, var: &VarRef) -> Option<Value> {
        self.vars.get(&*var.name).copied()
    }
}

impl Expr {
    /// Evaluates a boolean expression.
    ///
    /// Every variable is checked for a binding of the right type before
    /// evaluation starts. Numeric comparisons round both operands to
    /// `precision` decimal places. Connectives always evaluate both sides.
    pub fn evaluate<E: Env + ?Sized>(&self, env: &E, precision: u32) -> Result<bool, EvalError> {
        self.check_bindings(env)?;
        self.eval_bool(env, precision)
    }

    /// Evaluation without the binding pre-check; an unbound variable still
    /// yields [`EvalError::Unbound`] when reached.
    pub fn evaluate_unchecked<E: Env + ?Sized>(&self, env: &E, precision: u32) -> Result<bool, EvalError> {
        self.eval_bool(env, precision)
    }

    /// Whether this expression holds (evaluates to `true` without error).
    pub fn passes<E: Env + ?Sized>(&self, env: &E, precision: u32) -> bool {
        matches!(self.evaluate(env, precision), Ok(true))
    }

    fn check_bindings<E: Env + ?Sized>(&self, env: &E) -> Result<(), EvalError> {
        for node in self.nodes() {
            let (v, ty) = match node {
                Expr::BoolVar(v) => (v, VarType::Boolean),
                Expr::NumVar(v) => (v, VarType::Number),
                _ => continue,
            };
            match env.get(v) {
                Some(val) if val.var_type() == ty => {}
                _ => return Err(EvalError::Unbound(v.name.to_string())),
            }
        }
        Ok(())
    }

    fn eval_bool<E: Env + ?Sized>(&self, env: &E, precision: u32) -> Result<bool, EvalError> {
        match self {
            Expr::BoolVar(v) => match env.get(v) {
                Some(Value::Bool(b)) => Ok(b),
                _ => Err(EvalError::Unbound(v.name.to_string())),
            },
            Expr::Not(e) => e.eval_bool(env, precision).map(|b| !b),
            Expr::Cmp(op, l, r) => {
                let l = l.eval_num(env);
                let r = r.eval_num(env);
                let (l, r) = (round_finite(l?, precision), round_finite(r?, precision));
                Ok(match op {
                    CmpOp::Eq => l == r,
                    CmpOp::Ne => l != r,
                    CmpOp::Lt => l < r,
                    CmpOp::Le => l <= r,
                    CmpOp::Gt => l > r,
                    CmpOp::Ge => l >= r,
                })
            }
            Expr::Logic(op, l, r) => {
                let l = l.eval_bool(env, precision);
                let r = r.eval_bool(env, precision);
                let (l, r) = (l?, r?);
                Ok(match op {
                    LogicOp::And => l && r,
                    LogicOp::Or => l || r,
                    LogicOp::Xor => l != r,
                    LogicOp::Implies => !l || r,
                    LogicOp::Equiv => l == r,
                })
            }
            Expr::NumVar(_) | Expr::Const(_) | Expr::Arith(..) => {
                unreachable!("numeric node in boolean position of a well-typed expression")
            }
        }
    }

    fn eval_num<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        match self {
            Expr::NumVar(v) => match env.get(v) {
                Some(Value::Num(n)) => Ok(n),
                _ => Err(EvalError::Unbound(v.name.to_string())),
            },
            Expr::Const(c) => Ok(*c),
            Expr::Arith(op, l, r) => {
                let l = l.eval_num(env);
                let r = r.eval_num(env);
                let (l, r) = (l?, r?);
                let v = match op {
                    ArithOp::Add => l + r,
                    ArithOp::Sub => l - r,
                    ArithOp::Mul => l * r,
                    ArithOp::Div if r == 0.0 => return Err(EvalError::DivisionByZero),
                    ArithOp::Div => l / r,
                    ArithOp::Rem if r == 0.0 => return Err(EvalError::ModuloByZero),
                    // truncated remainder: sign follows the dividend
                    ArithOp::Rem => l % r,
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::Overflow)
                }
            }
            Expr::BoolVar(_) | Expr::Not(_) | Expr::Cmp(..) | Expr::Logic(..) => {
                unreachable!("boolean node in numeric position of a well-typed expression")
            }
        }
    }
}

/// Resolves every variable of `e` against `sig` by name, re-deriving
/// indices. Returns `None` when a variable is missing or mistyped.
pub(crate) fn rebind(e: &Expr, sig: &VarSignature) -> Option<Expr> {
    Some(match e {
        Expr::BoolVar(v) => match sig.lookup(&v.name)? {
            (i, VarType::Boolean) => Expr::BoolVar(sig.var_ref(i)),
            _ => return None,
        },
        Expr::NumVar(v) => match sig.lookup(&v.name)? {
            (i, VarType::Number) => Expr::NumVar(sig.var_ref(i)),
            _ => return None,
        },
        Expr::Const(c) => Expr::Const(*c),
        Expr::Not(x) => Expr::not(rebind(x, sig)?),
        Expr::Arith(op, l, r) => Expr::arith(*op, rebind(l, sig)?, rebind(r, sig)?),
        Expr::Cmp(op, l, r) => Expr::cmp(*op, rebind(l, sig)?, rebind(r, sig)?),
        Expr::Logic(op, l, r) => Expr::logic(*op, rebind(l, sig)?, rebind(r, sig)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn floor_sig() -> VarSignature {
        VarSignature::new([
            ("x", VarType::Number),
            ("y", VarType::Number),
            ("result", VarType::Number),
        ])
        .unwrap()
    }

    fn nums(v: &[f64]) -> Vec<Value> {
        v.iter().copied().map(Value::Num).collect()
    }

    #[test]
    fn running_example_values() {
        let sig = floor_sig();
        let e = parse("(y == result) && (x > result)", &sig).unwrap();
        assert_eq!(e.evaluate(&nums(&[1.5, 1.0, 1.0]), 9), Ok(true));
        // integral x is the false-positive case of the initial floor assertion
        assert_eq!(e.evaluate(&nums(&[5.0, 5.0, 5.0]), 9), Ok(false));
    }

    #[test]
    fn modulo_by_zero_is_an_error() {
        let sig = VarSignature::new([("x", VarType::Number), ("y", VarType::Number)]).unwrap();
        let e = parse("(x % y) == 0", &sig).unwrap();
        assert_eq!(e.evaluate(&nums(&[1.0, 0.0]), 9), Err(EvalError::ModuloByZero));
        let d = parse("x / y > 0", &sig).unwrap();
        assert_eq!(d.evaluate(&nums(&[1.0, 0.0]), 9), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn no_short_circuit() {
        let sig = VarSignature::new([("x", VarType::Number), ("y", VarType::Number)]).unwrap();
        let left_false = parse("(x > 100) && (x / y > 0)", &sig).unwrap();
        assert_eq!(left_false.evaluate(&nums(&[1.0, 0.0]), 9), Err(EvalError::DivisionByZero));
        let left_true = parse("(x < 100) || (x / y > 0)", &sig).unwrap();
        assert_eq!(left_true.evaluate(&nums(&[1.0, 0.0]), 9), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn truncated_remainder() {
        let sig = VarSignature::new([("x", VarType::Number)]).unwrap();
        let e = parse("x % 3 == -1", &sig).unwrap();
        assert_eq!(e.evaluate(&nums(&[-7.0]), 9), Ok(true));
        let e = parse("x % 2 == 1.5", &sig).unwrap();
        assert_eq!(e.evaluate(&nums(&[5.5]), 9), Ok(true));
    }

    #[test]
    fn comparisons_round_to_precision() {
        let sig = VarSignature::new([("a", VarType::Number), ("b", VarType::Number)]).unwrap();
        let e = parse("a + b == 0.3", &sig).unwrap();
        assert_eq!(e.evaluate(&nums(&[0.1, 0.2]), 9), Ok(true));
        assert_eq!(e.evaluate(&nums(&[0.1, 0.2]), 17), Ok(false));
        let le = parse("a + b <= 0.3", &sig).unwrap();
        assert_eq!(le.evaluate(&nums(&[0.1, 0.2]), 9), Ok(true));
    }

    #[test]
    fn overflow_is_an_error() {
        let sig = VarSignature::new([("a", VarType::Number)]).unwrap();
        let e = parse("a * a > 0", &sig).unwrap();
        assert_eq!(e.evaluate(&nums(&[1e300]), 9), Err(EvalError::Overflow));
    }

    #[test]
    fn unbound_is_rejected_before_evaluation() {
        let sig = floor_sig();
        let e = parse("(x / 0 > 1) && (result > 0)", &sig).unwrap();
        assert_eq!(e.evaluate(&nums(&[1.0, 2.0]), 9), Err(EvalError::Unbound("result".into())));
        let wrong_type = vec![Value::Num(1.0), Value::Num(1.0), Value::Bool(true)];
        assert!(matches!(e.evaluate(&wrong_type, 9), Err(EvalError::Unbound(_))));
    }

    #[test]
    fn boolean_connectives() {
        let sig = VarSignature::new([("p", VarType::Boolean), ("q", VarType::Boolean)]).unwrap();
        let table = [(false, false), (false, true), (true, false), (true, true)];
        let cases = [
            ("p && q", [false, false, false, true]),
            ("p || q", [false, true, true, true]),
            ("p ^ q", [false, true, true, false]),
            ("p -> q", [true, true, false, true]),
            ("p <=> q", [true, false, false, true]),
            ("!p", [true, true, false, false]),
        ];
        for (text, expected) in cases {
            let e = parse(text, &sig).unwrap();
            for ((p, q), want) in table.iter().zip(expected) {
                let env = vec![Value::Bool(*p), Value::Bool(*q)];
                assert_eq!(e.evaluate(&env, 9), Ok(want), "{text} at p={p} q={q}");
            }
        }
    }

    #[test]
    fn rebinding_follows_names() {
        let a = floor_sig();
        let b = VarSignature::new([
            ("result", VarType::Number),
            ("y", VarType::Number),
            ("x", VarType::Number),
        ])
        .unwrap();
        let e = parse("x > result", &a).unwrap();
        let moved = rebind(&e, &b).unwrap();
        assert_eq!(moved, parse("x > result", &b).unwrap());
        let missing = VarSignature::new([("x", VarType::Number)]).unwrap();
        assert!(rebind(&e, &missing).is_none());
    }
}
