//! Symbolic expressions: the closed-form output of a trained network.
//!
//! Constants are kept at full `f64` precision. Rounding only happens in
//! [`Style::Pretty`] output. The canonical on-disk form is the JSON AST
//! produced by serde (schema in the README), which round-trips exactly.

mod format;
mod parse;
mod simplify;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{EqlError, Result};
use crate::funcset::{unary_unchecked, FuncKind};

pub use format::Style;
pub use parse::parse;
pub use simplify::simplify;

/// Variable name to value.
pub type VarBindings = HashMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Expr {
    Const { value: f64 },
    Var { name: String },
    Sum { terms: Vec<Expr> },
    Prod { factors: Vec<Expr> },
    Pow { base: Box<Expr>, exponent: u32 },
    Apply { func: FuncKind, arg: Box<Expr> },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const { value }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var { name: name.into() }
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        Expr::Sum { terms }
    }

    pub fn prod(factors: Vec<Expr>) -> Self {
        Expr::Prod { factors }
    }

    pub fn pow(base: Expr, exponent: u32) -> Self {
        Expr::Pow {
            base: Box::new(base),
            exponent,
        }
    }

    pub fn apply(func: FuncKind, arg: Expr) -> Self {
        Expr::Apply {
            func,
            arg: Box::new(arg),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const { value } => Some(*value),
            _ => None,
        }
    }

    pub fn eval(&self, bindings: &VarBindings) -> Result<f64> {
        self.eval_with(&|name| bindings.get(name).copied())
    }

    /// Evaluate with an arbitrary variable lookup. Children are evaluated
    /// before parents, left to right.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        Ok(match self {
            Expr::Const { value } => *value,
            Expr::Var { name } => {
                lookup(name).ok_or_else(|| EqlError::UnboundVariable(name.clone()))?
            }
            Expr::Sum { terms } => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval_with(lookup)?;
                }
                acc
            }
            Expr::Prod { factors } => {
                let mut acc = 1.0;
                for f in factors {
                    acc *= f.eval_with(lookup)?;
                }
                acc
            }
            Expr::Pow { base, exponent } => base.eval_with(lookup)?.powi(*exponent as i32),
            Expr::Apply { func, arg } => {
                if func.is_binary() {
                    return Err(EqlError::Contract(format!(
                        "`{func}` cannot be applied to a single argument"
                    )));
                }
                unary_unchecked(*func, arg.eval_with(lookup)?).0
            }
        })
    }

    /// `(node_count, term_count)`; `term_count` is the number of top-level
    /// summands (1 for anything that is not a sum).
    pub fn complexity(&self) -> (usize, usize) {
        let terms = match self {
            Expr::Sum { terms } => terms.len(),
            _ => 1,
        };
        (self.node_count(), terms)
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Const { .. } | Expr::Var { .. } => 0,
            Expr::Sum { terms: xs } | Expr::Prod { factors: xs } => {
                xs.iter().map(Expr::node_count).sum()
            }
            Expr::Pow { base, .. } => base.node_count(),
            Expr::Apply { arg, .. } => arg.node_count(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Var { name } = e {
                out.insert(name.clone());
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const { .. } | Expr::Var { .. } => {}
            Expr::Sum { terms: xs } | Expr::Prod { factors: xs } => {
                xs.iter().for_each(|x| x.visit(f));
            }
            Expr::Pow { base, .. } => base.visit(f),
            Expr::Apply { arg, .. } => arg.visit(f),
        }
    }

    /// Bottom-up rewrite.
    pub fn map(&self, f: &dyn Fn(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Const { .. } | Expr::Var { .. } => self.clone(),
            Expr::Sum { terms } => Expr::sum(terms.iter().map(|t| t.map(f)).collect()),
            Expr::Prod { factors } => Expr::prod(factors.iter().map(|t| t.map(f)).collect()),
            Expr::Pow { base, exponent } => Expr::pow(base.map(f), *exponent),
            Expr::Apply { func, arg } => Expr::apply(*func, arg.map(f)),
        };
        f(rebuilt)
    }

    /// Replace every occurrence of variable `name` by `with`.
    pub fn substitute(&self, name: &str, with: &Expr) -> Expr {
        self.map(&|e| match e {
            Expr::Var { name: n } if n == name => with.clone(),
            other => other,
        })
    }

    pub fn rename_vars(&self, renames: &HashMap<String, String>) -> Expr {
        self.map(&|e| match e {
            Expr::Var { name } => Expr::Var {
                name: renames.get(&name).cloned().unwrap_or(name),
            },
            other => other,
        })
    }

    pub fn format(&self, decimals: usize, style: Style) -> String {
        format::format(self, decimals, style)
    }

    /// Shortest round-trip text form, reparsable by [`parse`].
    pub fn to_machine_string(&self) -> String {
        self.format(17, Style::Machine)
    }

    /// Resolve variables to positions in `var_names` for repeated evaluation.
    pub fn compile(&self, var_names: &[String]) -> Result<CompiledExpr> {
        let index: HashMap<&str, usize> = var_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut ops = Vec::new();
        compile_into(self, &index, &mut ops)?;
        Ok(CompiledExpr {
            ops,
            arity: var_names.len(),
        })
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Var(usize),
    Sum(usize),
    Prod(usize),
    Pow(i32),
    Apply(FuncKind),
}

/// Postfix program for fast evaluation on positional inputs.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    arity: usize,
}

fn compile_into(e: &Expr, index: &HashMap<&str, usize>, ops: &mut Vec<Op>) -> Result<()> {
    match e {
        Expr::Const { value } => ops.push(Op::Const(*value)),
        Expr::Var { name } => ops.push(Op::Var(
            *index
                .get(name.as_str())
                .ok_or_else(|| EqlError::UnboundVariable(name.clone()))?,
        )),
        Expr::Sum { terms } => {
            for t in terms {
                compile_into(t, index, ops)?;
            }
            ops.push(Op::Sum(terms.len()));
        }
        Expr::Prod { factors } => {
            for t in factors {
                compile_into(t, index, ops)?;
            }
            ops.push(Op::Prod(factors.len()));
        }
        Expr::Pow { base, exponent } => {
            compile_into(base, index, ops)?;
            ops.push(Op::Pow(*exponent as i32));
        }
        Expr::Apply { func, arg } => {
            if func.is_binary() {
                return Err(EqlError::Contract(format!(
                    "`{func}` cannot be applied to a single argument"
                )));
            }
            compile_into(arg, index, ops)?;
            ops.push(Op::Apply(*func));
        }
    }
    Ok(())
}

impl CompiledExpr {
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates with the same operation order as [`Expr::eval`].
    pub fn eval(&self, x: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Var(i) => stack.push(x[i]),
                Op::Sum(n) => {
                    let start = stack.len() - n;
                    let mut acc = 0.0;
                    for v in &stack[start..] {
                        acc += v;
                    }
                    stack.truncate(start);
                    stack.push(acc);
                }
                Op::Prod(n) => {
                    let start = stack.len() - n;
                    let mut acc = 1.0;
                    for v in &stack[start..] {
                        acc *= v;
                    }
                    stack.truncate(start);
                    stack.push(acc);
                }
                Op::Pow(k) => {
                    let v = stack.pop().expect("operand");
                    stack.push(v.powi(k));
                }
                Op::Apply(kind) => {
                    let v = stack.pop().expect("operand");
                    stack.push(unary_unchecked(kind, v).0);
                }
            }
        }
        stack.pop().expect("result")
    }
}
