//! Bottom-up normalisation: constant folding, flattening, like-term merging
//! and coefficient pruning.
//!
//! Every constructor here assumes normalised children and returns a
//! normalised node, so one bottom-up pass reaches the fixed point. Rewrites
//! that can enlarge the tree (distributing a coefficient over a sum, a power
//! over a product) are only taken when the node count does not grow.

use std::collections::HashMap;

use super::format::{format, Style};
use super::Expr;
use crate::funcset::{unary_unchecked, FuncKind};

/// Simplify `e`, dropping sum/product terms whose folded coefficient has
/// magnitude below `prune_tol`. With `prune_tol = 0` only exact zeros go.
pub fn simplify(e: &Expr, prune_tol: f64) -> Expr {
    assert!(prune_tol >= 0.0, "prune_tol must be non-negative");
    Simplifier { tol: prune_tol }.run(e)
}

struct Simplifier {
    tol: f64,
}

fn key(e: &Expr) -> String {
    format(e, 17, Style::Machine)
}

impl Simplifier {
    fn negligible(&self, c: f64) -> bool {
        c == 0.0 || c.abs() < self.tol
    }

    fn run(&self, e: &Expr) -> Expr {
        match e {
            Expr::Const { .. } | Expr::Var { .. } => e.clone(),
            Expr::Sum { terms } => self.sum(terms.iter().map(|t| self.run(t)).collect()),
            Expr::Prod { factors } => self.prod(factors.iter().map(|f| self.run(f)).collect()),
            Expr::Pow { base, exponent } => self.pow(self.run(base), *exponent),
            Expr::Apply { func, arg } => self.apply(*func, self.run(arg)),
        }
    }

    fn apply(&self, func: FuncKind, arg: Expr) -> Expr {
        match func {
            FuncKind::Constant => Expr::constant(1.0),
            FuncKind::Identity => arg,
            FuncKind::Square => self.pow(arg, 2),
            FuncKind::Product => Expr::apply(func, arg),
            _ => match arg.as_const() {
                Some(c) => Expr::constant(unary_unchecked(func, c).0),
                None => Expr::apply(func, arg),
            },
        }
    }

    fn pow(&self, base: Expr, n: u32) -> Expr {
        match (base, n) {
            (_, 0) => Expr::constant(1.0),
            (b, 1) => b,
            (Expr::Const { value }, n) => Expr::constant(value.powi(n as i32)),
            (Expr::Pow { base, exponent }, n) => self.pow(*base, exponent * n),
            (Expr::Prod { factors }, n) => {
                // each non-power, non-constant factor needs a new Pow node
                let wrapped = factors
                    .iter()
                    .filter(|f| !matches!(f, Expr::Pow { .. } | Expr::Const { .. }))
                    .count();
                if wrapped <= 1 {
                    self.prod(factors.into_iter().map(|f| self.pow(f, n)).collect())
                } else {
                    Expr::pow(Expr::prod(factors), n)
                }
            }
            (b, n) => Expr::pow(b, n),
        }
    }

    fn prod(&self, factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        for f in factors {
            match f {
                Expr::Prod { factors } => flat.extend(factors),
                other => flat.push(other),
            }
        }

        let mut coef = 1.0;
        // base key -> (base, exponent), first-seen order
        let mut groups: Vec<(String, Expr, u32)> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        for f in flat {
            let (base, n) = match f {
                Expr::Const { value } => {
                    coef *= value;
                    continue;
                }
                Expr::Pow { base, exponent } => (*base, exponent),
                other => (other, 1),
            };
            let k = key(&base);
            match slot.get(&k) {
                Some(&i) => groups[i].2 += n,
                None => {
                    slot.insert(k.clone(), groups.len());
                    groups.push((k, base, n));
                }
            }
        }

        if self.negligible(coef) {
            return Expr::constant(0.0);
        }

        let merged = groups.iter().any(|g| g.2 > 1);
        let mut rest: Vec<Expr> = groups
            .into_iter()
            .map(|(_, base, n)| if n == 1 { base } else { self.pow(base, n) })
            .collect();
        // merging exponents can expose constants or products again
        if merged
            && rest
                .iter()
                .any(|f| matches!(f, Expr::Const { .. } | Expr::Prod { .. }))
        {
            let mut again = vec![Expr::constant(coef)];
            again.extend(rest);
            return self.prod(again);
        }
        rest.sort_by_cached_key(key);

        match rest.len() {
            0 => Expr::constant(coef),
            1 if coef == 1.0 => rest.pop().expect("one factor"),
            1 => {
                if let Expr::Sum { terms } = &rest[0] {
                    let distributed = self.sum(
                        terms
                            .iter()
                            .map(|t| self.prod(vec![Expr::constant(coef), t.clone()]))
                            .collect(),
                    );
                    // Prod node + Const node + the sum
                    if distributed.node_count() <= 2 + rest[0].node_count() {
                        return distributed;
                    }
                }
                Expr::prod(vec![Expr::constant(coef), rest.pop().expect("one factor")])
            }
            _ => {
                if coef != 1.0 {
                    rest.insert(0, Expr::constant(coef));
                }
                Expr::prod(rest)
            }
        }
    }

    fn scaled(&self, c: f64, mono: Expr) -> Expr {
        if c == 1.0 {
            mono
        } else {
            self.prod(vec![Expr::constant(c), mono])
        }
    }

    fn sum(&self, terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                Expr::Sum { terms } => flat.extend(terms),
                other => flat.push(other),
            }
        }

        let mut constant = 0.0;
        // key -> (summed coefficient, monomial, per-term coefficients)
        let mut groups: Vec<(String, f64, Expr, Vec<f64>)> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        for t in flat {
            let (c, mono) = match t {
                Expr::Const { value } => {
                    constant += value;
                    continue;
                }
                Expr::Prod { mut factors } => match factors.first() {
                    Some(Expr::Const { value }) => {
                        let c = *value;
                        factors.remove(0);
                        let mono = if factors.len() == 1 {
                            factors.pop().expect("one factor")
                        } else {
                            Expr::prod(factors)
                        };
                        (c, mono)
                    }
                    _ => (1.0, Expr::prod(factors)),
                },
                other => (1.0, other),
            };
            let k = key(&mono);
            match slot.get(&k) {
                Some(&i) => {
                    groups[i].1 += c;
                    groups[i].3.push(c);
                }
                None => {
                    slot.insert(k.clone(), groups.len());
                    groups.push((k, c, mono, vec![c]));
                }
            }
        }

        groups.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<Expr> = Vec::with_capacity(groups.len() + 1);
        let mut reflatten = false;
        let mut push = |term: Expr, out: &mut Vec<Expr>, constant: &mut f64| match term {
            Expr::Sum { terms } => {
                reflatten = true;
                out.extend(terms);
            }
            Expr::Const { value } => *constant += value,
            other => out.push(other),
        };
        for (_, c, mono, parts) in groups {
            if self.negligible(c) {
                continue;
            }
            let merged = self.scaled(c, mono.clone());
            if parts.len() > 1 {
                // x + x -> 2*x adds a node; keep such groups apart
                let separate: Vec<Expr> = parts.iter().map(|p| self.scaled(*p, mono.clone())).collect();
                let cost: usize = separate.iter().map(Expr::node_count).sum();
                if merged.node_count() > cost {
                    for t in separate {
                        push(t, &mut out, &mut constant);
                    }
                    continue;
                }
            }
            push(merged, &mut out, &mut constant);
        }
        if reflatten {
            out.push(Expr::constant(constant));
            return self.sum(out);
        }
        if !self.negligible(constant) {
            out.push(Expr::constant(constant));
        }

        match out.len() {
            0 => Expr::constant(0.0),
            1 => out.pop().expect("one term"),
            _ => Expr::sum(out),
        }
    }
}
