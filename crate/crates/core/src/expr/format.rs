use super::Expr;
use crate::funcset::FuncKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Shortest round-trip constants; reparsable.
    Machine,
    /// Rounded constants, sigmoids written as `1/(1 + exp(-u))`.
    Pretty,
}

pub(crate) fn format(e: &Expr, decimals: usize, style: Style) -> String {
    let f = Formatter {
        decimals: decimals.clamp(1, 17),
        style,
    };
    f.expr(e)
}

struct Formatter {
    decimals: usize,
    style: Style,
}

/// Negation that folds into a leading coefficient when there is one.
pub(crate) fn negate(e: &Expr) -> Expr {
    match e {
        Expr::Const { value } => Expr::constant(-value),
        Expr::Prod { factors } => match factors.split_first() {
            Some((Expr::Const { value }, rest)) => {
                let mut fs = vec![Expr::constant(-value)];
                fs.extend(rest.iter().cloned());
                Expr::prod(fs)
            }
            _ => {
                let mut fs = vec![Expr::constant(-1.0)];
                fs.extend(factors.iter().cloned());
                Expr::prod(fs)
            }
        },
        Expr::Sum { terms } => Expr::sum(terms.iter().map(negate).collect()),
        other => Expr::prod(vec![Expr::constant(-1.0), other.clone()]),
    }
}

impl Formatter {
    fn number(&self, v: f64) -> String {
        match self.style {
            Style::Machine => format!("{v:?}"),
            Style::Pretty => {
                let s = format!("{:.*}", self.decimals, v);
                // "-0.00" reads as noise
                if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
                    s[1..].to_string()
                } else {
                    s
                }
            }
        }
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Sum { terms } => {
                let mut out = String::new();
                for (i, t) in terms.iter().enumerate() {
                    let s = match t {
                        Expr::Sum { .. } => format!("({})", self.expr(t)),
                        _ => self.expr(t),
                    };
                    if i == 0 {
                        out.push_str(&s);
                    } else if let Some(rest) = s.strip_prefix('-') {
                        out.push_str(" - ");
                        out.push_str(rest);
                    } else {
                        out.push_str(" + ");
                        out.push_str(&s);
                    }
                }
                out
            }
            _ => self.term(e),
        }
    }

    fn term(&self, e: &Expr) -> String {
        match e {
            Expr::Prod { factors } => {
                let sigmoid_args: Vec<&Expr> = if self.style == Style::Pretty {
                    factors
                        .iter()
                        .filter_map(|f| match f {
                            Expr::Apply {
                                func: FuncKind::Sigmoid,
                                arg,
                            } => Some(arg.as_ref()),
                            _ => None,
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let numer: Vec<String> = factors
                    .iter()
                    .filter(|f| {
                        sigmoid_args.is_empty()
                            || !matches!(
                                f,
                                Expr::Apply {
                                    func: FuncKind::Sigmoid,
                                    ..
                                }
                            )
                    })
                    .map(|f| match f {
                        Expr::Sum { .. } | Expr::Prod { .. } => format!("({})", self.expr(f)),
                        _ => self.factor(f),
                    })
                    .collect();
                if sigmoid_args.is_empty() {
                    return numer.join("*");
                }
                let numer = if numer.is_empty() {
                    "1".to_string()
                } else {
                    numer.join("*")
                };
                let denoms: Vec<String> = sigmoid_args.iter().map(|a| self.logistic_denom(a)).collect();
                if denoms.len() == 1 {
                    format!("{numer}/({})", denoms[0])
                } else {
                    let wrapped: Vec<String> = denoms.iter().map(|d| format!("({d})")).collect();
                    format!("{numer}/({})", wrapped.join("*"))
                }
            }
            _ => self.factor(e),
        }
    }

    fn logistic_denom(&self, arg: &Expr) -> String {
        format!("1 + exp({})", self.expr(&negate(arg)))
    }

    fn factor(&self, e: &Expr) -> String {
        match e {
            Expr::Const { value } => self.number(*value),
            Expr::Var { name } => name.clone(),
            Expr::Sum { .. } | Expr::Prod { .. } => format!("({})", self.expr(e)),
            Expr::Pow { base, exponent } => {
                let b = match base.as_ref() {
                    Expr::Var { .. } => self.factor(base),
                    Expr::Const { value } if *value >= 0.0 => self.factor(base),
                    Expr::Apply { func, .. }
                        if !matches!(func, FuncKind::Sigmoid | FuncKind::Identity | FuncKind::Square)
                            || (*func == FuncKind::Sigmoid && self.style == Style::Machine) =>
                    {
                        self.factor(base)
                    }
                    _ => format!("({})", self.strip_parens(base)),
                };
                format!("{b}^{exponent}")
            }
            Expr::Apply { func, arg } => {
                let a = self.expr(arg);
                match func {
                    FuncKind::Constant => "1".to_string(),
                    FuncKind::Identity => format!("({a})"),
                    FuncKind::Square => format!("({a})^2"),
                    FuncKind::Sine => format!("sin({a})"),
                    FuncKind::Cosine => format!("cos({a})"),
                    FuncKind::Sigmoid => match self.style {
                        Style::Machine => format!("sig({a})"),
                        Style::Pretty => format!("1/({})", self.logistic_denom(arg)),
                    },
                    // not representable in a single-argument call
                    FuncKind::Product => format!("product({a})"),
                }
            }
        }
    }

    fn strip_parens(&self, e: &Expr) -> String {
        match e {
            Expr::Sum { .. } | Expr::Prod { .. } => self.expr(e),
            _ => self.factor(e),
        }
    }
}
