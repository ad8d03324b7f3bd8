//! Recursive-descent parser for the human expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' UINT)*
//! primary := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//! ```
//!
//! Function names: `sin`, `cos`, `sig`.

use super::format::negate;
use super::Expr;
use crate::error::{EqlError, Result};
use crate::funcset::FuncKind;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integral: bool },
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    End,
}

fn syntax(offset: usize, message: impl Into<String>) -> EqlError {
    EqlError::Syntax {
        offset,
        message: message.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let mut end = i;
                let mut integral = true;
                let mut seen_exp = false;
                let bytes = src.as_bytes();
                while end < src.len() {
                    let b = bytes[end];
                    if b.is_ascii_digit() {
                        end += 1;
                    } else if b == b'.' && integral && !seen_exp {
                        integral = false;
                        end += 1;
                    } else if (b == b'e' || b == b'E') && !seen_exp {
                        let mut j = end + 1;
                        if j < src.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                            j += 1;
                        }
                        if j < src.len() && bytes[j].is_ascii_digit() {
                            seen_exp = true;
                            integral = false;
                            end = j;
                        } else {
                            break;
                        }
                    } else {
                        break;
                    }
                }
                let text = &src[i..end];
                let value: f64 = text
                    .parse()
                    .map_err(|_| syntax(i, format!("malformed number `{text}`")))?;
                while it.peek().is_some_and(|&(j, _)| j < end) {
                    it.next();
                }
                out.push((i, Tok::Num { value, integral }));
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut name = String::new();
                while let Some(&(_, c)) = it.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        name.push(c);
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push((i, Tok::Ident(name)));
                continue;
            }
            other => return Err(syntax(i, format!("unexpected character `{other}`"))),
        };
        it.next();
        out.push((i, tok));
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    terms.push(self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    let t = self.term()?;
                    terms.push(negate(&t));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().expect("one term")
        } else {
            Expr::sum(terms)
        })
    }

    fn term(&mut self) -> Result<Expr> {
        let mut factors = vec![self.unary()?];
        while *self.peek() == Tok::Star {
            self.bump();
            factors.push(self.unary()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().expect("one factor")
        } else {
            Expr::prod(factors)
        })
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(negate(&inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let at = self.offset();
            match self.bump() {
                Tok::Num {
                    value,
                    integral: true,
                } if value >= 1.0 && value <= u32::MAX as f64 => {
                    base = Expr::pow(base, value as u32);
                }
                _ => return Err(syntax(at, "exponent must be a positive integer")),
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.bump() {
            Tok::Num { value, .. } => Ok(Expr::constant(value)),
            Tok::Ident(name) => {
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::var(name));
                }
                let func = match name.as_str() {
                    "sin" => FuncKind::Sine,
                    "cos" => FuncKind::Cosine,
                    "sig" => FuncKind::Sigmoid,
                    _ => return Err(EqlError::UnknownFunction { name, offset: at }),
                };
                self.bump();
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::apply(func, arg))
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::End => Err(syntax(at, "unexpected end of input")),
            other => Err(syntax(at, format!("unexpected token {other:?}"))),
        }
    }
}

/// Parse an expression with the usual precedence (`^` > unary `-` > `*` > `+ -`).
pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(syntax(p.offset(), "trailing input"));
    }
    Ok(e)
}
