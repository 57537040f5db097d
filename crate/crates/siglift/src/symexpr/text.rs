//! Textual constraint format: prefix s-expressions, one constraint per
//! line. `;` starts a comment.
//!
//! ```text
//! (= (var file 0) (const 8 0x41))
//! (not (ult (bvxor (var f 0) (const 8 0x10)) (const 8 0x20)))
//! ```
//!
//! Expressions: `(const <width> <value>)`, `(var <region> <index>)`,
//! `(bvnot e)`, `(bvadd|bvsub|bvmul|bvand|bvor|bvxor|bvshl|bvlshr a b)`,
//! `(extract <lo> <width> e)`, `(concat hi lo)`.
//! Constraints: `true`, `false`, `(=|ne|ult|ule a b)`, `(not c)`,
//! `(and a b)`, `(or a b)`.

use thiserror::Error;

use super::{BinOp, BoolExpr, CmpOp, Expr, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintParseError {
    #[error("constraint parse error (line {line}): {msg}")]
    Bad { line: usize, msg: String },
}

fn bad(line: usize, msg: impl Into<String>) -> ConstraintParseError {
    ConstraintParseError::Bad { line, msg: msg.into() }
}

pub fn write_expr(e: &Expr) -> String {
    match e {
        Expr::Const { width, value } => format!("(const {width} 0x{value:x})"),
        Expr::Var(Var { region, index }) => format!("(var {region} {index})"),
        Expr::Not(a) => format!("(bvnot {})", write_expr(a)),
        Expr::Bin { op, lhs, rhs } => {
            format!("({} {} {})", op.name(), write_expr(lhs), write_expr(rhs))
        }
        Expr::Extract { lo, width, arg } => {
            format!("(extract {lo} {width} {})", write_expr(arg))
        }
        Expr::Concat { hi, lo } => format!("(concat {} {})", write_expr(hi), write_expr(lo)),
    }
}

pub fn write_bool(b: &BoolExpr) -> String {
    match b {
        BoolExpr::Lit(v) => if *v { "true" } else { "false" }.to_string(),
        BoolExpr::Cmp { op, lhs, rhs } => {
            format!("({} {} {})", op.name(), write_expr(lhs), write_expr(rhs))
        }
        BoolExpr::Not(x) => format!("(not {})", write_bool(x)),
        BoolExpr::And(x, y) => format!("(and {} {})", write_bool(x), write_bool(y)),
        BoolExpr::Or(x, y) => format!("(or {} {})", write_bool(x), write_bool(y)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

struct Lexer<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Option<&'a str> {
        let rest = self.rest.trim_start();
        self.rest = rest;
        if rest.is_empty() {
            return None;
        }
        if rest.starts_with('(') || rest.starts_with(')') {
            let (tok, tail) = rest.split_at(1);
            self.rest = tail;
            return Some(tok);
        }
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
            .unwrap_or(rest.len());
        let (tok, tail) = rest.split_at(end);
        self.rest = tail;
        Some(tok)
    }
}

fn parse_sexp(lex: &mut Lexer<'_>) -> Result<Sexp, ConstraintParseError> {
    let line = lex.line;
    match lex.next_token() {
        None => Err(bad(line, "unexpected end of line")),
        Some("(") => {
            let mut items = Vec::new();
            loop {
                let rest = lex.rest.trim_start();
                if let Some(tail) = rest.strip_prefix(')') {
                    lex.rest = tail;
                    return Ok(Sexp::List(items));
                }
                if rest.is_empty() {
                    return Err(bad(line, "missing ')'"));
                }
                items.push(parse_sexp(lex)?);
            }
        }
        Some(")") => Err(bad(line, "unexpected ')'")),
        Some(atom) => Ok(Sexp::Atom(atom.to_string())),
    }
}

fn parse_number(s: &str, line: usize) -> Result<u32, ConstraintParseError> {
    let v = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u32::from_str_radix(h, 16)
    } else {
        s.parse()
    };
    v.map_err(|_| bad(line, format!("bad number '{s}'")))
}

fn expr_from_sexp(s: &Sexp, line: usize) -> Result<Expr, ConstraintParseError> {
    let Sexp::List(items) = s else {
        return Err(bad(line, "expected an expression list"));
    };
    let head = match items.first() {
        Some(Sexp::Atom(a)) => a.as_str(),
        _ => return Err(bad(line, "expected an operator atom")),
    };
    let argn = items.len() - 1;
    let arg = |i: usize| &items[i + 1];
    let want = |n: usize| -> Result<(), ConstraintParseError> {
        if argn == n {
            Ok(())
        } else {
            Err(bad(line, format!("'{head}' takes {n} argument(s), got {argn}")))
        }
    };
    let atom = |i: usize| -> Result<&str, ConstraintParseError> {
        match arg(i) {
            Sexp::Atom(a) => Ok(a.as_str()),
            _ => Err(bad(line, format!("'{head}' expects an atom argument"))),
        }
    };

    let bin = |op: BinOp| -> Result<Expr, ConstraintParseError> {
        want(2)?;
        let l = expr_from_sexp(arg(0), line)?;
        let r = expr_from_sexp(arg(1), line)?;
        if l.width() != r.width() {
            return Err(bad(line, format!("width mismatch in '{head}'")));
        }
        Ok(Expr::bin(op, l, r))
    };

    match head {
        "const" => {
            want(2)?;
            let width = parse_number(atom(0)?, line)?;
            let value = parse_number(atom(1)?, line)?;
            if !super::valid_width(width as u8) || width > 32 {
                return Err(bad(line, format!("invalid width {width}")));
            }
            Ok(Expr::constant(width as u8, value))
        }
        "var" => {
            want(2)?;
            let region = atom(0)?.to_string();
            let index = parse_number(atom(1)?, line)?;
            Ok(Expr::var(Var::new(region, index)))
        }
        "bvnot" => {
            want(1)?;
            Ok(Expr::not(expr_from_sexp(arg(0), line)?))
        }
        "bvadd" => bin(BinOp::Add),
        "bvsub" => bin(BinOp::Sub),
        "bvmul" => bin(BinOp::Mul),
        "bvand" => bin(BinOp::And),
        "bvor" => bin(BinOp::Or),
        "bvxor" => bin(BinOp::Xor),
        "bvshl" => bin(BinOp::Shl),
        "bvlshr" => bin(BinOp::Shr),
        "extract" => {
            want(3)?;
            let lo = parse_number(atom(0)?, line)?;
            let width = parse_number(atom(1)?, line)?;
            let a = expr_from_sexp(arg(2), line)?;
            if !super::valid_width(width as u8) || lo + width > a.width() as u32 {
                return Err(bad(line, "invalid extract range"));
            }
            Ok(Expr::extract(lo as u8, width as u8, a))
        }
        "concat" => {
            want(2)?;
            let hi = expr_from_sexp(arg(0), line)?;
            let lo = expr_from_sexp(arg(1), line)?;
            let w = hi.width() as u32 + lo.width() as u32;
            if w > 32 || !super::valid_width(w as u8) {
                return Err(bad(line, "invalid concat widths"));
            }
            Ok(Expr::concat(hi, lo))
        }
        other => Err(bad(line, format!("unknown expression operator '{other}'"))),
    }
}

fn bool_from_sexp(s: &Sexp, line: usize) -> Result<BoolExpr, ConstraintParseError> {
    match s {
        Sexp::Atom(a) if a == "true" => return Ok(BoolExpr::Lit(true)),
        Sexp::Atom(a) if a == "false" => return Ok(BoolExpr::Lit(false)),
        Sexp::Atom(a) => return Err(bad(line, format!("unknown constraint '{a}'"))),
        Sexp::List(_) => {}
    }
    let Sexp::List(items) = s else { unreachable!() };
    let head = match items.first() {
        Some(Sexp::Atom(a)) => a.as_str(),
        _ => return Err(bad(line, "expected an operator atom")),
    };
    let argn = items.len() - 1;
    let want = |n: usize| -> Result<(), ConstraintParseError> {
        if argn == n {
            Ok(())
        } else {
            Err(bad(line, format!("'{head}' takes {n} argument(s), got {argn}")))
        }
    };

    let cmp = |op: CmpOp| -> Result<BoolExpr, ConstraintParseError> {
        want(2)?;
        let l = expr_from_sexp(&items[1], line)?;
        let r = expr_from_sexp(&items[2], line)?;
        if l.width() != r.width() {
            return Err(bad(line, format!("width mismatch in '{head}'")));
        }
        Ok(BoolExpr::cmp(op, l, r))
    };

    match head {
        "=" => cmp(CmpOp::Eq),
        "ne" => cmp(CmpOp::Ne),
        "ult" => cmp(CmpOp::Ult),
        "ule" => cmp(CmpOp::Ule),
        "not" => {
            want(1)?;
            Ok(BoolExpr::Not(Box::new(bool_from_sexp(&items[1], line)?)))
        }
        "and" => {
            want(2)?;
            Ok(BoolExpr::and(bool_from_sexp(&items[1], line)?, bool_from_sexp(&items[2], line)?))
        }
        "or" => {
            want(2)?;
            Ok(BoolExpr::or(bool_from_sexp(&items[1], line)?, bool_from_sexp(&items[2], line)?))
        }
        other => Err(bad(line, format!("unknown constraint operator '{other}'"))),
    }
}

/// Parse a single constraint line.
pub fn parse_constraint(line_text: &str, line: usize) -> Result<BoolExpr, ConstraintParseError> {
    let mut lex = Lexer { rest: line_text, line };
    let sexp = parse_sexp(&mut lex)?;
    if lex.next_token().is_some() {
        return Err(bad(line, "trailing tokens after constraint"));
    }
    bool_from_sexp(&sexp, line)
}

/// Parse a constraint file: one constraint per line, `;` comments.
pub fn parse_constraints(text: &str) -> Result<Vec<BoolExpr>, ConstraintParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_constraint(line, i + 1)?);
    }
    Ok(out)
}
