//! Symbolic expressions over input bytes, boolean constraints, and path
//! conditions.
//!
//! Expressions are immutable trees with structural equality; shared
//! subterms are reference-counted and never observable. Every value is a
//! fixed-width bitvector, width 1, 8, 16, or 32. Variables are always
//! single input bytes (width 8); wider values are built with `concat`.

mod text;

pub use text::{parse_constraint, parse_constraints, ConstraintParseError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::isa::Pc;

pub type Width = u8;

pub fn valid_width(w: Width) -> bool {
    matches!(w, 1 | 8 | 16 | 32)
}

fn mask(width: Width) -> u32 {
    if width == 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

/// One unknown input byte: `region[index]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub region: Arc<str>,
    pub index: u32,
}

impl Var {
    pub fn new(region: impl Into<Arc<str>>, index: u32) -> Var {
        Var { region: region.into(), index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.region, self.index)
    }
}

/// Concrete values for variables; total assignments map every free
/// variable of the term being evaluated.
pub type Assignment = BTreeMap<Var, u8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "bvadd",
            BinOp::Sub => "bvsub",
            BinOp::Mul => "bvmul",
            BinOp::And => "bvand",
            BinOp::Or => "bvor",
            BinOp::Xor => "bvxor",
            BinOp::Shl => "bvshl",
            BinOp::Shr => "bvlshr",
        }
    }

    /// Semantics at `width` bits. The shift amount is masked to `[0,31]`.
    pub fn apply(self, width: Width, a: u32, b: u32) -> u32 {
        let m = mask(width);
        let r = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
            BinOp::Shl => a.wrapping_shl(b & 31),
            BinOp::Shr => a.wrapping_shr(b & 31),
        };
        r & m
    }
}

/// A bitvector expression node.
///
/// Build values through the constructor functions; they enforce the width
/// discipline and panic on violations, which are programming errors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const { width: Width, value: u32 },
    Var(Var),
    Not(Arc<Expr>),
    Bin { op: BinOp, lhs: Arc<Expr>, rhs: Arc<Expr> },
    Extract { lo: u8, width: Width, arg: Arc<Expr> },
    Concat { hi: Arc<Expr>, lo: Arc<Expr> },
}

impl Expr {
    pub fn constant(width: Width, value: u32) -> Expr {
        assert!(valid_width(width), "invalid width {width}");
        Expr::Const { width, value: value & mask(width) }
    }

    /// Variables are input bytes and always 8 bits wide.
    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    // Constructor, not the `Not` trait: it builds a node rather than
    // negating in place.
    #[allow(clippy::should_implement_trait)]
    pub fn not(arg: Expr) -> Expr {
        Expr::Not(Arc::new(arg))
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        assert_eq!(lhs.width(), rhs.width(), "operand width mismatch for {}", op.name());
        Expr::Bin { op, lhs: Arc::new(lhs), rhs: Arc::new(rhs) }
    }

    pub fn extract(lo: u8, width: Width, arg: Expr) -> Expr {
        assert!(valid_width(width), "invalid extract width {width}");
        assert!(
            (lo as u32) + (width as u32) <= arg.width() as u32,
            "extract [{lo}, {lo}+{width}) exceeds operand width {}",
            arg.width()
        );
        Expr::Extract { lo, width, arg: Arc::new(arg) }
    }

    pub fn concat(hi: Expr, lo: Expr) -> Expr {
        let w = hi.width() as u32 + lo.width() as u32;
        assert!(
            w <= 32 && valid_width(w as Width),
            "concat widths {} + {} do not form a valid width",
            hi.width(),
            lo.width()
        );
        Expr::Concat { hi: Arc::new(hi), lo: Arc::new(lo) }
    }

    pub fn width(&self) -> Width {
        match self {
            Expr::Const { width, .. } => *width,
            Expr::Var(_) => 8,
            Expr::Not(a) => a.width(),
            Expr::Bin { lhs, .. } => lhs.width(),
            Expr::Extract { width, .. } => *width,
            Expr::Concat { hi, lo } => hi.width() + lo.width(),
        }
    }

    pub fn as_const(&self) -> Option<u32> {
        match self {
            Expr::Const { value, .. } => Some(*value),
            _ => None,
        }
    }

    /// Zero-extend an 8-bit expression to 32 bits.
    pub fn zext8to32(byte: Expr) -> Expr {
        debug_assert_eq!(byte.width(), 8);
        Expr::concat(Expr::constant(16, 0), Expr::concat(Expr::constant(8, 0), byte))
    }

    pub fn eval(&self, a: &Assignment) -> Result<u32, EvalError> {
        Ok(match self {
            Expr::Const { value, .. } => *value,
            Expr::Var(v) => *a.get(v).ok_or_else(|| EvalError::MissingVar(v.clone()))? as u32,
            Expr::Not(arg) => !arg.eval(a)? & mask(self.width()),
            Expr::Bin { op, lhs, rhs } => op.apply(lhs.width(), lhs.eval(a)?, rhs.eval(a)?),
            Expr::Extract { lo, width, arg } => (arg.eval(a)? >> lo) & mask(*width),
            Expr::Concat { hi, lo } => {
                (hi.eval(a)? << lo.width()) | lo.eval(a)?
            }
        })
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const { .. } => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Not(a) => a.collect_vars(out),
            Expr::Bin { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Extract { arg, .. } => arg.collect_vars(out),
            Expr::Concat { hi, lo } => {
                hi.collect_vars(out);
                lo.collect_vars(out);
            }
        }
    }

    /// Constant folding plus local identity rules; preserves semantics.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const { .. } | Expr::Var(_) => self.clone(),
            Expr::Not(a) => {
                let a = a.simplify();
                match &a {
                    Expr::Const { width, value } => Expr::constant(*width, !value),
                    Expr::Not(inner) => (**inner).clone(),
                    _ => Expr::Not(Arc::new(a)),
                }
            }
            Expr::Bin { op, lhs, rhs } => {
                let l = lhs.simplify();
                let r = rhs.simplify();
                simplify_bin(*op, l, r)
            }
            Expr::Extract { lo, width, arg } => {
                let a = arg.simplify();
                simplify_extract(*lo, *width, a)
            }
            Expr::Concat { hi, lo } => {
                let h = hi.simplify();
                let l = lo.simplify();
                if let (Some(hv), Some(lv)) = (h.as_const(), l.as_const()) {
                    let w = h.width() + l.width();
                    Expr::constant(w, (hv << l.width()) | lv)
                } else {
                    Expr::Concat { hi: Arc::new(h), lo: Arc::new(l) }
                }
            }
        }
    }
}

fn simplify_bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    let width = l.width();
    if let (Some(a), Some(b)) = (l.as_const(), r.as_const()) {
        return Expr::constant(width, op.apply(width, a, b));
    }
    let m = mask(width);
    match (op, l.as_const(), r.as_const()) {
        (BinOp::Xor, _, _) if l == r => return Expr::constant(width, 0),
        (BinOp::Sub, _, _) if l == r => return Expr::constant(width, 0),
        (BinOp::And, Some(0), _) | (BinOp::And, _, Some(0)) => return Expr::constant(width, 0),
        (BinOp::And, Some(c), _) if c == m => return r,
        (BinOp::And, _, Some(c)) if c == m => return l,
        (BinOp::And, _, _) if l == r => return l,
        (BinOp::Or, Some(0), _) => return r,
        (BinOp::Or, _, Some(0)) => return l,
        (BinOp::Or, _, _) if l == r => return l,
        (BinOp::Xor, Some(0), _) => return r,
        (BinOp::Xor, _, Some(0)) => return l,
        (BinOp::Add, Some(0), _) => return r,
        (BinOp::Add, _, Some(0)) => return l,
        (BinOp::Sub, _, Some(0)) => return l,
        (BinOp::Mul, Some(0), _) | (BinOp::Mul, _, Some(0)) => return Expr::constant(width, 0),
        (BinOp::Mul, Some(1), _) => return r,
        (BinOp::Mul, _, Some(1)) => return l,
        (BinOp::Shl, _, Some(0)) | (BinOp::Shr, _, Some(0)) => return l,
        _ => {}
    }
    Expr::Bin { op, lhs: Arc::new(l), rhs: Arc::new(r) }
}

fn simplify_extract(lo: u8, width: Width, a: Expr) -> Expr {
    if let Some(v) = a.as_const() {
        return Expr::constant(width, (v >> lo) & mask(width));
    }
    if lo == 0 && width == a.width() {
        return a;
    }
    // Narrow into a concat when the slice lands entirely in one half.
    if let Expr::Concat { hi, lo: low } = &a {
        let lw = low.width();
        if lo + width <= lw {
            return simplify_extract(lo, width, (**low).clone());
        }
        if lo >= lw {
            return simplify_extract(lo - lw, width, (**hi).clone());
        }
    }
    Expr::Extract { lo, width, arg: Arc::new(a) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Ult,
    Ule,
}

impl CmpOp {
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "ne",
            CmpOp::Ult => "ult",
            CmpOp::Ule => "ule",
        }
    }

    pub fn apply(self, a: u32, b: u32) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ult => a < b,
            CmpOp::Ule => a <= b,
        }
    }
}

/// A boolean constraint over bitvector expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Lit(bool),
    Cmp { op: CmpOp, lhs: Expr, rhs: Expr },
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> BoolExpr {
        assert_eq!(lhs.width(), rhs.width(), "comparison width mismatch");
        BoolExpr::Cmp { op, lhs, rhs }
    }

    pub fn and(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::Or(Box::new(a), Box::new(b))
    }

    /// Structural negation: comparisons flip where an exact dual exists.
    pub fn negate(&self) -> BoolExpr {
        match self {
            BoolExpr::Lit(b) => BoolExpr::Lit(!b),
            BoolExpr::Not(inner) => (**inner).clone(),
            BoolExpr::Cmp { op: CmpOp::Eq, lhs, rhs } => {
                BoolExpr::Cmp { op: CmpOp::Ne, lhs: lhs.clone(), rhs: rhs.clone() }
            }
            BoolExpr::Cmp { op: CmpOp::Ne, lhs, rhs } => {
                BoolExpr::Cmp { op: CmpOp::Eq, lhs: lhs.clone(), rhs: rhs.clone() }
            }
            other => BoolExpr::Not(Box::new(other.clone())),
        }
    }

    pub fn eval(&self, a: &Assignment) -> Result<bool, EvalError> {
        Ok(match self {
            BoolExpr::Lit(b) => *b,
            BoolExpr::Cmp { op, lhs, rhs } => op.apply(lhs.eval(a)?, rhs.eval(a)?),
            BoolExpr::Not(x) => !x.eval(a)?,
            BoolExpr::And(x, y) => x.eval(a)? && y.eval(a)?,
            BoolExpr::Or(x, y) => x.eval(a)? || y.eval(a)?,
        })
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            BoolExpr::Lit(_) => {}
            BoolExpr::Cmp { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            BoolExpr::Not(x) => x.collect_vars(out),
            BoolExpr::And(x, y) | BoolExpr::Or(x, y) => {
                x.collect_vars(out);
                y.collect_vars(out);
            }
        }
    }

    pub fn simplify(&self) -> BoolExpr {
        match self {
            BoolExpr::Lit(_) => self.clone(),
            BoolExpr::Cmp { op, lhs, rhs } => {
                let l = lhs.simplify();
                let r = rhs.simplify();
                if let (Some(a), Some(b)) = (l.as_const(), r.as_const()) {
                    return BoolExpr::Lit(op.apply(a, b));
                }
                if l == r {
                    // x ? x is decided for every comparison we support.
                    return BoolExpr::Lit(match op {
                        CmpOp::Eq | CmpOp::Ule => true,
                        CmpOp::Ne | CmpOp::Ult => false,
                    });
                }
                BoolExpr::Cmp { op: *op, lhs: l, rhs: r }
            }
            BoolExpr::Not(x) => match x.simplify() {
                BoolExpr::Lit(b) => BoolExpr::Lit(!b),
                BoolExpr::Not(inner) => *inner,
                other => BoolExpr::Not(Box::new(other)),
            },
            BoolExpr::And(x, y) => match (x.simplify(), y.simplify()) {
                (BoolExpr::Lit(false), _) | (_, BoolExpr::Lit(false)) => BoolExpr::Lit(false),
                (BoolExpr::Lit(true), o) | (o, BoolExpr::Lit(true)) => o,
                (a, b) => BoolExpr::And(Box::new(a), Box::new(b)),
            },
            BoolExpr::Or(x, y) => match (x.simplify(), y.simplify()) {
                (BoolExpr::Lit(true), _) | (_, BoolExpr::Lit(true)) => BoolExpr::Lit(true),
                (BoolExpr::Lit(false), o) | (o, BoolExpr::Lit(false)) => o,
                (a, b) => BoolExpr::Or(Box::new(a), Box::new(b)),
            },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("assignment does not cover variable {0}")]
    MissingVar(Var),
}

/// Why a constraint entered the path condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Recorded at a conditional branch; negation candidates come from these.
    Branch,
    /// Pins a concretized symbolic address; keeps witness replay sound.
    AddressPin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    pub constraint: BoolExpr,
    pub site: Pc,
    pub taken: bool,
    pub kind: ConstraintKind,
    /// Position among the run's branch records; aligns a branch-kind entry
    /// with the trace even when other branches at the same site stayed
    /// concrete.
    pub ordinal: u32,
}

/// Ordered conjunction of the constraints a concrete path imposed on the
/// symbolic inputs, in branch execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathCondition {
    pub entries: Vec<PathEntry>,
}

impl PathCondition {
    pub fn new() -> PathCondition {
        PathCondition::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: PathEntry) {
        self.entries.push(entry);
    }

    pub fn constraints(&self) -> impl Iterator<Item = &BoolExpr> {
        self.entries.iter().map(|e| &e.constraint)
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for e in &self.entries {
            e.constraint.collect_vars(&mut out);
        }
        out
    }

    /// The module-level oracle: an assignment satisfies a path condition
    /// iff every member constraint evaluates true.
    pub fn satisfied_by(&self, a: &Assignment) -> Result<bool, EvalError> {
        for e in &self.entries {
            if !e.constraint.eval(a)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// One constraint per line in the textual format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&text::write_bool(&e.constraint));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&text::write_expr(self))
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&text::write_bool(self))
    }
}
