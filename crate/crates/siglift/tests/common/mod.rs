//! Shared helpers for randomized suites: expression and constraint-set
//! generators plus the brute-force enumeration oracle.

use rand::rngs::StdRng;
use rand::Rng;

use siglift::symexpr::{Assignment, BinOp, BoolExpr, CmpOp, Expr, Var};

pub fn var(i: u32) -> Var {
    Var::new("f", i)
}

/// Random width-8 expression over `n_vars` file bytes.
pub fn random_expr8(rng: &mut StdRng, n_vars: u32, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return if rng.gen_bool(0.6) {
            Expr::var(var(rng.gen_range(0..n_vars)))
        } else {
            Expr::constant(8, rng.gen_range(0..=255))
        };
    }
    match rng.gen_range(0..10) {
        0 => Expr::not(random_expr8(rng, n_vars, depth - 1)),
        1..=8 => {
            let op = [
                BinOp::Add,
                BinOp::Sub,
                BinOp::Mul,
                BinOp::And,
                BinOp::Or,
                BinOp::Xor,
                BinOp::Shl,
                BinOp::Shr,
            ][rng.gen_range(0..8)];
            Expr::bin(
                op,
                random_expr8(rng, n_vars, depth - 1),
                random_expr8(rng, n_vars, depth - 1),
            )
        }
        _ => {
            // Round-trip through a wider value.
            let lo = random_expr8(rng, n_vars, depth - 1);
            let hi = random_expr8(rng, n_vars, depth - 1);
            Expr::extract(
                if rng.gen_bool(0.5) { 0 } else { 8 },
                8,
                Expr::concat(hi, lo),
            )
        }
    }
}

/// One random constraint over width-8 expressions.
pub fn random_constraint(rng: &mut StdRng, n_vars: u32) -> BoolExpr {
    let op = [CmpOp::Eq, CmpOp::Ne, CmpOp::Ult, CmpOp::Ule][rng.gen_range(0..4)];
    let lhs = random_expr8(rng, n_vars, 2);
    let rhs = if rng.gen_bool(0.7) {
        Expr::constant(8, rng.gen_range(0..=255))
    } else {
        random_expr8(rng, n_vars, 1)
    };
    let cmp = BoolExpr::cmp(op, lhs, rhs);
    match rng.gen_range(0..4) {
        0 => BoolExpr::Not(Box::new(cmp)),
        1 => BoolExpr::or(cmp, random_simple(rng, n_vars)),
        _ => cmp,
    }
}

fn random_simple(rng: &mut StdRng, n_vars: u32) -> BoolExpr {
    BoolExpr::cmp(
        [CmpOp::Eq, CmpOp::Ne][rng.gen_range(0..2)],
        Expr::var(var(rng.gen_range(0..n_vars))),
        Expr::constant(8, rng.gen_range(0..=255)),
    )
}

/// A constraint adjusted to hold under `planted`.
pub fn constraint_true_under(
    rng: &mut StdRng,
    n_vars: u32,
    planted: &Assignment,
) -> BoolExpr {
    loop {
        let c = random_constraint(rng, n_vars);
        match c.eval(planted) {
            Ok(true) => return c,
            Ok(false) => {
                let n = c.negate();
                if n.eval(planted) == Ok(true) {
                    return n;
                }
            }
            Err(_) => unreachable!("generator only uses existing variables"),
        }
    }
}

/// A random constraint set; when `plant` is set the whole set is made
/// satisfiable by construction (by that very assignment).
pub fn random_constraint_set(
    rng: &mut StdRng,
    n_vars: u32,
    n_constraints: usize,
    plant: Option<&Assignment>,
) -> Vec<BoolExpr> {
    (0..n_constraints)
        .map(|_| match plant {
            Some(a) => constraint_true_under(rng, n_vars, a),
            None => random_constraint(rng, n_vars),
        })
        .collect()
}

pub fn random_assignment(rng: &mut StdRng, n_vars: u32) -> Assignment {
    let mut a = Assignment::new();
    for i in 0..n_vars {
        a.insert(var(i), rng.gen());
    }
    a
}

/// Exhaustive 256^n enumeration in ascending (f0, f1, ..) order. Returns
/// the first satisfying assignment or `None`.
pub fn brute_force(constraints: &[BoolExpr], n_vars: u32) -> Option<Assignment> {
    assert!((1..=3).contains(&n_vars));
    let mut a = Assignment::new();
    for i in 0..n_vars {
        a.insert(var(i), 0);
    }
    let total: u64 = 1u64 << (8 * n_vars);
    let vars: Vec<Var> = (0..n_vars).map(var).collect();
    for x in 0..total {
        for (i, v) in vars.iter().enumerate() {
            *a.get_mut(v).unwrap() = (x >> (8 * (n_vars as usize - 1 - i))) as u8;
        }
        if constraints.iter().all(|c| c.eval(&a) == Ok(true)) {
            return Some(a);
        }
    }
    None
}
