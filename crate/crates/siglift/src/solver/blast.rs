//! Tseitin bit-blasting of bitvector constraints to CNF.
//!
//! Input-byte variables get their CNF variables allocated first, most
//! significant bit first, in (region, byte index) order; the SAT core's
//! fixed decision order then makes witnesses prefer small byte values.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::sat::{Lit, Sat};
use crate::symexpr::{BinOp, BoolExpr, CmpOp, Expr, Var};

pub struct Blaster {
    clauses: Vec<Vec<Lit>>,
    num_vars: usize,
    /// Lanes per input byte, indexed by bit significance (lane[0] = LSB).
    input_bits: BTreeMap<Var, [Lit; 8]>,
    lit_true: Lit,
    expr_cache: HashMap<Expr, Vec<Lit>>,
    bool_cache: HashMap<BoolExpr, Lit>,
}

impl Blaster {
    /// Allocate input bits for `vars` up front, then the constant-true var.
    pub fn new(vars: &BTreeSet<Var>) -> Blaster {
        let mut b = Blaster {
            clauses: Vec::new(),
            num_vars: 0,
            input_bits: BTreeMap::new(),
            lit_true: Lit::pos(0),
            expr_cache: HashMap::new(),
            bool_cache: HashMap::new(),
        };
        for v in vars {
            let mut lanes = [Lit::pos(0); 8];
            for sig in (0..8).rev() {
                lanes[sig] = Lit::pos(b.fresh());
            }
            b.input_bits.insert(v.clone(), lanes);
        }
        let t = Lit::pos(b.fresh());
        b.clauses.push(vec![t]);
        b.lit_true = t;
        b
    }

    fn fresh(&mut self) -> usize {
        let v = self.num_vars;
        self.num_vars += 1;
        v
    }

    fn lit_false(&self) -> Lit {
        self.lit_true.negate()
    }

    fn const_lit(&self, v: bool) -> Lit {
        if v {
            self.lit_true
        } else {
            self.lit_false()
        }
    }

    fn is_true(&self, l: Lit) -> bool {
        l == self.lit_true
    }

    fn is_false(&self, l: Lit) -> bool {
        l == self.lit_false()
    }

    fn and2(&mut self, a: Lit, b: Lit) -> Lit {
        if self.is_false(a) || self.is_false(b) || a == b.negate() {
            return self.lit_false();
        }
        if self.is_true(a) {
            return b;
        }
        if self.is_true(b) || a == b {
            return a;
        }
        let y = Lit::pos(self.fresh());
        self.clauses.push(vec![y.negate(), a]);
        self.clauses.push(vec![y.negate(), b]);
        self.clauses.push(vec![y, a.negate(), b.negate()]);
        y
    }

    fn or2(&mut self, a: Lit, b: Lit) -> Lit {
        self.and2(a.negate(), b.negate()).negate()
    }

    fn xor2(&mut self, a: Lit, b: Lit) -> Lit {
        if self.is_false(a) {
            return b;
        }
        if self.is_false(b) {
            return a;
        }
        if self.is_true(a) {
            return b.negate();
        }
        if self.is_true(b) {
            return a.negate();
        }
        if a == b {
            return self.lit_false();
        }
        if a == b.negate() {
            return self.lit_true;
        }
        let y = Lit::pos(self.fresh());
        self.clauses.push(vec![y.negate(), a.negate(), b.negate()]);
        self.clauses.push(vec![y.negate(), a, b]);
        self.clauses.push(vec![y, a.negate(), b]);
        self.clauses.push(vec![y, a, b.negate()]);
        y
    }

    fn and_many(&mut self, lits: &[Lit]) -> Lit {
        let mut acc = self.lit_true;
        for &l in lits {
            acc = self.and2(acc, l);
        }
        acc
    }

    fn ite(&mut self, c: Lit, t: Lit, e: Lit) -> Lit {
        let a = self.and2(c, t);
        let b = self.and2(c.negate(), e);
        self.or2(a, b)
    }

    /// sum and carry-out of a full adder.
    fn full_adder(&mut self, a: Lit, b: Lit, cin: Lit) -> (Lit, Lit) {
        let axb = self.xor2(a, b);
        let sum = self.xor2(axb, cin);
        let ab = self.and2(a, b);
        let c_ab = self.and2(axb, cin);
        let cout = self.or2(ab, c_ab);
        (sum, cout)
    }

    fn add_lanes(&mut self, a: &[Lit], b: &[Lit], mut carry: Lit) -> Vec<Lit> {
        let mut out = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let (s, c) = self.full_adder(x, y, carry);
            out.push(s);
            carry = c;
        }
        out
    }

    /// Emit an expression as LSB-first lanes.
    pub fn emit_expr(&mut self, e: &Expr) -> Vec<Lit> {
        if let Some(cached) = self.expr_cache.get(e) {
            return cached.clone();
        }
        let lanes = match e {
            Expr::Const { width, value } => (0..*width)
                .map(|k| self.const_lit(value >> k & 1 == 1))
                .collect(),
            Expr::Var(v) => self
                .input_bits
                .get(v)
                .expect("variable not pre-allocated")
                .to_vec(),
            Expr::Not(a) => {
                let lanes = self.emit_expr(a);
                lanes.into_iter().map(Lit::negate).collect()
            }
            Expr::Bin { op, lhs, rhs } => {
                let a = self.emit_expr(lhs);
                let b = self.emit_expr(rhs);
                self.emit_bin(*op, &a, &b)
            }
            Expr::Extract { lo, width, arg } => {
                let lanes = self.emit_expr(arg);
                lanes[*lo as usize..(*lo + *width) as usize].to_vec()
            }
            Expr::Concat { hi, lo } => {
                let mut lanes = self.emit_expr(lo);
                lanes.extend(self.emit_expr(hi));
                lanes
            }
        };
        self.expr_cache.insert(e.clone(), lanes.clone());
        lanes
    }

    fn emit_bin(&mut self, op: BinOp, a: &[Lit], b: &[Lit]) -> Vec<Lit> {
        let w = a.len();
        match op {
            BinOp::And => a.iter().zip(b).map(|(&x, &y)| self.and2(x, y)).collect(),
            BinOp::Or => a.iter().zip(b).map(|(&x, &y)| self.or2(x, y)).collect(),
            BinOp::Xor => a.iter().zip(b).map(|(&x, &y)| self.xor2(x, y)).collect(),
            BinOp::Add => self.add_lanes(a, b, self.lit_false()),
            BinOp::Sub => {
                let nb: Vec<Lit> = b.iter().map(|l| l.negate()).collect();
                self.add_lanes(a, &nb, self.lit_true)
            }
            BinOp::Mul => {
                // Shift-and-add, dropping bits past the width.
                let mut acc: Vec<Lit> = vec![self.lit_false(); w];
                for k in 0..w {
                    let addend: Vec<Lit> = (0..w)
                        .map(|i| {
                            if i < k {
                                self.lit_false()
                            } else {
                                self.and2(a[i - k], b[k])
                            }
                        })
                        .collect();
                    acc = self.add_lanes(&acc, &addend, self.lit_false());
                }
                acc
            }
            BinOp::Shl | BinOp::Shr => {
                // Barrel shifter over the five amount bits that survive the
                // mask-to-[0,31] rule.
                let mut lanes = a.to_vec();
                for stage in 0..5 {
                    let Some(&bit) = b.get(stage) else { break };
                    let dist = 1usize << stage;
                    let shifted: Vec<Lit> = (0..w)
                        .map(|i| {
                            let from = if op == BinOp::Shl {
                                i.checked_sub(dist)
                            } else {
                                Some(i + dist).filter(|&j| j < w)
                            };
                            from.map(|j| lanes[j]).unwrap_or(self.lit_false())
                        })
                        .collect();
                    lanes = lanes
                        .iter()
                        .zip(&shifted)
                        .map(|(&keep, &shift)| self.ite(bit, shift, keep))
                        .collect();
                }
                lanes
            }
        }
    }

    fn eq_lanes(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let mut bits = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let d = self.xor2(x, y);
            bits.push(d.negate());
        }
        self.and_many(&bits)
    }

    fn ult_lanes(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        // MSB-down: a < b iff at some bit k, prefix above k equal and a[k] < b[k].
        let mut result = self.lit_false();
        let mut prefix_eq = self.lit_true;
        for k in (0..a.len()).rev() {
            let lt_here = self.and2(a[k].negate(), b[k]);
            let term = self.and2(prefix_eq, lt_here);
            result = self.or2(result, term);
            let d = self.xor2(a[k], b[k]);
            prefix_eq = self.and2(prefix_eq, d.negate());
        }
        result
    }

    pub fn emit_bool(&mut self, c: &BoolExpr) -> Lit {
        if let Some(&cached) = self.bool_cache.get(c) {
            return cached;
        }
        let lit = match c {
            BoolExpr::Lit(v) => self.const_lit(*v),
            BoolExpr::Cmp { op, lhs, rhs } => {
                let a = self.emit_expr(lhs);
                let b = self.emit_expr(rhs);
                match op {
                    CmpOp::Eq => self.eq_lanes(&a, &b),
                    CmpOp::Ne => self.eq_lanes(&a, &b).negate(),
                    CmpOp::Ult => self.ult_lanes(&a, &b),
                    CmpOp::Ule => {
                        let lt = self.ult_lanes(&a, &b);
                        let eq = self.eq_lanes(&a, &b);
                        self.or2(lt, eq)
                    }
                }
            }
            BoolExpr::Not(x) => self.emit_bool(x).negate(),
            BoolExpr::And(x, y) => {
                let a = self.emit_bool(x);
                let b = self.emit_bool(y);
                self.and2(a, b)
            }
            BoolExpr::Or(x, y) => {
                let a = self.emit_bool(x);
                let b = self.emit_bool(y);
                self.or2(a, b)
            }
        };
        self.bool_cache.insert(c.clone(), lit);
        lit
    }

    pub fn assert_true(&mut self, lit: Lit) {
        self.clauses.push(vec![lit]);
    }

    /// Build the SAT instance: input bit variables first in the decision
    /// order, auxiliaries after.
    pub fn into_sat(self) -> (Sat, BTreeMap<Var, [Lit; 8]>) {
        let order: Vec<usize> = (0..self.num_vars).collect();
        let mut sat = Sat::new(self.num_vars, order);
        for clause in self.clauses {
            sat.add_clause(clause);
        }
        (sat, self.input_bits)
    }
}
