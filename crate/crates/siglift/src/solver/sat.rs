//! Deterministic CDCL core: two-watched-literal unit propagation, first-UIP
//! clause learning, conflict-driven backjumping. No restarts and no dynamic
//! activity heuristic: decisions follow a fixed variable order and always
//! try false first, so the first model found is reproducible.

use std::time::Instant;

/// A literal: variable index shifted left, low bit set for negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lit(u32);

impl Lit {
    pub fn pos(var: usize) -> Lit {
        Lit((var as u32) << 1)
    }

    pub fn neg(var: usize) -> Lit {
        Lit(((var as u32) << 1) | 1)
    }

    pub fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn negate(self) -> Lit {
        Lit(self.0 ^ 1)
    }

    fn code(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    Unset,
    True,
    False,
}

fn value_of(assign: &[Value], lit: Lit) -> Value {
    match assign[lit.var()] {
        Value::Unset => Value::Unset,
        Value::True => {
            if lit.is_neg() {
                Value::False
            } else {
                Value::True
            }
        }
        Value::False => {
            if lit.is_neg() {
                Value::True
            } else {
                Value::False
            }
        }
    }
}

#[derive(Debug)]
pub enum SatOutcome {
    /// Total model, indexed by variable.
    Sat(Vec<bool>),
    Unsat,
    /// Budget ran out; carries decisions consumed.
    Budget(u64),
}

pub struct SatLimits {
    pub max_decisions: u64,
    pub deadline: Option<Instant>,
}

struct Clause {
    lits: Vec<Lit>,
}

pub struct Sat {
    num_vars: usize,
    clauses: Vec<Clause>,
    watches: Vec<Vec<usize>>,
    assign: Vec<Value>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    /// Decision order: variable indices, highest priority first.
    order: Vec<usize>,
    decisions: u64,
    root_conflict: bool,
}

impl Sat {
    /// `order` must be a permutation of `0..num_vars`.
    pub fn new(num_vars: usize, order: Vec<usize>) -> Sat {
        debug_assert_eq!(order.len(), num_vars);
        Sat {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); num_vars * 2],
            assign: vec![Value::Unset; num_vars],
            level: vec![0; num_vars],
            reason: vec![None; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            order,
            decisions: 0,
            root_conflict: false,
        }
    }

    fn value(&self, lit: Lit) -> Value {
        value_of(&self.assign, lit)
    }

    pub fn add_clause(&mut self, mut lits: Vec<Lit>) {
        if self.root_conflict {
            return;
        }
        lits.sort_by_key(|l| l.code());
        lits.dedup();
        // Tautologies contribute nothing.
        if lits.windows(2).any(|w| w[0].var() == w[1].var()) {
            return;
        }
        match lits.len() {
            0 => self.root_conflict = true,
            1 => {
                match self.value(lits[0]) {
                    Value::False => self.root_conflict = true,
                    Value::True => {}
                    Value::Unset => self.enqueue(lits[0], None),
                }
            }
            _ => {
                let ci = self.clauses.len();
                self.watches[lits[0].negate().code()].push(ci);
                self.watches[lits[1].negate().code()].push(ci);
                self.clauses.push(Clause { lits });
            }
        }
    }

    fn enqueue(&mut self, lit: Lit, reason: Option<usize>) {
        debug_assert_eq!(self.value(lit), Value::Unset);
        let v = lit.var();
        self.assign[v] = if lit.is_neg() { Value::False } else { Value::True };
        self.level[v] = self.trail_lim.len() as u32;
        self.reason[v] = reason;
        self.trail.push(lit);
    }

    /// Returns the index of a conflicting clause, if any.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            // Clauses watching ¬p registered themselves under p.
            let false_lit = p.negate();
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let mut j = 0;
            let mut conflict = None;
            let mut i = 0;
            while i < ws.len() {
                let ci = ws[i];
                i += 1;
                let clause = &mut self.clauses[ci];
                if clause.lits[0] == false_lit {
                    clause.lits.swap(0, 1);
                }
                debug_assert_eq!(clause.lits[1], false_lit);
                let first = clause.lits[0];
                if value_of(&self.assign, first) == Value::True {
                    ws[j] = ci;
                    j += 1;
                    continue;
                }
                // Find a replacement watch.
                let mut moved = None;
                for k in 2..clause.lits.len() {
                    if value_of(&self.assign, clause.lits[k]) != Value::False {
                        clause.lits.swap(1, k);
                        moved = Some(clause.lits[1]);
                        break;
                    }
                }
                if let Some(new_watch) = moved {
                    self.watches[new_watch.negate().code()].push(ci);
                    continue;
                }
                // Clause is unit or conflicting; keep the watch either way.
                ws[j] = ci;
                j += 1;
                if self.value(first) == Value::False {
                    // Conflict: retain the untouched tail of the watch list.
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                    conflict = Some(ci);
                    break;
                }
                self.enqueue(first, Some(ci));
            }
            ws.truncate(j);
            debug_assert!(self.watches[p.code()].is_empty());
            self.watches[p.code()] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// First-UIP conflict analysis. Returns the learnt clause (asserting
    /// literal first) and the backjump level.
    fn analyze(&mut self, mut confl: usize) -> (Vec<Lit>, u32) {
        let current = self.decision_level();
        let mut seen = vec![false; self.num_vars];
        let mut learnt: Vec<Lit> = vec![Lit::pos(0)]; // placeholder for the UIP
        let mut counter = 0usize;
        let mut idx = self.trail.len();
        let mut p: Option<Lit> = None;

        loop {
            let lits = &self.clauses[confl].lits;
            let start = usize::from(p.is_some());
            for &q in &lits[start..] {
                let v = q.var();
                if !seen[v] && self.level[v] > 0 {
                    seen[v] = true;
                    if self.level[v] >= current {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if seen[self.trail[idx].var()] {
                    break;
                }
            }
            let pl = self.trail[idx];
            seen[pl.var()] = false;
            counter -= 1;
            if counter == 0 {
                learnt[0] = pl.negate();
                break;
            }
            confl = self.reason[pl.var()].expect("implied literal must have a reason");
            p = Some(pl);
        }

        // Backjump to the second-highest level in the clause.
        let mut bj = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var()] > self.level[learnt[max_i].var()] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            bj = self.level[learnt[1].var()];
        }
        (learnt, bj)
    }

    fn backtrack(&mut self, target: u32) {
        while self.decision_level() > target {
            let lim = self.trail_lim.pop().unwrap();
            while self.trail.len() > lim {
                let lit = self.trail.pop().unwrap();
                let v = lit.var();
                self.assign[v] = Value::Unset;
                self.reason[v] = None;
            }
        }
        self.qhead = self.trail.len();
    }

    fn next_decision(&self) -> Option<Lit> {
        for &v in &self.order {
            if self.assign[v] == Value::Unset {
                // Try false first: witnesses prefer zero bits.
                return Some(Lit::neg(v));
            }
        }
        None
    }

    pub fn solve(&mut self, limits: &SatLimits) -> SatOutcome {
        if self.root_conflict {
            return SatOutcome::Unsat;
        }
        if self.propagate().is_some() {
            return SatOutcome::Unsat;
        }
        loop {
            match self.propagate() {
                Some(confl) => {
                    if self.decision_level() == 0 {
                        return SatOutcome::Unsat;
                    }
                    let (learnt, bj) = self.analyze(confl);
                    self.backtrack(bj);
                    if learnt.len() == 1 {
                        self.enqueue(learnt[0], None);
                    } else {
                        let ci = self.clauses.len();
                        self.watches[learnt[0].negate().code()].push(ci);
                        self.watches[learnt[1].negate().code()].push(ci);
                        let first = learnt[0];
                        self.clauses.push(Clause { lits: learnt });
                        self.enqueue(first, Some(ci));
                    }
                }
                None => {
                    let Some(lit) = self.next_decision() else {
                        let model = self
                            .assign
                            .iter()
                            .map(|v| matches!(v, Value::True))
                            .collect();
                        return SatOutcome::Sat(model);
                    };
                    self.decisions += 1;
                    if self.decisions > limits.max_decisions {
                        return SatOutcome::Budget(self.decisions);
                    }
                    if self.decisions.is_multiple_of(1024) {
                        if let Some(deadline) = limits.deadline {
                            if Instant::now() >= deadline {
                                return SatOutcome::Budget(self.decisions);
                            }
                        }
                    }
                    self.trail_lim.push(self.trail.len());
                    self.enqueue(lit, None);
                }
            }
        }
    }

}
