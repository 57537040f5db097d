//! Path-condition satisfiability over input-byte variables.
//!
//! Constraints are simplified, bit-blasted to CNF, and decided by the
//! in-crate CDCL core. The fixed variable order (region, byte index, most
//! significant bit first) and false-first value order make the witness a
//! deterministic, small-byte-preferring choice. Complete for the
//! expression language; `Unknown` only on budget exhaustion.

mod blast;
mod sat;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use blast::Blaster;
use sat::{SatLimits, SatOutcome};

use crate::symexpr::{Assignment, BoolExpr, EvalError, PathCondition, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    /// Satisfiable; the assignment is total over the constraint set's
    /// free variables.
    Sat(Assignment),
    Unsat,
    /// Budget ran out; carries the decision count consumed.
    Unknown { decisions: u64 },
}

impl SolveResult {
    pub fn assignment(&self) -> Option<&Assignment> {
        match self {
            SolveResult::Sat(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverBudget {
    pub max_decisions: u64,
    pub max_time: Duration,
}

impl Default for SolverBudget {
    fn default() -> Self {
        SolverBudget { max_decisions: 1_000_000, max_time: Duration::from_secs(10) }
    }
}

/// Decide a path condition.
pub fn solve(pc: &PathCondition, budget: &SolverBudget) -> SolveResult {
    let constraints: Vec<&BoolExpr> = pc.constraints().collect();
    solve_constraints(&constraints, budget)
}

/// Decide a bare constraint conjunction.
pub fn solve_constraints(constraints: &[&BoolExpr], budget: &SolverBudget) -> SolveResult {
    let mut vars: BTreeSet<Var> = BTreeSet::new();
    for c in constraints {
        vars.extend(c.free_vars());
    }

    let mut blasted = Vec::with_capacity(constraints.len());
    for c in constraints {
        match c.simplify() {
            BoolExpr::Lit(false) => return SolveResult::Unsat,
            BoolExpr::Lit(true) => {}
            other => blasted.push(other),
        }
    }

    let mut blaster = Blaster::new(&vars);
    for c in &blasted {
        let lit = blaster.emit_bool(c);
        blaster.assert_true(lit);
    }
    let (mut solver, input_bits) = blaster.into_sat();

    let limits = SatLimits {
        max_decisions: budget.max_decisions,
        deadline: Some(Instant::now() + budget.max_time),
    };
    match solver.solve(&limits) {
        SatOutcome::Sat(model) => {
            let mut assignment = Assignment::new();
            for (var, lanes) in input_bits {
                let mut byte = 0u8;
                for (sig, lane) in lanes.iter().enumerate() {
                    if model[lane.var()] != lane.is_neg() {
                        byte |= 1 << sig;
                    }
                }
                assignment.insert(var, byte);
            }
            SolveResult::Sat(assignment)
        }
        SatOutcome::Unsat => SolveResult::Unsat,
        SatOutcome::Budget(decisions) => SolveResult::Unknown { decisions },
    }
}

/// Independent verification: evaluate every constraint under `a`.
///
/// This deliberately goes through expression evaluation and shares nothing
/// with the bit-blasting path that `solve` uses.
pub fn check_assignment(pc: &PathCondition, a: &Assignment) -> Result<bool, EvalError> {
    pc.satisfied_by(a)
}
