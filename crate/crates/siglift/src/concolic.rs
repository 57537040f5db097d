//! Concolic execution: the concrete interpreter semantics plus a symbolic
//! shadow over marked input regions.
//!
//! The executor follows exactly one concrete path. Marked input bytes
//! start as 8-bit variables in shadow memory; every instruction that mixes
//! shadowed values builds the corresponding expression, and every
//! conditional branch whose condition carries a shadow appends the
//! constraint for the direction actually taken. Shadow slots hold an
//! invariant the checker can enforce at each step: evaluating the slot's
//! expression over the original input bytes yields the concrete value in
//! that slot.
//!
//! External calls go through a pluggable policy. `Halt` refuses symbolic
//! arguments outright. `Concretize` drops argument shadows and runs the
//! callee with no shadow propagation at all, pinning nothing: the
//! information is silently gone, and paths that depend on it become
//! unreachable to the search. `Mapped` consults a pre-run execution map
//! and, when the callee's library appears there, runs its bytecode inline
//! with full shadow propagation.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::interp::{
    load_image, run_native, ImageError, InputImage, MachineState, Status, Trace, TraceBuilder,
    XcallVia,
};
use crate::isa::{AluOp, Instruction, MemWidth, Operand, Pc, Program, Reg};
use crate::search::ExecutionMap;
use crate::symexpr::{
    Assignment, BinOp, BoolExpr, CmpOp, ConstraintKind, Expr, PathCondition, PathEntry, Var,
};

/// Input regions whose bytes become symbolic variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolicMarks {
    pub regions: Vec<String>,
}

impl SymbolicMarks {
    pub fn one(region: &str) -> SymbolicMarks {
        SymbolicMarks { regions: vec![region.to_string()] }
    }

    pub fn contains(&self, region: &str) -> bool {
        self.regions.iter().any(|r| r == region)
    }
}

/// How external calls treat symbolic state.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalPolicy {
    /// Stop the analysis when an external call receives a symbolic argument.
    Halt,
    /// Drop argument shadows and execute the callee fully concretely,
    /// without pinning the concretized values.
    Concretize,
    /// Execute library code recorded in the map inline, shadows intact;
    /// anything else is refused like `Halt`.
    Mapped(ExecutionMap),
}

impl ExternalPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ExternalPolicy::Halt => "halt",
            ExternalPolicy::Concretize => "concretize",
            ExternalPolicy::Mapped(_) => "mapped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConcolicOutcome {
    Halted(u32),
    Fault { status: Box<Status>, pc: Pc },
    FuelExhausted,
    /// The policy refused an external call.
    PolicyHalt { symbol: String, pc: Pc },
}

/// How aggressively the shadow-consistency invariant is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConsistencyCheck {
    Off,
    /// Registers every step, memory shadows periodically.
    #[default]
    Sampled,
    /// Every present shadow slot, every step.
    Full,
}

#[derive(Debug, Clone)]
pub struct ConcolicOptions {
    pub fuel: u64,
    pub check: ConsistencyCheck,
}

impl Default for ConcolicOptions {
    fn default() -> Self {
        ConcolicOptions { fuel: crate::interp::DEFAULT_FUEL, check: ConsistencyCheck::Sampled }
    }
}

#[derive(Debug, Error)]
pub enum ConcolicError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("marked region '{0}' is not in the input image")]
    UnknownRegion(String),
}

/// Everything one concolic run produced.
#[derive(Debug, Clone)]
pub struct ConcolicRun {
    pub trace: Trace,
    pub path: PathCondition,
    pub outcome: ConcolicOutcome,
    /// Final concrete machine state; registers carry scanner conventions.
    pub state: MachineState,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NegateError {
    #[error("negation index {index} out of range for path of length {len}")]
    OutOfRange { index: usize, len: usize },
}

/// Keep the prefix before `k`, negate entry `k`, drop the suffix.
pub fn negate_at(pc: &PathCondition, k: usize) -> Result<PathCondition, NegateError> {
    if k >= pc.len() {
        return Err(NegateError::OutOfRange { index: k, len: pc.len() });
    }
    let mut entries: Vec<PathEntry> = pc.entries[..=k].to_vec();
    let last = &mut entries[k];
    last.constraint = last.constraint.negate();
    last.taken = !last.taken;
    Ok(PathCondition { entries })
}

/// Run the program concretely while collecting the path condition over the
/// marked regions. The concrete path is identical to `interp::run` on the
/// same inputs.
pub fn execute_concolic(
    program: &Program,
    inputs: &InputImage,
    marks: &SymbolicMarks,
    policy: &ExternalPolicy,
    fuel: u64,
) -> Result<ConcolicRun, ConcolicError> {
    execute_concolic_with(
        program,
        inputs,
        marks,
        policy,
        &ConcolicOptions { fuel, ..ConcolicOptions::default() },
    )
}

pub fn execute_concolic_with(
    program: &Program,
    inputs: &InputImage,
    marks: &SymbolicMarks,
    policy: &ExternalPolicy,
    options: &ConcolicOptions,
) -> Result<ConcolicRun, ConcolicError> {
    for name in &marks.regions {
        if inputs.region(name).is_none() {
            return Err(ConcolicError::UnknownRegion(name.clone()));
        }
    }
    let state = load_image(program, inputs)?;

    let mut shadow_mem = BTreeMap::new();
    let mut input_assignment = Assignment::new();
    for name in &marks.regions {
        let region = inputs.region(name).expect("checked above");
        for (i, &byte) in region.bytes.iter().enumerate() {
            let var = Var::new(name.as_str(), i as u32);
            shadow_mem.insert(region.base.wrapping_add(i as u32), Expr::var(var.clone()));
            input_assignment.insert(var, byte);
        }
    }

    let mut exec = Executor {
        program,
        state,
        shadow_regs: Default::default(),
        shadow_mem,
        path: PathCondition::new(),
        tb: TraceBuilder::new(),
        frames: Vec::new(),
        concrete_depth: 0,
        policy,
        input_assignment,
        check: options.check,
        outcome: None,
        branch_counter: 0,
    };
    exec.tb.enter_pc(program.cfg(), exec.state.pc);

    let mut remaining = options.fuel;
    while exec.outcome.is_none() {
        if remaining == 0 {
            exec.outcome = Some(ConcolicOutcome::FuelExhausted);
            break;
        }
        remaining -= 1;
        exec.step();
        exec.check_consistency();
    }

    Ok(ConcolicRun {
        trace: exec.tb.finish(),
        path: exec.path,
        outcome: exec.outcome.unwrap(),
        state: exec.state,
    })
}

struct Frame {
    xcall_token: Option<usize>,
    /// True for the frame that opened a concretize region.
    concrete_region: bool,
}

struct Executor<'a> {
    program: &'a Program,
    state: MachineState,
    shadow_regs: [Option<Expr>; 8],
    shadow_mem: BTreeMap<u32, Expr>,
    path: PathCondition,
    tb: TraceBuilder,
    frames: Vec<Frame>,
    /// Number of enclosing concretize regions; shadows are inert inside.
    concrete_depth: usize,
    policy: &'a ExternalPolicy,
    input_assignment: Assignment,
    check: ConsistencyCheck,
    outcome: Option<ConcolicOutcome>,
    branch_counter: u32,
}

impl<'a> Executor<'a> {
    fn in_concrete_region(&self) -> bool {
        self.concrete_depth > 0
    }

    fn shadow_of_reg(&self, r: Reg) -> Option<&Expr> {
        self.shadow_regs[r.index()].as_ref()
    }

    fn set_shadow_reg(&mut self, r: Reg, shadow: Option<Expr>) {
        self.shadow_regs[r.index()] = if self.in_concrete_region() { None } else { shadow };
    }

    /// Simplify a freshly built shadow; fully concrete results drop the slot.
    fn settle(&self, e: Expr) -> Option<Expr> {
        let s = e.simplify();
        if s.as_const().is_some() {
            None
        } else {
            Some(s)
        }
    }

    fn operand_expr(&self, op: Operand) -> Option<Expr> {
        match op {
            Operand::Reg(r) => self.shadow_of_reg(r).cloned(),
            Operand::Imm(_) => None,
        }
    }

    fn operand_expr_or_const(&self, op: Operand) -> Expr {
        self.operand_expr(op)
            .unwrap_or_else(|| Expr::constant(32, self.state.operand(op)))
    }

    fn fault(&mut self, status: Status, pc: Pc) {
        self.state.status = status.clone();
        self.outcome = Some(match status {
            Status::Halted(code) => ConcolicOutcome::Halted(code),
            other => ConcolicOutcome::Fault { status: Box::new(other), pc },
        });
    }

    /// Concretize a memory address: keep the concrete value and pin the
    /// address expression to it so witness replay stays on this path.
    /// Inside a concretize region nothing is pinned.
    fn pin_address(&mut self, base: Reg, offset: i32, addr: u32, site: Pc) {
        if self.in_concrete_region() {
            return;
        }
        let Some(base_shadow) = self.shadow_of_reg(base).cloned() else {
            return;
        };
        let addr_expr = Expr::bin(BinOp::Add, base_shadow, Expr::constant(32, offset as u32));
        let constraint = BoolExpr::cmp(CmpOp::Eq, addr_expr, Expr::constant(32, addr)).simplify();
        self.path.push(PathEntry {
            constraint,
            site,
            taken: true,
            kind: ConstraintKind::AddressPin,
            ordinal: self.branch_counter,
        });
    }

    /// 0/1-valued equality over 32-bit expressions, written with the
    /// available operators: nonzero(x) = (x | (0 - x)) >> 31.
    fn eq_expr(a: Expr, b: Expr) -> Expr {
        let d = Expr::bin(BinOp::Xor, a, b);
        let neg = Expr::bin(BinOp::Sub, Expr::constant(32, 0), d.clone());
        let nz = Expr::bin(BinOp::Shr, Expr::bin(BinOp::Or, d, neg), Expr::constant(32, 31));
        Expr::bin(BinOp::Xor, nz, Expr::constant(32, 1))
    }

    /// 0/1-valued unsigned less-than: the borrow bit of a - b.
    fn lt_expr(a: Expr, b: Expr) -> Expr {
        let not_a = Expr::not(a.clone());
        let term1 = Expr::bin(BinOp::And, not_a.clone(), b.clone());
        let diff = Expr::bin(BinOp::Sub, a, b.clone());
        let term2 = Expr::bin(BinOp::And, Expr::bin(BinOp::Or, not_a, b), diff);
        let borrow = Expr::bin(BinOp::Or, term1, term2);
        Expr::bin(BinOp::Shr, borrow, Expr::constant(32, 31))
    }

    fn step(&mut self) {
        let cfg = self.program.cfg();
        let pc = self.state.pc;
        let module = self.program.module(pc.module);
        let Some(instr) = module.instructions.get(pc.index) else {
            self.fault(
                Status::Fault { reason: crate::interp::FaultReason::PcOutOfRange, pc },
                pc,
            );
            return;
        };
        let instr = instr.clone();
        self.tb.count_step();

        let mut next = Pc::new(pc.module, pc.index + 1);
        match &instr {
            Instruction::Const { dst, imm } => {
                self.state.set_reg(*dst, *imm as u32);
                self.set_shadow_reg(*dst, None);
            }
            Instruction::Mov { dst, src } => {
                self.state.set_reg(*dst, self.state.reg(*src));
                let shadow = self.shadow_of_reg(*src).cloned();
                self.set_shadow_reg(*dst, shadow);
            }
            Instruction::Alu { op, dst, lhs, rhs } => {
                let a = self.state.operand(*lhs);
                let b = self.state.operand(*rhs);
                let any_symbolic =
                    self.operand_expr(*lhs).is_some() || self.operand_expr(*rhs).is_some();
                let shadow = if any_symbolic && !self.in_concrete_region() {
                    let ea = self.operand_expr_or_const(*lhs);
                    let eb = self.operand_expr_or_const(*rhs);
                    let expr = match op {
                        AluOp::Add => Expr::bin(BinOp::Add, ea, eb),
                        AluOp::Sub => Expr::bin(BinOp::Sub, ea, eb),
                        AluOp::Mul => Expr::bin(BinOp::Mul, ea, eb),
                        AluOp::And => Expr::bin(BinOp::And, ea, eb),
                        AluOp::Or => Expr::bin(BinOp::Or, ea, eb),
                        AluOp::Xor => Expr::bin(BinOp::Xor, ea, eb),
                        AluOp::Shl => Expr::bin(BinOp::Shl, ea, eb),
                        AluOp::Shr => Expr::bin(BinOp::Shr, ea, eb),
                        AluOp::Eq => Self::eq_expr(ea, eb),
                        AluOp::Lt => Self::lt_expr(ea, eb),
                    };
                    self.settle(expr)
                } else {
                    None
                };
                self.state.set_reg(*dst, op.apply(a, b));
                self.set_shadow_reg(*dst, shadow);
            }
            Instruction::Load { width, dst, mem } => {
                let addr = self.state.effective_addr(*mem);
                self.pin_address(mem.base, mem.offset, addr, pc);
                let value = match width {
                    MemWidth::Byte => self.state.read_u8(addr).map(u32::from),
                    MemWidth::Word => self.state.read_u32(addr),
                };
                let value = match value {
                    Ok(v) => v,
                    Err(reason) => {
                        self.fault(Status::Fault { reason, pc }, pc);
                        return;
                    }
                };
                let shadow = if self.in_concrete_region() {
                    None
                } else {
                    match width {
                        MemWidth::Byte => {
                            self.shadow_mem.get(&addr).map(|e| Expr::zext8to32(e.clone()))
                        }
                        MemWidth::Word => {
                            let bytes: Vec<Option<Expr>> = (0..4)
                                .map(|k| self.shadow_mem.get(&addr.wrapping_add(k)).cloned())
                                .collect();
                            if bytes.iter().all(Option::is_none) {
                                None
                            } else {
                                let lane = |k: usize| -> Expr {
                                    bytes[k].clone().unwrap_or_else(|| {
                                        Expr::constant(8, (value >> (8 * k)) & 0xFF)
                                    })
                                };
                                Some(Expr::concat(
                                    Expr::concat(lane(3), lane(2)),
                                    Expr::concat(lane(1), lane(0)),
                                ))
                            }
                        }
                    }
                };
                self.state.set_reg(*dst, value);
                let settled = shadow.and_then(|e| self.settle(e));
                self.set_shadow_reg(*dst, settled);
            }
            Instruction::Store { width, mem, src } => {
                let addr = self.state.effective_addr(*mem);
                self.pin_address(mem.base, mem.offset, addr, pc);
                let v = self.state.reg(*src);
                let shadow = if self.in_concrete_region() {
                    None
                } else {
                    self.shadow_of_reg(*src).cloned()
                };
                match width {
                    MemWidth::Byte => {
                        self.state.write_u8(addr, v as u8);
                        self.set_shadow_byte(addr, shadow.map(|e| Expr::extract(0, 8, e)));
                    }
                    MemWidth::Word => {
                        self.state.write_u32(addr, v);
                        for k in 0..4u32 {
                            let byte_shadow = shadow
                                .as_ref()
                                .map(|e| Expr::extract((8 * k) as u8, 8, e.clone()));
                            self.set_shadow_byte(addr.wrapping_add(k), byte_shadow);
                        }
                    }
                }
            }
            Instruction::Jmp { target } => next = Pc::new(pc.module, *target),
            Instruction::Branch { on_zero, cond, target } => {
                let value = self.state.reg(*cond);
                let zero = value == 0;
                let taken = zero == *on_zero;
                self.tb.record_branch(pc, taken);
                let ordinal = self.branch_counter;
                self.branch_counter += 1;
                if !self.in_concrete_region() {
                    if let Some(shadow) = self.shadow_of_reg(*cond).cloned() {
                        let eq_zero = BoolExpr::cmp(CmpOp::Eq, shadow, Expr::constant(32, 0));
                        let constraint =
                            if zero { eq_zero } else { eq_zero.negate() }.simplify();
                        self.path.push(PathEntry {
                            constraint,
                            site: pc,
                            taken,
                            kind: ConstraintKind::Branch,
                            ordinal,
                        });
                    }
                }
                if taken {
                    next = Pc::new(pc.module, *target);
                }
            }
            Instruction::Call { target } => {
                if self.state.call_stack.len() >= crate::interp::MAX_CALL_DEPTH {
                    self.fault(
                        Status::Fault { reason: crate::interp::FaultReason::StackOverflow, pc },
                        pc,
                    );
                    return;
                }
                self.state.call_stack.push(next);
                self.frames.push(Frame { xcall_token: None, concrete_region: false });
                next = Pc::new(pc.module, *target);
            }
            Instruction::Ret => {
                let Some(ret) = self.state.call_stack.pop() else {
                    self.fault(
                        Status::Fault {
                            reason: crate::interp::FaultReason::StackUnderflow,
                            pc,
                        },
                        pc,
                    );
                    return;
                };
                if let Some(frame) = self.frames.pop() {
                    if let Some(token) = frame.xcall_token {
                        self.tb.finish_xcall(token, self.state.regs[0]);
                    }
                    if frame.concrete_region {
                        self.concrete_depth -= 1;
                    }
                }
                next = ret;
            }
            Instruction::Xcall { symbol } => {
                if !self.apply_external(symbol, pc, &mut next) {
                    return;
                }
            }
            Instruction::Halt { code } => {
                let code = self.state.reg(*code);
                self.state.status = Status::Halted(code);
                self.outcome = Some(ConcolicOutcome::Halted(code));
                return;
            }
        }

        self.state.pc = next;
        self.tb.enter_pc(cfg, next);
    }

    fn set_shadow_byte(&mut self, addr: u32, shadow: Option<Expr>) {
        match shadow.and_then(|e| self.settle(e)) {
            Some(e) => {
                self.shadow_mem.insert(addr, e);
            }
            None => {
                self.shadow_mem.remove(&addr);
            }
        }
    }

    /// Dispatch an external call under the active policy. Returns false
    /// when the step ended the run.
    fn apply_external(&mut self, symbol: &str, pc: Pc, next: &mut Pc) -> bool {
        let args = [
            self.state.regs[0],
            self.state.regs[1],
            self.state.regs[2],
            self.state.regs[3],
        ];
        let symbolic_arg = !self.in_concrete_region()
            && self.shadow_regs[..4].iter().any(Option::is_some);

        match self.program.resolve_symbol(symbol) {
            Some(entry) => {
                if self.state.call_stack.len() >= crate::interp::MAX_CALL_DEPTH {
                    self.fault(
                        Status::Fault { reason: crate::interp::FaultReason::StackOverflow, pc },
                        pc,
                    );
                    return false;
                }
                let lib_name = self.program.module_name(entry.module).to_string();
                // Nested calls inside a concretize region stay concrete.
                let mut opens_region = false;
                if !self.in_concrete_region() {
                    match self.policy {
                        ExternalPolicy::Halt => {
                            if symbolic_arg {
                                self.outcome = Some(ConcolicOutcome::PolicyHalt {
                                    symbol: symbol.to_string(),
                                    pc,
                                });
                                return false;
                            }
                        }
                        ExternalPolicy::Concretize => {
                            for slot in &mut self.shadow_regs[..4] {
                                *slot = None;
                            }
                            opens_region = true;
                        }
                        ExternalPolicy::Mapped(map) => {
                            if !map.loads.contains(&lib_name) {
                                self.outcome = Some(ConcolicOutcome::PolicyHalt {
                                    symbol: symbol.to_string(),
                                    pc,
                                });
                                return false;
                            }
                        }
                    }
                }
                let token =
                    self.tb.begin_xcall(pc, symbol, args, XcallVia::Library(lib_name.clone()));
                self.tb.record_load(entry.module, &lib_name);
                self.state.call_stack.push(*next);
                self.frames
                    .push(Frame { xcall_token: Some(token), concrete_region: opens_region });
                if opens_region {
                    self.concrete_depth += 1;
                }
                *next = entry;
                true
            }
            None => {
                if !crate::interp::native_symbols().contains(&symbol) {
                    let status = Status::UnresolvedExternal { symbol: symbol.to_string(), pc };
                    self.fault(status, pc);
                    return false;
                }
                if !self.in_concrete_region() {
                    match self.policy {
                        // Natives are not library bytecode; a map cannot make
                        // them shadow-safe, so Mapped refuses like Halt.
                        ExternalPolicy::Halt | ExternalPolicy::Mapped(_) => {
                            if symbolic_arg {
                                self.outcome = Some(ConcolicOutcome::PolicyHalt {
                                    symbol: symbol.to_string(),
                                    pc,
                                });
                                return false;
                            }
                        }
                        ExternalPolicy::Concretize => {
                            for slot in &mut self.shadow_regs[..4] {
                                *slot = None;
                            }
                        }
                    }
                }
                match run_native(symbol, &mut self.state) {
                    Some(Ok(())) => {
                        let token = self.tb.begin_xcall(pc, symbol, args, XcallVia::Native);
                        self.tb.finish_xcall(token, self.state.regs[0]);
                        // Natives produce concrete results and may write
                        // concrete bytes.
                        self.shadow_regs[0] = None;
                        self.clear_native_write_shadows(symbol, args);
                        true
                    }
                    Some(Err(reason)) => {
                        self.fault(Status::Fault { reason, pc }, pc);
                        false
                    }
                    None => unreachable!("native presence checked above"),
                }
            }
        }
    }

    fn clear_native_write_shadows(&mut self, symbol: &str, args: [u32; 4]) {
        if symbol == "sys.memset" {
            for k in 0..args[2] {
                self.shadow_mem.remove(&args[0].wrapping_add(k));
            }
        }
    }

    fn check_consistency(&self) {
        let (regs, mem) = match self.check {
            ConsistencyCheck::Off => return,
            ConsistencyCheck::Sampled => (true, self.tb.steps().is_multiple_of(64)),
            ConsistencyCheck::Full => (true, true),
        };
        if regs {
            for (i, shadow) in self.shadow_regs.iter().enumerate() {
                if let Some(e) = shadow {
                    let got = e
                        .eval(&self.input_assignment)
                        .expect("shadow refers to unmarked variable");
                    assert_eq!(
                        got, self.state.regs[i],
                        "shadow/concrete mismatch in r{i} at {:?}: shadow {e} = {got:#x}, concrete {:#x}",
                        self.state.pc, self.state.regs[i]
                    );
                }
            }
        }
        if mem {
            for (addr, e) in &self.shadow_mem {
                let got = e
                    .eval(&self.input_assignment)
                    .expect("shadow refers to unmarked variable");
                let concrete = self
                    .state
                    .memory
                    .get(addr)
                    .copied()
                    .expect("shadowed byte must be mapped");
                assert_eq!(
                    got, concrete as u32,
                    "shadow/concrete mismatch at address {addr:#x}: shadow {e} = {got:#x}, concrete {concrete:#x}"
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp;
    use crate::isa::parse_program;
    use crate::solver::{check_assignment, solve, SolveResult, SolverBudget};

    fn prog(src: &str) -> Program {
        parse_program(src).unwrap()
    }

    /// Byte-check program: halts 1 iff file[0] == 0x41.
    const CHECK_BYTE: &str = "main:\n  const r1, 0x1000\n  load8 r2, [r1]\n  const r3, 0x41\n  xor r2, r2, r3\n  jnz r2, miss\n  const r0, 1\n  halt r0\nmiss:\n  const r0, 0\n  halt r0\n";

    fn file_inputs(bytes: &[u8]) -> InputImage {
        InputImage::new().with_region("file", 0x1000, bytes.to_vec())
    }

    fn run_concolic(
        src: &str,
        inputs: &InputImage,
        policy: &ExternalPolicy,
    ) -> (Program, ConcolicRun) {
        let p = prog(src);
        let run = execute_concolic_with(
            &p,
            inputs,
            &SymbolicMarks::one("file"),
            policy,
            &ConcolicOptions { fuel: interp::DEFAULT_FUEL, check: ConsistencyCheck::Full },
        )
        .unwrap();
        (p, run)
    }

    #[test]
    fn no_marks_means_empty_path_and_identical_trace() {
        let p = prog(CHECK_BYTE);
        let inputs = file_inputs(b"A");
        let run =
            execute_concolic(&p, &inputs, &SymbolicMarks::default(), &ExternalPolicy::Halt, 10_000)
                .unwrap();
        assert!(run.path.is_empty());
        let (_, reference) = interp::run(&p, interp::load_image(&p, &inputs).unwrap(), 10_000);
        assert_eq!(run.trace, reference);
        assert_eq!(run.outcome, ConcolicOutcome::Halted(1));
    }

    #[test]
    fn branch_on_symbolic_byte_collects_constraint() {
        let inputs = file_inputs(b"X");
        let (_, run) = run_concolic(CHECK_BYTE, &inputs, &ExternalPolicy::Halt);
        assert_eq!(run.outcome, ConcolicOutcome::Halted(0));
        assert_eq!(run.path.len(), 1);
        // The miss path means file[0] != 0x41; its negation forces 0x41.
        let flipped = negate_at(&run.path, 0).unwrap();
        match solve(&flipped, &SolverBudget::default()) {
            SolveResult::Sat(a) => {
                assert_eq!(a[&Var::new("file", 0)], 0x41);
                assert!(check_assignment(&flipped, &a).unwrap());
            }
            other => panic!("expected sat, got {other:?}"),
        }
    }

    #[test]
    fn solved_negation_diverges_exactly_at_the_branch() {
        let inputs = file_inputs(b"X");
        let (p, run) = run_concolic(CHECK_BYTE, &inputs, &ExternalPolicy::Halt);
        let flipped = negate_at(&run.path, 0).unwrap();
        let SolveResult::Sat(a) = solve(&flipped, &SolverBudget::default()) else {
            panic!("negation must be satisfiable");
        };
        let patched = inputs.patched(&a);
        let (st, trace) = interp::run(&p, interp::load_image(&p, &patched).unwrap(), 10_000);
        assert_eq!(st.status, Status::Halted(1));
        let original = run.trace.branch_records();
        let replayed = trace.branch_records();
        assert_eq!(original[0].0, replayed[0].0, "same branch site");
        assert_ne!(original[0].1, replayed[0].1, "opposite direction");
    }

    #[test]
    fn concrete_path_matches_interp_for_every_policy() {
        let inputs = file_inputs(b"ZA");
        let p = prog(CHECK_BYTE);
        let (_, reference) = interp::run(&p, interp::load_image(&p, &inputs).unwrap(), 10_000);
        for policy in [
            ExternalPolicy::Halt,
            ExternalPolicy::Concretize,
            ExternalPolicy::Mapped(ExecutionMap::default()),
        ] {
            let run = execute_concolic(&p, &inputs, &SymbolicMarks::one("file"), &policy, 10_000)
                .unwrap();
            assert_eq!(run.trace, reference, "policy {}", policy.name());
        }
    }

    #[test]
    fn negate_at_prefix_semantics() {
        let inputs = file_inputs(b"AB");
        // Two checks in sequence produce a two-entry path.
        let src = "main:\n  const r1, 0x1000\n  load8 r2, [r1]\n  xor r2, r2, 0x41\n  jnz r2, miss\n  load8 r2, [r1+1]\n  xor r2, r2, 0x42\n  jnz r2, miss\n  const r0, 1\n  halt r0\nmiss:\n  const r0, 0\n  halt r0\n";
        let (_, run) = run_concolic(src, &inputs, &ExternalPolicy::Halt);
        assert_eq!(run.path.len(), 2);
        let negated = negate_at(&run.path, 1).unwrap();
        assert_eq!(negated.len(), 2);
        assert_eq!(negated.entries[0], run.path.entries[0]);
        assert_eq!(negated.entries[1].constraint, run.path.entries[1].constraint.negate());
        assert!(negate_at(&run.path, 2).is_err());
    }

    #[test]
    fn policy_halt_stops_on_symbolic_library_arg() {
        let src = ".module main\nmain:\n  const r1, 0x1000\n  load8 r0, [r1]\n  xcall str.id\n  halt r0\n\
                   .module str\nid:\n  ret\n";
        let inputs = file_inputs(b"Q");
        let (_, run) = run_concolic(src, &inputs, &ExternalPolicy::Halt);
        match run.outcome {
            ConcolicOutcome::PolicyHalt { ref symbol, .. } => assert_eq!(symbol, "str.id"),
            ref other => panic!("expected policy halt, got {other:?}"),
        }
    }

    #[test]
    fn policy_halt_with_concrete_args_runs_like_interp() {
        let src = ".module main\nmain:\n  const r0, 3\n  const r1, 4\n  xcall math.sum\n  halt r0\n\
                   .module math\nsum:\n  add r0, r0, r1\n  ret\n";
        let p = prog(src);
        let inputs = InputImage::new();
        let run =
            execute_concolic(&p, &inputs, &SymbolicMarks::default(), &ExternalPolicy::Halt, 10_000)
                .unwrap();
        assert_eq!(run.outcome, ConcolicOutcome::Halted(7));
        let (_, reference) = interp::run(&p, interp::load_image(&p, &inputs).unwrap(), 10_000);
        assert_eq!(run.trace, reference);
    }

    #[test]
    fn concretize_drops_shadows_and_pins_nothing() {
        // Library doubles its argument; the caller branches on the result.
        let src = ".module main\nmain:\n  const r1, 0x1000\n  load8 r0, [r1]\n  xcall math.dbl\n  jz r0, z\n  const r0, 1\n  halt r0\nz:\n  const r0, 0\n  halt r0\n\
                   .module math\ndbl:\n  add r0, r0, r0\n  ret\n";
        let inputs = file_inputs(&[0x58]);
        let (_, run) = run_concolic(src, &inputs, &ExternalPolicy::Concretize);
        // Result computed from the concrete 0x58 and the shadow is gone:
        // no constraint anywhere mentions the file byte.
        assert_eq!(run.outcome, ConcolicOutcome::Halted(1));
        assert!(run.path.is_empty());
    }

    #[test]
    fn mapped_policy_propagates_through_library() {
        let src = ".module main\nmain:\n  const r1, 0x1000\n  load8 r0, [r1]\n  const r1, 0x41\n  xcall str.match\n  jz r0, miss\n  const r0, 1\n  halt r0\nmiss:\n  const r0, 0\n  halt r0\n\
                   .module str\nmatch:\n  xor r0, r0, r1\n  jnz r0, ne\n  const r0, 1\n  ret\nne:\n  const r0, 0\n  ret\n";
        let p = prog(src);
        let inputs = file_inputs(b"X");

        // Build a map from a concrete pre-run that enters the library.
        let seed = file_inputs(b"A");
        let (text, _) = interp::record_replay(&p, &seed, 10_000).unwrap();
        let trace = interp::trace_from_text(&text, &p).unwrap();
        let map = crate::search::build_map(std::slice::from_ref(&trace), &p).unwrap();

        let run = execute_concolic_with(
            &p,
            &inputs,
            &SymbolicMarks::one("file"),
            &ExternalPolicy::Mapped(map),
            &ConcolicOptions { fuel: 10_000, check: ConsistencyCheck::Full },
        )
        .unwrap();
        assert_eq!(run.outcome, ConcolicOutcome::Halted(0));
        // The library's internal branch contributed a symbolic constraint.
        assert_eq!(run.path.len(), 1);
        let flipped = negate_at(&run.path, 0).unwrap();
        let SolveResult::Sat(a) = solve(&flipped, &SolverBudget::default()) else {
            panic!("expected sat");
        };
        assert_eq!(a[&Var::new("file", 0)], 0x41);
    }

    #[test]
    fn mapped_policy_refuses_unmapped_library() {
        let src = ".module main\nmain:\n  const r1, 0x1000\n  load8 r0, [r1]\n  xcall str.id\n  halt r0\n\
                   .module str\nid:\n  ret\n";
        let inputs = file_inputs(b"Q");
        let (_, run) =
            run_concolic(src, &inputs, &ExternalPolicy::Mapped(ExecutionMap::default()));
        assert!(matches!(run.outcome, ConcolicOutcome::PolicyHalt { .. }));
    }

    #[test]
    fn symbolic_address_load_pins_the_address() {
        // file[0] indexes a table; the address is concretized and pinned.
        let src = "main:\n  const r1, 0x1000\n  load8 r2, [r1]\n  const r3, 0x2000\n  add r3, r3, r2\n  load8 r4, [r3]\n  halt r4\n";
        let p = prog(src);
        let inputs = InputImage::new()
            .with_region("file", 0x1000, vec![2])
            .with_region("table", 0x2000, vec![10, 20, 30, 40]);
        let run = execute_concolic_with(
            &p,
            &inputs,
            &SymbolicMarks::one("file"),
            &ExternalPolicy::Halt,
            &ConcolicOptions { fuel: 10_000, check: ConsistencyCheck::Full },
        )
        .unwrap();
        assert_eq!(run.outcome, ConcolicOutcome::Halted(30));
        let pins: Vec<_> = run
            .path
            .entries
            .iter()
            .filter(|e| e.kind == ConstraintKind::AddressPin)
            .collect();
        assert_eq!(pins.len(), 1);
        // The pin forces file[0] == 2 on replayed witnesses.
        let mut a = Assignment::new();
        a.insert(Var::new("file", 0), 2);
        assert!(run.path.satisfied_by(&a).unwrap());
        a.insert(Var::new("file", 0), 3);
        assert!(!run.path.satisfied_by(&a).unwrap());
    }

    #[test]
    fn eq_and_lt_instructions_shadow_correctly() {
        // The Full consistency check validates the comparison encodings; the
        // solver closes the loop by finding the matching byte.
        let src = "main:\n  const r1, 0x1000\n  load8 r2, [r1]\n  eq r3, r2, 0x41\n  jz r3, miss\n  const r0, 1\n  halt r0\nmiss:\n  lt r4, r2, 0x30\n  jz r4, big\n  const r0, 2\n  halt r0\nbig:\n  const r0, 3\n  halt r0\n";
        let inputs = file_inputs(b"Z");
        let (p, run) = run_concolic(src, &inputs, &ExternalPolicy::Halt);
        assert_eq!(run.outcome, ConcolicOutcome::Halted(3));
        assert_eq!(run.path.len(), 2);
        // Flip the first branch: file[0] == 0x41.
        let flipped = negate_at(&run.path, 0).unwrap();
        let SolveResult::Sat(a) = solve(&flipped, &SolverBudget::default()) else {
            panic!("expected sat");
        };
        assert_eq!(a[&Var::new("file", 0)], 0x41);
        let patched = inputs.patched(&a);
        let (st, _) = interp::run(&p, interp::load_image(&p, &patched).unwrap(), 10_000);
        assert_eq!(st.status, Status::Halted(1));
        // Flip the second: file[0] < 0x30 while != 0x41.
        let flipped = negate_at(&run.path, 1).unwrap();
        let SolveResult::Sat(a) = solve(&flipped, &SolverBudget::default()) else {
            panic!("expected sat");
        };
        let patched = inputs.patched(&a);
        let (st, _) = interp::run(&p, interp::load_image(&p, &patched).unwrap(), 10_000);
        assert_eq!(st.status, Status::Halted(2));
    }

    #[test]
    fn store_overwrites_and_clears_shadow() {
        // Writing a constant over a symbolic byte makes later loads concrete.
        let src = "main:\n  const r1, 0x1000\n  const r2, 0x7F\n  store8 [r1], r2\n  load8 r3, [r1]\n  jz r3, z\n  halt r3\nz:\n  halt r0\n";
        let inputs = file_inputs(b"S");
        let (_, run) = run_concolic(src, &inputs, &ExternalPolicy::Halt);
        assert_eq!(run.outcome, ConcolicOutcome::Halted(0x7F));
        assert!(run.path.is_empty(), "branch on overwritten byte is concrete");
    }

    #[test]
    fn unknown_marked_region_is_an_error() {
        let p = prog(CHECK_BYTE);
        let err = execute_concolic(
            &p,
            &InputImage::new(),
            &SymbolicMarks::one("file"),
            &ExternalPolicy::Halt,
            100,
        );
        assert!(matches!(err, Err(ConcolicError::UnknownRegion(_))));
    }
}
