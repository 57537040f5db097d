//! Concrete execution: input images mapped into memory, a fuel-limited run
//! loop, and trace recording for replay and map building.

mod trace;

pub use trace::{
    trace_from_text, trace_to_text, Trace, TraceBuilder, TraceEvent, TraceParseError, XcallVia,
};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::isa::{Instruction, MemRef, MemWidth, Operand, Pc, Program, Reg};
use crate::symexpr::Assignment;

/// Base of the input table: for region `i`, the words at `0x0F00 + 8*i`
/// hold its base address and length. Programs read these instead of
/// hard-coding layouts.
pub const INPUT_TABLE_ADDR: u32 = 0x0F00;

pub const DEFAULT_FUEL: u64 = 1_000_000;
pub const MAX_CALL_DEPTH: usize = 1024;

/// One named byte region mapped at a fixed base address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub base: u32,
    pub bytes: Vec<u8>,
}

/// The inputs a run maps into memory. Region order is meaningful: it fixes
/// input-table slots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InputImage {
    pub regions: Vec<Region>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("regions '{a}' and '{b}' overlap")]
    Overlap { a: String, b: String },
    #[error("region '{name}' does not fit in the 32-bit address space")]
    OutOfRange { name: String },
    #[error("duplicate region name '{0}'")]
    DuplicateName(String),
}

impl InputImage {
    pub fn new() -> InputImage {
        InputImage::default()
    }

    pub fn with_region(mut self, name: &str, base: u32, bytes: Vec<u8>) -> InputImage {
        self.regions.push(Region { name: name.to_string(), base, bytes });
        self
    }

    /// A single region filled with one byte value.
    pub fn filled(name: &str, base: u32, len: usize, fill: u8) -> InputImage {
        InputImage::new().with_region(name, base, vec![fill; len])
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        let mut spans: Vec<(u64, u64, &str)> = Vec::new();
        for r in &self.regions {
            if self.regions.iter().filter(|o| o.name == r.name).count() > 1 {
                return Err(ImageError::DuplicateName(r.name.clone()));
            }
            let end = r.base as u64 + r.bytes.len() as u64;
            if end > u32::MAX as u64 + 1 {
                return Err(ImageError::OutOfRange { name: r.name.clone() });
            }
            spans.push((r.base as u64, end, &r.name));
        }
        let mut sorted = spans.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            let (_, end_a, name_a) = w[0];
            let (start_b, _, name_b) = w[1];
            if start_b < end_a {
                return Err(ImageError::Overlap { a: name_a.to_string(), b: name_b.to_string() });
            }
        }
        Ok(())
    }

    /// Copy of this image with assignment bytes written over region bytes.
    pub fn patched(&self, a: &Assignment) -> InputImage {
        let mut out = self.clone();
        for (var, &value) in a {
            if let Some(r) = out.regions.iter_mut().find(|r| *r.name == *var.region) {
                if let Some(slot) = r.bytes.get_mut(var.index as usize) {
                    *slot = value;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultReason {
    /// A load touched memory never written by the image or the program.
    InvalidAddress(u32),
    StackOverflow,
    StackUnderflow,
    /// Control fell past the end of a module.
    PcOutOfRange,
}

impl fmt::Display for FaultReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultReason::InvalidAddress(a) => write!(f, "invalid address 0x{a:x}"),
            FaultReason::StackOverflow => write!(f, "stack overflow"),
            FaultReason::StackUnderflow => write!(f, "return with empty stack"),
            FaultReason::PcOutOfRange => write!(f, "pc out of range"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Running,
    Halted(u32),
    Fault { reason: FaultReason, pc: Pc },
    /// An external call could not be resolved or bound to a native helper.
    UnresolvedExternal { symbol: String, pc: Pc },
}

impl Status {
    pub fn is_running(&self) -> bool {
        matches!(self, Status::Running)
    }

    pub fn is_fault(&self) -> bool {
        matches!(self, Status::Fault { .. } | Status::UnresolvedExternal { .. })
    }
}

/// The concrete machine: registers, program counter, sparse memory, call
/// stack, and run status. A `Running` state returned from `run` means the
/// fuel limit was reached; the state can be resumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub regs: [u32; 8],
    pub pc: Pc,
    pub memory: BTreeMap<u32, u8>,
    pub call_stack: Vec<Pc>,
    pub status: Status,
}

impl MachineState {
    pub fn read_u8(&self, addr: u32) -> Result<u8, FaultReason> {
        self.memory
            .get(&addr)
            .copied()
            .ok_or(FaultReason::InvalidAddress(addr))
    }

    pub fn read_u32(&self, addr: u32) -> Result<u32, FaultReason> {
        let mut v = 0u32;
        for k in 0..4 {
            v |= (self.read_u8(addr.wrapping_add(k))? as u32) << (8 * k);
        }
        Ok(v)
    }

    pub fn write_u8(&mut self, addr: u32, value: u8) {
        self.memory.insert(addr, value);
    }

    pub fn write_u32(&mut self, addr: u32, value: u32) {
        for k in 0..4 {
            self.write_u8(addr.wrapping_add(k), (value >> (8 * k)) as u8);
        }
    }

    pub fn reg(&self, r: Reg) -> u32 {
        self.regs[r.index()]
    }

    pub fn set_reg(&mut self, r: Reg, v: u32) {
        self.regs[r.index()] = v;
    }

    pub fn operand(&self, op: Operand) -> u32 {
        match op {
            Operand::Reg(r) => self.reg(r),
            Operand::Imm(v) => v as u32,
        }
    }

    pub fn effective_addr(&self, mem: MemRef) -> u32 {
        self.reg(mem.base).wrapping_add(mem.offset as u32)
    }
}

/// Map inputs into a fresh machine state: region bytes at their bases,
/// (base, length) pairs in the input table, registers zeroed, pc at entry.
pub fn load_image(program: &Program, inputs: &InputImage) -> Result<MachineState, ImageError> {
    inputs.validate()?;
    let mut state = MachineState {
        regs: [0; 8],
        pc: program.entry(),
        memory: BTreeMap::new(),
        call_stack: Vec::new(),
        status: Status::Running,
    };
    for (i, region) in inputs.regions.iter().enumerate() {
        for (k, &b) in region.bytes.iter().enumerate() {
            state.write_u8(region.base.wrapping_add(k as u32), b);
        }
        let slot = INPUT_TABLE_ADDR + 8 * i as u32;
        state.write_u32(slot, region.base);
        state.write_u32(slot + 4, region.bytes.len() as u32);
    }
    Ok(state)
}

/// Native helpers unresolved `xcall` symbols may bind to. Arguments are
/// `r0..r3`; results land in `r0`.
pub fn native_symbols() -> &'static [&'static str] {
    &["sys.memcmp", "sys.memset"]
}

/// Runs a native helper; `None` when the symbol has no binding.
pub fn run_native(symbol: &str, state: &mut MachineState) -> Option<Result<(), FaultReason>> {
    match symbol {
        "sys.memcmp" => Some(native_memcmp(state)),
        "sys.memset" => Some(native_memset(state)),
        _ => None,
    }
}

fn native_memcmp(state: &mut MachineState) -> Result<(), FaultReason> {
    let (a, b, n) = (state.regs[0], state.regs[1], state.regs[2]);
    let mut result = 0;
    for k in 0..n {
        let x = state.read_u8(a.wrapping_add(k))?;
        let y = state.read_u8(b.wrapping_add(k))?;
        if x != y {
            result = 1;
            break;
        }
    }
    state.regs[0] = result;
    Ok(())
}

fn native_memset(state: &mut MachineState) -> Result<(), FaultReason> {
    let (dst, fill, n) = (state.regs[0], state.regs[1], state.regs[2]);
    for k in 0..n {
        state.write_u8(dst.wrapping_add(k), fill as u8);
    }
    Ok(())
}

/// Frame bookkeeping for result patching of library xcalls.
struct Frame {
    xcall_token: Option<usize>,
}

/// Execute until halt, fault, or fuel exhaustion. Deterministic; the trace
/// covers exactly the executed prefix.
pub fn run(program: &Program, mut state: MachineState, fuel: u64) -> (MachineState, Trace) {
    let cfg = program.cfg();
    let mut tb = TraceBuilder::new();
    // Frames for calls made before this run are unknown; treat them as
    // plain calls.
    let mut frames: Vec<Frame> =
        state.call_stack.iter().map(|_| Frame { xcall_token: None }).collect();

    if state.status.is_running() {
        tb.enter_pc(cfg, state.pc);
    }

    let mut remaining = fuel;
    while state.status.is_running() && remaining > 0 {
        remaining -= 1;
        step(program, &mut state, &mut tb, &mut frames);
    }
    (state, tb.finish())
}

fn step(
    program: &Program,
    state: &mut MachineState,
    tb: &mut TraceBuilder,
    frames: &mut Vec<Frame>,
) {
    let cfg = program.cfg();
    let pc = state.pc;
    let module = program.module(pc.module);
    let Some(instr) = module.instructions.get(pc.index) else {
        state.status = Status::Fault { reason: FaultReason::PcOutOfRange, pc };
        return;
    };
    tb.count_step();

    let mut next = Pc::new(pc.module, pc.index + 1);
    match instr {
        Instruction::Const { dst, imm } => state.set_reg(*dst, *imm as u32),
        Instruction::Mov { dst, src } => state.set_reg(*dst, state.reg(*src)),
        Instruction::Alu { op, dst, lhs, rhs } => {
            let a = state.operand(*lhs);
            let b = state.operand(*rhs);
            state.set_reg(*dst, op.apply(a, b));
        }
        Instruction::Load { width, dst, mem } => {
            let addr = state.effective_addr(*mem);
            let value = match width {
                MemWidth::Byte => state.read_u8(addr).map(u32::from),
                MemWidth::Word => state.read_u32(addr),
            };
            match value {
                Ok(v) => state.set_reg(*dst, v),
                Err(reason) => {
                    state.status = Status::Fault { reason, pc };
                    return;
                }
            }
        }
        Instruction::Store { width, mem, src } => {
            let addr = state.effective_addr(*mem);
            let v = state.reg(*src);
            match width {
                MemWidth::Byte => state.write_u8(addr, v as u8),
                MemWidth::Word => state.write_u32(addr, v),
            }
        }
        Instruction::Jmp { target } => next = Pc::new(pc.module, *target),
        Instruction::Branch { on_zero, cond, target } => {
            let zero = state.reg(*cond) == 0;
            let taken = zero == *on_zero;
            tb.record_branch(pc, taken);
            if taken {
                next = Pc::new(pc.module, *target);
            }
        }
        Instruction::Call { target } => {
            if state.call_stack.len() >= MAX_CALL_DEPTH {
                state.status = Status::Fault { reason: FaultReason::StackOverflow, pc };
                return;
            }
            state.call_stack.push(next);
            frames.push(Frame { xcall_token: None });
            next = Pc::new(pc.module, *target);
        }
        Instruction::Ret => {
            let Some(ret) = state.call_stack.pop() else {
                state.status = Status::Fault { reason: FaultReason::StackUnderflow, pc };
                return;
            };
            if let Some(frame) = frames.pop() {
                if let Some(token) = frame.xcall_token {
                    tb.finish_xcall(token, state.regs[0]);
                }
            }
            next = ret;
        }
        Instruction::Xcall { symbol } => {
            let args = [state.regs[0], state.regs[1], state.regs[2], state.regs[3]];
            match program.resolve_symbol(symbol) {
                Some(entry) => {
                    if state.call_stack.len() >= MAX_CALL_DEPTH {
                        state.status = Status::Fault { reason: FaultReason::StackOverflow, pc };
                        return;
                    }
                    let lib = program.module_name(entry.module).to_string();
                    let token = tb.begin_xcall(pc, symbol, args, XcallVia::Library(lib.clone()));
                    tb.record_load(entry.module, &lib);
                    state.call_stack.push(next);
                    frames.push(Frame { xcall_token: Some(token) });
                    next = entry;
                }
                None => match run_native(symbol, state) {
                    Some(Ok(())) => {
                        let token = tb.begin_xcall(pc, symbol, args, XcallVia::Native);
                        tb.finish_xcall(token, state.regs[0]);
                    }
                    Some(Err(reason)) => {
                        state.status = Status::Fault { reason, pc };
                        return;
                    }
                    None => {
                        state.status = Status::UnresolvedExternal { symbol: symbol.clone(), pc };
                        return;
                    }
                },
            }
        }
        Instruction::Halt { code } => {
            state.status = Status::Halted(state.reg(*code));
            return;
        }
    }

    state.pc = next;
    tb.enter_pc(cfg, next);
}

/// Run and serialize the trace for map building. Faults are recorded in
/// the returned state, not raised: a faulting trace is still a map source.
pub fn record_replay(
    program: &Program,
    inputs: &InputImage,
    fuel: u64,
) -> Result<(String, MachineState), ImageError> {
    let state = load_image(program, inputs)?;
    let (state, trace) = run(program, state, fuel);
    Ok((trace_to_text(&trace, program), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    fn prog(src: &str) -> Program {
        parse_program(src).unwrap()
    }

    #[test]
    fn header_records_region_table() {
        let p = prog("main:\n  halt r0\n");
        let inputs = InputImage::new().with_region("file", 0x1000, vec![1, 2, 3]);
        let st = load_image(&p, &inputs).unwrap();
        assert_eq!(st.read_u8(0x1000).unwrap(), 1);
        assert_eq!(st.read_u8(0x1002).unwrap(), 3);
        assert_eq!(st.read_u32(INPUT_TABLE_ADDR).unwrap(), 0x1000);
        assert_eq!(st.read_u32(INPUT_TABLE_ADDR + 4).unwrap(), 3);
    }

    #[test]
    fn empty_image_still_has_no_regions_mapped() {
        let p = prog("main:\n  halt r0\n");
        let st = load_image(&p, &InputImage::new()).unwrap();
        assert!(st.memory.is_empty());
        assert_eq!(st.pc, p.entry());
    }

    #[test]
    fn overlapping_regions_rejected() {
        let p = prog("main:\n  halt r0\n");
        let inputs = InputImage::new()
            .with_region("a", 0x1000, vec![0; 8])
            .with_region("b", 0x1004, vec![0; 8]);
        assert!(matches!(load_image(&p, &inputs), Err(ImageError::Overlap { .. })));
    }

    #[test]
    fn const_halt_runs_to_exit_code() {
        let p = prog("main:\n  const r0, 7\n  halt r0\n");
        let st = load_image(&p, &InputImage::new()).unwrap();
        let (st, trace) = run(&p, st, DEFAULT_FUEL);
        assert_eq!(st.status, Status::Halted(7));
        assert_eq!(trace.blocks().count(), 1);
        assert_eq!(trace.steps, 2);
    }

    #[test]
    fn infinite_loop_exhausts_fuel() {
        let p = prog("main:\n  jmp main\n");
        let st = load_image(&p, &InputImage::new()).unwrap();
        let (st, trace) = run(&p, st, 1000);
        assert!(st.status.is_running());
        assert_eq!(trace.steps, 1000);
    }

    #[test]
    fn uninitialized_read_faults() {
        let p = prog("main:\n  load8 r0, [r1+64]\n  halt r0\n");
        let st = load_image(&p, &InputImage::new()).unwrap();
        let (st, _) = run(&p, st, DEFAULT_FUEL);
        assert!(matches!(
            st.status,
            Status::Fault { reason: FaultReason::InvalidAddress(64), .. }
        ));
    }

    #[test]
    fn unresolved_external_reports_symbol() {
        let p = prog("main:\n  xcall no.binding\n  halt r0\n");
        let st = load_image(&p, &InputImage::new()).unwrap();
        let (st, _) = run(&p, st, DEFAULT_FUEL);
        assert!(matches!(st.status, Status::UnresolvedExternal { .. }));
    }

    #[test]
    fn native_memcmp_compares_regions() {
        let src = "main:\n  const r0, 0x1000\n  const r1, 0x2000\n  const r2, 3\n  xcall sys.memcmp\n  halt r0\n";
        let p = prog(src);
        let inputs = InputImage::new()
            .with_region("a", 0x1000, vec![1, 2, 3])
            .with_region("b", 0x2000, vec![1, 2, 3]);
        let st = load_image(&p, &inputs).unwrap();
        let (st, trace) = run(&p, st, DEFAULT_FUEL);
        assert_eq!(st.status, Status::Halted(0));
        assert_eq!(trace.xcall_sites().count(), 1);

        let inputs = InputImage::new()
            .with_region("a", 0x1000, vec![1, 2, 3])
            .with_region("b", 0x2000, vec![1, 9, 3]);
        let st = load_image(&p, &inputs).unwrap();
        let (st, _) = run(&p, st, DEFAULT_FUEL);
        assert_eq!(st.status, Status::Halted(1));
    }

    #[test]
    fn library_xcall_executes_inline_and_records_result() {
        let src = ".module main\nmain:\n  const r0, 20\n  const r1, 22\n  xcall math.sum\n  halt r0\n\
                   .module math\nsum:\n  add r0, r0, r1\n  ret\n";
        let p = prog(src);
        let st = load_image(&p, &InputImage::new()).unwrap();
        let (st, trace) = run(&p, st, DEFAULT_FUEL);
        assert_eq!(st.status, Status::Halted(42));
        assert_eq!(trace.loads().collect::<Vec<_>>(), vec!["math"]);
        let xcall = trace
            .events
            .iter()
            .find_map(|e| match e {
                TraceEvent::Xcall { args, result, via, .. } => {
                    Some((args[0], *result, via.clone()))
                }
                _ => None,
            })
            .unwrap();
        assert_eq!(xcall, (20, 42, XcallVia::Library("math".to_string())));
    }

    #[test]
    fn deep_recursion_overflows_stack() {
        let p = prog("main:\n  call main\n  halt r0\n");
        let st = load_image(&p, &InputImage::new()).unwrap();
        let (st, _) = run(&p, st, DEFAULT_FUEL);
        assert!(matches!(
            st.status,
            Status::Fault { reason: FaultReason::StackOverflow, .. }
        ));
    }

    #[test]
    fn determinism_bit_identical_runs() {
        let src = "main:\n  const r1, 0x1000\n  load8 r2, [r1]\n  jz r2, z\n  const r0, 1\n  halt r0\nz:\n  const r0, 0\n  halt r0\n";
        let p = prog(src);
        let inputs = InputImage::new().with_region("file", 0x1000, vec![5]);
        let a = run(&p, load_image(&p, &inputs).unwrap(), DEFAULT_FUEL);
        let b = run(&p, load_image(&p, &inputs).unwrap(), DEFAULT_FUEL);
        assert_eq!(a, b);
    }

    #[test]
    fn fuel_prefix_property() {
        let src = "main:\nloop:\n  add r1, r1, 1\n  lt r2, r1, 100\n  jnz r2, loop\n  halt r1\n";
        let p = prog(src);
        let full = run(&p, load_image(&p, &InputImage::new()).unwrap(), DEFAULT_FUEL).1;
        for fuel in [1u64, 7, 50, 200] {
            let part = run(&p, load_image(&p, &InputImage::new()).unwrap(), fuel).1;
            assert!(part.events.len() <= full.events.len());
            assert_eq!(part.events[..], full.events[..part.events.len()]);
        }
    }

    #[test]
    fn trace_text_round_trips() {
        let src = ".module main\nmain:\n  const r0, 1\n  const r1, 1\n  xcall str.match\n  jz r0, fin\nfin:\n  halt r0\n\
                   .module str\nmatch:\n  eq r0, r0, r1\n  ret\n";
        let p = prog(src);
        let (st, trace) = run(&p, load_image(&p, &InputImage::new()).unwrap(), DEFAULT_FUEL);
        assert_eq!(st.status, Status::Halted(1));
        let text = trace_to_text(&trace, &p);
        let parsed = trace_from_text(&text, &p).unwrap();
        assert_eq!(parsed.events, trace.events);
    }

    #[test]
    fn trace_mismatch_detected() {
        let p = prog("main:\n  halt r0\n");
        let text = "trace v1\nblock other:0\n";
        assert!(matches!(
            trace_from_text(text, &p),
            Err(TraceParseError::Mismatch { .. })
        ));
    }

    #[test]
    fn patched_inputs_overwrite_bytes() {
        use crate::symexpr::Var;
        let image = InputImage::filled("file", 0x1000, 4, 0x58);
        let mut a = Assignment::new();
        a.insert(Var::new("file", 2), 0x41);
        let patched = image.patched(&a);
        assert_eq!(patched.region("file").unwrap().bytes, vec![0x58, 0x58, 0x41, 0x58]);
    }
}
