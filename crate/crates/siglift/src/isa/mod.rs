//! Bytecode ISA: instructions, module images, linked programs, and the
//! control-flow graph built over them.
//!
//! The machine is a 32-bit register machine with eight registers and
//! byte-addressable memory. Programs are one `main` module plus any number
//! of named library modules; `xcall lib.fn` calls cross module boundaries
//! and resolve lazily against library exports.

mod asm;
mod cfg;

pub use asm::{assemble, disassemble, AsmError};
pub use cfg::{build_cfg, Block, BlockId, Cfg, EdgeKind};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

/// One of the eight general-purpose registers, `r0`..`r7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    pub fn new(n: u8) -> Option<Reg> {
        (n < 8).then_some(Reg(n))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Register-or-immediate source operand for ALU instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Reg(Reg),
    Imm(i32),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

/// `[base+offset]` memory operand. The offset is a signed displacement;
/// the effective address wraps modulo 2^32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRef {
    pub base: Reg,
    pub offset: i32,
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.offset == 0 {
            write!(f, "[{}]", self.base)
        } else if self.offset < 0 {
            write!(f, "[{}{}]", self.base, self.offset)
        } else {
            write!(f, "[{}+{}]", self.base, self.offset)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Lt,
}

impl AluOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Mul => "mul",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
            AluOp::Shl => "shl",
            AluOp::Shr => "shr",
            AluOp::Eq => "eq",
            AluOp::Lt => "lt",
        }
    }

    /// Concrete semantics at 32 bits. Shifts mask the amount to `[0,31]`;
    /// comparisons produce 0/1 words; `lt` is unsigned.
    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
            AluOp::Shl => a << (b & 31),
            AluOp::Shr => a >> (b & 31),
            AluOp::Eq => (a == b) as u32,
            AluOp::Lt => (a < b) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemWidth {
    Byte,
    Word,
}

/// A single decoded instruction. Branch and call targets are resolved
/// instruction indices within the owning module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    Const { dst: Reg, imm: i32 },
    Mov { dst: Reg, src: Reg },
    Alu { op: AluOp, dst: Reg, lhs: Operand, rhs: Operand },
    Load { width: MemWidth, dst: Reg, mem: MemRef },
    Store { width: MemWidth, mem: MemRef, src: Reg },
    Jmp { target: usize },
    /// `jz` (`on_zero`) or `jnz`: conditional branch on a register.
    Branch { on_zero: bool, cond: Reg, target: usize },
    Call { target: usize },
    Ret,
    Xcall { symbol: String },
    Halt { code: Reg },
}

impl Instruction {
    /// True for instructions that end a basic block.
    pub fn is_block_end(&self) -> bool {
        matches!(
            self,
            Instruction::Jmp { .. }
                | Instruction::Branch { .. }
                | Instruction::Call { .. }
                | Instruction::Ret
                | Instruction::Xcall { .. }
                | Instruction::Halt { .. }
        )
    }

    /// Branch/call target, if any.
    pub fn target(&self) -> Option<usize> {
        match self {
            Instruction::Jmp { target }
            | Instruction::Branch { target, .. }
            | Instruction::Call { target } => Some(*target),
            _ => None,
        }
    }
}

/// An assembled module: named instruction sequence with resolved labels.
///
/// Every label is exported; `link` resolves `xcall` symbols against the
/// exports of registered libraries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleImage {
    pub name: String,
    pub instructions: Vec<Instruction>,
    /// Label name to instruction index. Indices may equal the instruction
    /// count (a trailing label); branching there faults at run time.
    pub labels: BTreeMap<String, usize>,
    pub exports: BTreeSet<String>,
}

impl ModuleImage {
    pub fn label(&self, name: &str) -> Option<usize> {
        self.labels.get(name).copied()
    }
}

/// Program counter: module id (0 = main, libraries follow in name order)
/// plus instruction index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pc {
    pub module: usize,
    pub index: usize,
}

impl Pc {
    pub fn new(module: usize, index: usize) -> Pc {
        Pc { module, index }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkError {
    #[error("duplicate library name '{0}'")]
    DuplicateLibrary(String),
    #[error("main module has no 'main' entry label")]
    MissingEntry,
    #[error("library '{lib}' exports '{name}' but has no such label")]
    ExportWithoutLabel { lib: String, name: String },
}

/// A linked program: the main module plus its libraries.
///
/// `xcall` symbols that match a library export are resolved at link time;
/// the rest stay unresolved, which is legal. They may bind to a native
/// helper when the call executes, or fault.
#[derive(Debug, Clone)]
pub struct Program {
    pub main: ModuleImage,
    pub libraries: BTreeMap<String, ModuleImage>,
    resolutions: BTreeMap<String, Option<Pc>>,
    cfg: OnceLock<Cfg>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.main == other.main && self.libraries == other.libraries
    }
}

impl Program {
    /// Number of modules (main + libraries).
    pub fn module_count(&self) -> usize {
        1 + self.libraries.len()
    }

    pub fn module(&self, id: usize) -> &ModuleImage {
        if id == 0 {
            &self.main
        } else {
            self.libraries
                .values()
                .nth(id - 1)
                .expect("module id out of range")
        }
    }

    pub fn module_id(&self, name: &str) -> Option<usize> {
        if name == self.main.name {
            return Some(0);
        }
        self.libraries
            .keys()
            .position(|k| k == name)
            .map(|i| i + 1)
    }

    pub fn module_name(&self, id: usize) -> &str {
        &self.module(id).name
    }

    /// Entry point: the `main` label of the main module.
    pub fn entry(&self) -> Pc {
        Pc::new(0, self.main.label("main").expect("checked at link time"))
    }

    /// Where an `xcall` symbol lands, if it resolved at link time.
    pub fn resolve_symbol(&self, symbol: &str) -> Option<Pc> {
        self.resolutions.get(symbol).copied().flatten()
    }

    /// Symbols that did not resolve against any library export.
    pub fn unresolved_symbols(&self) -> Vec<&str> {
        self.resolutions
            .iter()
            .filter(|(_, pc)| pc.is_none())
            .map(|(s, _)| s.as_str())
            .collect()
    }

    /// The control-flow graph, built on first use.
    pub fn cfg(&self) -> &Cfg {
        self.cfg.get_or_init(|| build_cfg(self))
    }

    pub fn instruction(&self, pc: Pc) -> Option<&Instruction> {
        self.module(pc.module).instructions.get(pc.index)
    }

    /// Find a label anywhere in the program. Returns an error string when
    /// the label is missing or ambiguous across modules.
    pub fn find_label(&self, label: &str) -> Result<Pc, String> {
        let mut hits = Vec::new();
        if let Some(idx) = self.main.label(label) {
            hits.push(Pc::new(0, idx));
        }
        for (i, lib) in self.libraries.values().enumerate() {
            if let Some(idx) = lib.label(label) {
                hits.push(Pc::new(i + 1, idx));
            }
        }
        match hits.len() {
            0 => Err(format!("label '{label}' not found in program")),
            1 => Ok(hits[0]),
            _ => Err(format!(
                "label '{label}' is ambiguous; qualify it as '<module>:{label}'"
            )),
        }
    }
}

/// Link a main module against a set of libraries.
///
/// Unresolved `xcall` symbols are recorded, not rejected: resolution is
/// a property of the call, and a symbol may legitimately bind to a native
/// helper only once execution reaches it.
pub fn link(main: ModuleImage, libs: Vec<ModuleImage>) -> Result<Program, LinkError> {
    let mut libraries = BTreeMap::new();
    for lib in libs {
        if lib.name == main.name || libraries.contains_key(&lib.name) {
            return Err(LinkError::DuplicateLibrary(lib.name));
        }
        libraries.insert(lib.name.clone(), lib);
    }
    if main.label("main").is_none() {
        return Err(LinkError::MissingEntry);
    }

    let mut resolutions = BTreeMap::new();
    let modules: Vec<&ModuleImage> =
        std::iter::once(&main).chain(libraries.values()).collect();
    for module in &modules {
        for instr in &module.instructions {
            let Instruction::Xcall { symbol } = instr else {
                continue;
            };
            if resolutions.contains_key(symbol) {
                continue;
            }
            let resolved = match symbol.split_once('.') {
                Some((lib, func)) => match libraries.get(lib) {
                    Some(image) if image.exports.contains(func) => {
                        let index = image.label(func).ok_or_else(|| {
                            LinkError::ExportWithoutLabel {
                                lib: lib.to_string(),
                                name: func.to_string(),
                            }
                        })?;
                        let id = libraries.keys().position(|k| k == lib).unwrap() + 1;
                        Some(Pc::new(id, index))
                    }
                    _ => None,
                },
                None => None,
            };
            resolutions.insert(symbol.clone(), resolved);
        }
    }

    Ok(Program {
        main,
        libraries,
        resolutions,
        cfg: OnceLock::new(),
    })
}

#[derive(Debug, Error)]
pub enum ProgramParseError {
    #[error("{module}: {source}")]
    Assembly {
        module: String,
        #[source]
        source: AsmError,
    },
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("program has no 'main' module")]
    NoMain,
    #[error("duplicate module '{0}'")]
    DuplicateModule(String),
    #[error("bad module header '{header}' (line {line})")]
    BadHeader { header: String, line: usize },
}

/// Parse a multi-module program source.
///
/// `.module <name>` lines open a new module section; text before the first
/// header belongs to module `main`. A file without headers is a bare main
/// module.
pub fn parse_program(source: &str) -> Result<Program, ProgramParseError> {
    let mut sections: Vec<(String, usize, Vec<&str>)> = Vec::new();
    let mut current: Option<(String, usize, Vec<&str>)> = None;

    for (lineno, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix(".module") {
            let name = rest.trim();
            if name.is_empty() || !asm::is_ident(name) {
                return Err(ProgramParseError::BadHeader {
                    header: line.to_string(),
                    line: lineno + 1,
                });
            }
            if let Some(sec) = current.take() {
                sections.push(sec);
            }
            current = Some((name.to_string(), lineno + 1, Vec::new()));
        } else {
            match current.as_mut() {
                Some((_, _, lines)) => lines.push(raw),
                None => {
                    // Implicit main section before any header.
                    current = Some(("main".to_string(), 0, vec![raw]));
                }
            }
        }
    }
    if let Some(sec) = current.take() {
        sections.push(sec);
    }

    let mut main = None;
    let mut libs = Vec::new();
    let mut seen = BTreeSet::new();
    for (name, offset, lines) in sections {
        let body = lines.join("\n");
        // Skip an implicit main preamble that is only comments and blanks.
        let preamble_empty = lines
            .iter()
            .all(|l| l.split(';').next().unwrap_or("").trim().is_empty());
        if offset == 0 && preamble_empty {
            continue;
        }
        if !seen.insert(name.clone()) {
            return Err(ProgramParseError::DuplicateModule(name));
        }
        let image = assemble(&name, &body).map_err(|e| ProgramParseError::Assembly {
            module: name.clone(),
            source: e.with_line_offset(offset),
        })?;
        if name == "main" {
            main = Some(image);
        } else {
            libs.push(image);
        }
    }

    let main = main.ok_or(ProgramParseError::NoMain)?;
    Ok(link(main, libs)?)
}

/// Render a program back to multi-module source text. Output parses back
/// to an equal program.
pub fn program_text(program: &Program) -> String {
    let mut out = String::new();
    out.push_str(".module main\n");
    out.push_str(&disassemble(&program.main));
    for (name, lib) in &program.libraries {
        out.push_str(&format!("\n.module {name}\n"));
        out.push_str(&disassemble(lib));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn module(name: &str, src: &str) -> ModuleImage {
        assemble(name, src).unwrap()
    }

    #[test]
    fn link_resolves_exported_symbol() {
        let main = module("main", "main:\n  xcall str.match\n  halt r0\n");
        let lib = module("str", "match:\n  ret\n");
        let prog = link(main, vec![lib]).unwrap();
        assert_eq!(prog.resolve_symbol("str.match"), Some(Pc::new(1, 0)));
        assert!(prog.unresolved_symbols().is_empty());
    }

    #[test]
    fn link_leaves_unknown_symbol_unresolved() {
        let main = module("main", "main:\n  xcall str.match\n  halt r0\n");
        let prog = link(main, vec![]).unwrap();
        assert_eq!(prog.resolve_symbol("str.match"), None);
        assert_eq!(prog.unresolved_symbols(), vec!["str.match"]);
    }

    #[test]
    fn link_rejects_duplicate_library() {
        let main = module("main", "main:\n  halt r0\n");
        let a = module("str", "match:\n  ret\n");
        let b = module("str", "other:\n  ret\n");
        let err = link(main, vec![a, b]).unwrap_err();
        assert_eq!(err, LinkError::DuplicateLibrary("str".to_string()));
    }

    #[test]
    fn link_requires_entry_label() {
        let main = module("main", "start:\n  halt r0\n");
        assert_eq!(link(main, vec![]).unwrap_err(), LinkError::MissingEntry);
    }

    #[test]
    fn program_source_round_trips() {
        let src = ".module main\nmain:\n  const r0, 1\n  xcall str.match\n  halt r0\n\
                   \n.module str\nmatch:\n  xor r0, r0, r1\n  ret\n";
        let prog = parse_program(src).unwrap();
        let text = program_text(&prog);
        let again = parse_program(&text).unwrap();
        assert_eq!(prog, again);
    }

    #[test]
    fn bare_source_is_main_module() {
        let prog = parse_program("main:\n  halt r0\n").unwrap();
        assert_eq!(prog.main.name, "main");
        assert!(prog.libraries.is_empty());
    }

    #[test]
    fn find_label_reports_ambiguity() {
        let main = module("main", "main:\nspot:\n  halt r0\n");
        let lib = module("aux", "spot:\n  ret\n");
        let prog = link(main, vec![lib]).unwrap();
        assert!(prog.find_label("spot").is_err());
        assert!(prog.find_label("main").is_ok());
        assert!(prog.find_label("nowhere").is_err());
    }
}
