//! Textual assembly: two-pass assembler and the matching disassembler.
//!
//! Format: one instruction per line, `label:` lines, `;` comments,
//! comma-separated operands, registers `r0`-`r7`, immediates in decimal or
//! `0x` hex, memory operands `[rN]`/`[rN+imm]`/`[rN-imm]`, and external
//! symbols `lib.fn` after `xcall`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{AluOp, Instruction, MemRef, MemWidth, ModuleImage, Operand, Reg};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AsmError {
    #[error("syntax error (line {line}): {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate label '{label}' (line {line})")]
    DuplicateLabel { line: usize, label: String },
    #[error("undefined label '{label}' (line {line})")]
    UndefinedLabel { line: usize, label: String },
    #[error("register out of range '{token}' (line {line})")]
    RegisterRange { line: usize, token: String },
}

impl AsmError {
    /// Shift line numbers; used when a module is embedded in a larger file.
    pub fn with_line_offset(self, offset: usize) -> AsmError {
        match self {
            AsmError::Syntax { line, msg } => AsmError::Syntax { line: line + offset, msg },
            AsmError::DuplicateLabel { line, label } => {
                AsmError::DuplicateLabel { line: line + offset, label }
            }
            AsmError::UndefinedLabel { line, label } => {
                AsmError::UndefinedLabel { line: line + offset, label }
            }
            AsmError::RegisterRange { line, token } => {
                AsmError::RegisterRange { line: line + offset, token }
            }
        }
    }
}

pub(super) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn syntax(line: usize, msg: impl Into<String>) -> AsmError {
    AsmError::Syntax { line, msg: msg.into() }
}

fn parse_reg(tok: &str, line: usize) -> Result<Reg, AsmError> {
    let Some(digits) = tok.strip_prefix('r') else {
        return Err(syntax(line, format!("expected register, got '{tok}'")));
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(line, format!("expected register, got '{tok}'")));
    }
    let n: u32 = digits
        .parse()
        .map_err(|_| AsmError::RegisterRange { line, token: tok.to_string() })?;
    if n > 7 {
        return Err(AsmError::RegisterRange { line, token: tok.to_string() });
    }
    Ok(Reg::new(n as u8).unwrap())
}

/// Accepts decimal (optionally negative) and `0x` hex; the value is the
/// 32-bit two's-complement bit pattern.
fn parse_imm(tok: &str, line: usize) -> Result<i32, AsmError> {
    let bad = || syntax(line, format!("bad immediate '{tok}'"));
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    let value: i64 = if let Some(hexits) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        if hexits.is_empty() {
            return Err(bad());
        }
        i64::from_str_radix(hexits, 16).map_err(|_| bad())?
    } else {
        body.parse().map_err(|_| bad())?
    };
    let value = if neg { -value } else { value };
    if !(-(1i64 << 31)..(1i64 << 32)).contains(&value) {
        return Err(syntax(line, format!("immediate '{tok}' out of 32-bit range")));
    }
    Ok(value as u32 as i32)
}

fn parse_operand(tok: &str, line: usize) -> Result<Operand, AsmError> {
    if looks_like_reg(tok) {
        Ok(Operand::Reg(parse_reg(tok, line)?))
    } else {
        Ok(Operand::Imm(parse_imm(tok, line)?))
    }
}

fn looks_like_reg(tok: &str) -> bool {
    tok.strip_prefix('r')
        .map(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        .unwrap_or(false)
}

/// `[rN]`, `[rN+imm]`, `[rN-imm]`.
fn parse_mem(tok: &str, line: usize) -> Result<MemRef, AsmError> {
    let bad = || syntax(line, format!("bad memory operand '{tok}'"));
    let inner = tok
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(bad)?
        .trim();
    if inner.is_empty() || !inner.is_ascii() {
        return Err(bad());
    }
    let split = inner[1..].find(['+', '-']).map(|i| i + 1);
    let (base_tok, offset) = match split {
        Some(i) => {
            let (base, rest) = inner.split_at(i);
            let rest = rest.trim();
            let off = if let Some(r) = rest.strip_prefix('+') {
                parse_imm(r.trim(), line)?
            } else {
                parse_imm(rest, line)?
            };
            (base.trim(), off)
        }
        None => (inner, 0),
    };
    Ok(MemRef { base: parse_reg(base_tok, line)?, offset })
}

fn parse_symbol(tok: &str, line: usize) -> Result<String, AsmError> {
    match tok.split_once('.') {
        Some((lib, func)) if is_ident(lib) && is_ident(func) => Ok(tok.to_string()),
        _ => Err(syntax(line, format!("bad external symbol '{tok}' (expected lib.fn)"))),
    }
}

enum PendingTarget {
    Label { name: String, line: usize },
}

enum Pending {
    Done(Instruction),
    Jmp(PendingTarget),
    Branch { on_zero: bool, cond: Reg, target: PendingTarget },
    Call(PendingTarget),
}

/// Assemble one module from source text.
pub fn assemble(name: &str, source: &str) -> Result<ModuleImage, AsmError> {
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut pending: Vec<Pending> = Vec::new();

    for (lineno, raw) in source.lines().enumerate() {
        let line = lineno + 1;
        let text = raw.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }

        if let Some(label) = text.strip_suffix(':') {
            let label = label.trim();
            if !is_ident(label) {
                return Err(syntax(line, format!("bad label '{label}'")));
            }
            if labels.contains_key(label) {
                return Err(AsmError::DuplicateLabel { line, label: label.to_string() });
            }
            labels.insert(label.to_string(), pending.len());
            continue;
        }

        let (mnemonic, rest) = match text.split_once(char::is_whitespace) {
            Some((m, r)) => (m, r.trim()),
            None => (text, ""),
        };
        let ops: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(str::trim).collect()
        };
        if ops.iter().any(|o| o.is_empty()) {
            return Err(syntax(line, "empty operand"));
        }

        let arity = |n: usize| -> Result<(), AsmError> {
            if ops.len() == n {
                Ok(())
            } else {
                Err(syntax(
                    line,
                    format!("'{mnemonic}' takes {n} operand(s), got {}", ops.len()),
                ))
            }
        };
        let label_target = |tok: &str| -> Result<PendingTarget, AsmError> {
            if !is_ident(tok) {
                return Err(syntax(line, format!("bad branch target '{tok}'")));
            }
            Ok(PendingTarget::Label { name: tok.to_string(), line })
        };

        let alu = |op: AluOp| -> Result<Pending, AsmError> {
            arity(3)?;
            Ok(Pending::Done(Instruction::Alu {
                op,
                dst: parse_reg(ops[0], line)?,
                lhs: parse_operand(ops[1], line)?,
                rhs: parse_operand(ops[2], line)?,
            }))
        };

        let instr = match mnemonic {
            "const" => {
                arity(2)?;
                Pending::Done(Instruction::Const {
                    dst: parse_reg(ops[0], line)?,
                    imm: parse_imm(ops[1], line)?,
                })
            }
            "mov" => {
                arity(2)?;
                Pending::Done(Instruction::Mov {
                    dst: parse_reg(ops[0], line)?,
                    src: parse_reg(ops[1], line)?,
                })
            }
            "add" => alu(AluOp::Add)?,
            "sub" => alu(AluOp::Sub)?,
            "mul" => alu(AluOp::Mul)?,
            "and" => alu(AluOp::And)?,
            "or" => alu(AluOp::Or)?,
            "xor" => alu(AluOp::Xor)?,
            "shl" => alu(AluOp::Shl)?,
            "shr" => alu(AluOp::Shr)?,
            "eq" => alu(AluOp::Eq)?,
            "lt" => alu(AluOp::Lt)?,
            "load8" | "load32" => {
                arity(2)?;
                Pending::Done(Instruction::Load {
                    width: if mnemonic == "load8" { MemWidth::Byte } else { MemWidth::Word },
                    dst: parse_reg(ops[0], line)?,
                    mem: parse_mem(ops[1], line)?,
                })
            }
            "store8" | "store32" => {
                arity(2)?;
                Pending::Done(Instruction::Store {
                    width: if mnemonic == "store8" { MemWidth::Byte } else { MemWidth::Word },
                    mem: parse_mem(ops[0], line)?,
                    src: parse_reg(ops[1], line)?,
                })
            }
            "jmp" => {
                arity(1)?;
                Pending::Jmp(label_target(ops[0])?)
            }
            "jz" | "jnz" => {
                arity(2)?;
                Pending::Branch {
                    on_zero: mnemonic == "jz",
                    cond: parse_reg(ops[0], line)?,
                    target: label_target(ops[1])?,
                }
            }
            "call" => {
                arity(1)?;
                Pending::Call(label_target(ops[0])?)
            }
            "ret" => {
                arity(0)?;
                Pending::Done(Instruction::Ret)
            }
            "xcall" => {
                arity(1)?;
                Pending::Done(Instruction::Xcall { symbol: parse_symbol(ops[0], line)? })
            }
            "halt" => {
                arity(1)?;
                Pending::Done(Instruction::Halt { code: parse_reg(ops[0], line)? })
            }
            other => return Err(syntax(line, format!("unknown mnemonic '{other}'"))),
        };
        pending.push(instr);
    }

    let resolve = |t: PendingTarget| -> Result<usize, AsmError> {
        let PendingTarget::Label { name, line } = t;
        labels
            .get(&name)
            .copied()
            .ok_or(AsmError::UndefinedLabel { line, label: name })
    };

    let mut instructions = Vec::with_capacity(pending.len());
    for p in pending {
        instructions.push(match p {
            Pending::Done(i) => i,
            Pending::Jmp(t) => Instruction::Jmp { target: resolve(t)? },
            Pending::Branch { on_zero, cond, target } => {
                Instruction::Branch { on_zero, cond, target: resolve(target)? }
            }
            Pending::Call(t) => Instruction::Call { target: resolve(t)? },
        });
    }

    let exports: BTreeSet<String> = labels.keys().cloned().collect();
    Ok(ModuleImage { name: name.to_string(), instructions, labels, exports })
}

/// Render a module back to source text.
///
/// Label names are preserved; branch targets without a label get a
/// synthesized `L<index>` one. Output re-assembles to an equal module.
pub fn disassemble(module: &ModuleImage) -> String {
    let mut by_index: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (name, &idx) in &module.labels {
        by_index.entry(idx).or_default().push(name);
    }

    // Synthesize labels for unnamed branch targets (hand-built modules).
    let mut synth: BTreeMap<usize, String> = BTreeMap::new();
    for instr in &module.instructions {
        if let Some(t) = instr.target() {
            if !by_index.contains_key(&t) {
                synth.entry(t).or_insert_with(|| format!("L{t}"));
            }
        }
    }

    let target_name = |idx: usize| -> String {
        by_index
            .get(&idx)
            .map(|names| names[0].to_string())
            .unwrap_or_else(|| synth[&idx].clone())
    };

    let mut out = String::new();
    for (idx, instr) in module.instructions.iter().enumerate() {
        for name in by_index.get(&idx).into_iter().flatten() {
            out.push_str(name);
            out.push_str(":\n");
        }
        if let Some(name) = synth.get(&idx) {
            out.push_str(name);
            out.push_str(":\n");
        }
        let text = match instr {
            Instruction::Const { dst, imm } => format!("const {dst}, {imm}"),
            Instruction::Mov { dst, src } => format!("mov {dst}, {src}"),
            Instruction::Alu { op, dst, lhs, rhs } => {
                format!("{} {dst}, {lhs}, {rhs}", op.mnemonic())
            }
            Instruction::Load { width, dst, mem } => {
                let m = if *width == MemWidth::Byte { "load8" } else { "load32" };
                format!("{m} {dst}, {mem}")
            }
            Instruction::Store { width, mem, src } => {
                let m = if *width == MemWidth::Byte { "store8" } else { "store32" };
                format!("{m} {mem}, {src}")
            }
            Instruction::Jmp { target } => format!("jmp {}", target_name(*target)),
            Instruction::Branch { on_zero, cond, target } => {
                let m = if *on_zero { "jz" } else { "jnz" };
                format!("{m} {cond}, {}", target_name(*target))
            }
            Instruction::Call { target } => format!("call {}", target_name(*target)),
            Instruction::Ret => "ret".to_string(),
            Instruction::Xcall { symbol } => format!("xcall {symbol}"),
            Instruction::Halt { code } => format!("halt {code}"),
        };
        out.push_str("  ");
        out.push_str(&text);
        out.push('\n');
    }
    // Trailing labels point one past the last instruction.
    for name in by_index.get(&module.instructions.len()).into_iter().flatten() {
        out.push_str(name);
        out.push_str(":\n");
    }
    out
}
