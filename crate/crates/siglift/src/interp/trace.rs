//! Execution traces and their line-oriented file format.
//!
//! ```text
//! trace v1
//! block main:0
//! branch main:5 1
//! xcall str.match 00000058 00000041 00000000 00000002 -> 00000001 via str
//! load str
//! ```
//!
//! Events appear in execution order. An `xcall` line sits at its call
//! site; for calls into library bytecode the result word is filled in when
//! the call returns (0 if it never does).

use std::collections::BTreeSet;

use thiserror::Error;

use crate::isa::{BlockId, Cfg, Instruction, Pc, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XcallVia {
    Library(String),
    Native,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Block(BlockId),
    Branch { pc: Pc, taken: bool },
    Xcall { pc: Pc, symbol: String, args: [u32; 4], result: u32, via: XcallVia },
    Load { library: String },
}

/// What one execution did: blocks entered, branches decided, external
/// calls made, libraries first entered. Also counts instructions executed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub steps: u64,
}

impl Trace {
    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Block(b) => Some(*b),
            _ => None,
        })
    }

    pub fn branches(&self) -> impl Iterator<Item = (Pc, bool)> + '_ {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Branch { pc, taken } => Some((*pc, *taken)),
            _ => None,
        })
    }

    pub fn branch_records(&self) -> Vec<(Pc, bool)> {
        self.branches().collect()
    }

    pub fn loads(&self) -> impl Iterator<Item = &str> + '_ {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Load { library } => Some(library.as_str()),
            _ => None,
        })
    }

    pub fn xcall_sites(&self) -> impl Iterator<Item = (Pc, &str)> + '_ {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Xcall { pc, symbol, .. } => Some((*pc, symbol.as_str())),
            _ => None,
        })
    }
}

/// Builds a trace during execution; shared by the concrete interpreter and
/// the concolic executor so both record events identically.
#[derive(Debug)]
pub struct TraceBuilder {
    trace: Trace,
    seen_libs: BTreeSet<usize>,
}

impl TraceBuilder {
    pub fn new() -> TraceBuilder {
        TraceBuilder { trace: Trace::default(), seen_libs: BTreeSet::new() }
    }

    /// Record a block entry when `pc` is a block leader.
    pub fn enter_pc(&mut self, cfg: &Cfg, pc: Pc) {
        if let Some(b) = cfg.block_starting(pc) {
            self.trace.events.push(TraceEvent::Block(b));
        }
    }

    pub fn record_branch(&mut self, pc: Pc, taken: bool) {
        self.trace.events.push(TraceEvent::Branch { pc, taken });
    }

    /// Record an external call; returns a token to patch the result later.
    pub fn begin_xcall(&mut self, pc: Pc, symbol: &str, args: [u32; 4], via: XcallVia) -> usize {
        self.trace.events.push(TraceEvent::Xcall {
            pc,
            symbol: symbol.to_string(),
            args,
            result: 0,
            via,
        });
        self.trace.events.len() - 1
    }

    pub fn finish_xcall(&mut self, token: usize, result: u32) {
        if let Some(TraceEvent::Xcall { result: slot, .. }) = self.trace.events.get_mut(token) {
            *slot = result;
        }
    }

    /// Record the first entry into a library module.
    pub fn record_load(&mut self, module_id: usize, name: &str) {
        if self.seen_libs.insert(module_id) {
            self.trace.events.push(TraceEvent::Load { library: name.to_string() });
        }
    }

    pub fn count_step(&mut self) {
        self.trace.steps += 1;
    }

    pub fn steps(&self) -> u64 {
        self.trace.steps
    }

    pub fn finish(self) -> Trace {
        self.trace
    }
}

impl Default for TraceBuilder {
    fn default() -> Self {
        Self::new()
    }
}

pub fn trace_to_text(trace: &Trace, program: &Program) -> String {
    let cfg = program.cfg();
    let mut out = String::from("trace v1\n");
    for event in &trace.events {
        match event {
            TraceEvent::Block(b) => {
                let blk = cfg.block(*b);
                out.push_str(&format!(
                    "block {}:{}\n",
                    program.module_name(blk.module),
                    blk.start
                ));
            }
            TraceEvent::Branch { pc, taken } => {
                out.push_str(&format!(
                    "branch {}:{} {}\n",
                    program.module_name(pc.module),
                    pc.index,
                    u32::from(*taken)
                ));
            }
            TraceEvent::Xcall { pc: _, symbol, args, result, via } => {
                let via = match via {
                    XcallVia::Library(name) => name.as_str(),
                    XcallVia::Native => "native",
                };
                out.push_str(&format!(
                    "xcall {symbol} {:08x} {:08x} {:08x} {:08x} -> {result:08x} via {via}\n",
                    args[0], args[1], args[2], args[3]
                ));
            }
            TraceEvent::Load { library } => {
                out.push_str(&format!("load {library}\n"));
            }
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("trace parse error (line {line}): {msg}")]
    Bad { line: usize, msg: String },
    #[error("trace does not match program (line {line}): {msg}")]
    Mismatch { line: usize, msg: String },
}

fn bad(line: usize, msg: impl Into<String>) -> TraceParseError {
    TraceParseError::Bad { line, msg: msg.into() }
}

fn mismatch(line: usize, msg: impl Into<String>) -> TraceParseError {
    TraceParseError::Mismatch { line, msg: msg.into() }
}

fn parse_site<'a>(
    token: &'a str,
    program: &Program,
    line: usize,
) -> Result<(Pc, &'a str), TraceParseError> {
    let (module, index) = token
        .rsplit_once(':')
        .ok_or_else(|| bad(line, format!("bad site '{token}'")))?;
    let index: usize = index
        .parse()
        .map_err(|_| bad(line, format!("bad site index in '{token}'")))?;
    let id = program
        .module_id(module)
        .ok_or_else(|| mismatch(line, format!("unknown module '{module}'")))?;
    Ok((Pc::new(id, index), module))
}

fn parse_word(tok: &str, line: usize) -> Result<u32, TraceParseError> {
    u32::from_str_radix(tok, 16).map_err(|_| bad(line, format!("bad hex word '{tok}'")))
}

/// Parse a trace file, validating every reference against `program`.
///
/// Note: `steps` is not part of the file format and parses as 0.
pub fn trace_from_text(text: &str, program: &Program) -> Result<Trace, TraceParseError> {
    let cfg = program.cfg();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "trace v1")) => {}
        _ => return Err(bad(1, "missing 'trace v1' header")),
    }

    let mut trace = Trace::default();
    let mut last_block: Option<BlockId> = None;
    for (i, raw) in lines {
        let line = i + 1;
        let text = raw.trim();
        if text.is_empty() {
            continue;
        }
        let mut toks = text.split_whitespace();
        match toks.next() {
            Some("block") => {
                let site = toks.next().ok_or_else(|| bad(line, "block needs a site"))?;
                let (pc, _) = parse_site(site, program, line)?;
                let b = cfg
                    .block_starting(pc)
                    .ok_or_else(|| mismatch(line, format!("'{site}' is not a block start")))?;
                last_block = Some(b);
                trace.events.push(TraceEvent::Block(b));
            }
            Some("branch") => {
                let site = toks.next().ok_or_else(|| bad(line, "branch needs a site"))?;
                let taken = toks.next().ok_or_else(|| bad(line, "branch needs 0|1"))?;
                let (pc, _) = parse_site(site, program, line)?;
                if !matches!(program.instruction(pc), Some(Instruction::Branch { .. })) {
                    return Err(mismatch(line, format!("'{site}' is not a branch")));
                }
                let taken = match taken {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(line, format!("bad taken flag '{other}'"))),
                };
                trace.events.push(TraceEvent::Branch { pc, taken });
            }
            Some("xcall") => {
                let symbol = toks.next().ok_or_else(|| bad(line, "xcall needs a symbol"))?;
                let mut args = [0u32; 4];
                for a in &mut args {
                    let t = toks.next().ok_or_else(|| bad(line, "xcall needs 4 arg words"))?;
                    *a = parse_word(t, line)?;
                }
                if toks.next() != Some("->") {
                    return Err(bad(line, "xcall missing '->'"));
                }
                let result = parse_word(
                    toks.next().ok_or_else(|| bad(line, "xcall needs a result"))?,
                    line,
                )?;
                if toks.next() != Some("via") {
                    return Err(bad(line, "xcall missing 'via'"));
                }
                let via_tok = toks.next().ok_or_else(|| bad(line, "xcall needs a via"))?;
                let via = if via_tok == "native" {
                    XcallVia::Native
                } else {
                    if program.module_id(via_tok).is_none() {
                        return Err(mismatch(line, format!("unknown library '{via_tok}'")));
                    }
                    XcallVia::Library(via_tok.to_string())
                };
                // The line carries no site, but an xcall is always the last
                // instruction of the block entered most recently.
                let holder = last_block
                    .ok_or_else(|| mismatch(line, "xcall before any block"))?;
                let blk = cfg.block(holder);
                let pc = Pc::new(blk.module, blk.end - 1);
                match program.instruction(pc) {
                    Some(Instruction::Xcall { symbol: s }) if s == symbol => {}
                    _ => {
                        return Err(mismatch(
                            line,
                            format!("enclosing block does not end in 'xcall {symbol}'"),
                        ))
                    }
                }
                trace.events.push(TraceEvent::Xcall {
                    pc,
                    symbol: symbol.to_string(),
                    args,
                    result,
                    via,
                });
            }
            Some("load") => {
                let lib = toks.next().ok_or_else(|| bad(line, "load needs a library"))?;
                if program.module_id(lib).is_none() {
                    return Err(mismatch(line, format!("unknown library '{lib}'")));
                }
                trace.events.push(TraceEvent::Load { library: lib.to_string() });
            }
            Some(other) => return Err(bad(line, format!("unknown record '{other}'"))),
            None => {}
        }
        if toks.next().is_some() {
            return Err(bad(line, "trailing tokens"));
        }
    }
    Ok(trace)
}
