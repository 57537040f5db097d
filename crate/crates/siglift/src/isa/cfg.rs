//! Basic-block control-flow graph over a linked program.
//!
//! Blocks follow the standard leader construction: leaders are instruction
//! 0 of each module, every branch/call target, and every instruction after
//! a control transfer. Call sites get `Call` edges to the callee entry and
//! `Return` edges from the callee's reachable `ret` blocks back to the
//! instruction after the call.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::{Instruction, Pc, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// Half-open instruction range `[start, end)` within one module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub module: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Fallthrough,
    Taken,
    Call,
    Return,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EdgeKind::Fallthrough => "fallthrough",
            EdgeKind::Taken => "taken",
            EdgeKind::Call => "call",
            EdgeKind::Return => "return",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    /// Blocks in deterministic order: by module id, then start index.
    pub blocks: Vec<Block>,
    pub edges: BTreeSet<(BlockId, BlockId, EdgeKind)>,
    starts: BTreeMap<(usize, usize), BlockId>,
}

impl Cfg {
    /// Block whose range contains `pc`.
    pub fn block_at(&self, pc: Pc) -> Option<BlockId> {
        self.blocks
            .iter()
            .position(|b| b.module == pc.module && b.start <= pc.index && pc.index < b.end)
            .map(BlockId)
    }

    /// Block starting exactly at `pc`, if `pc` is a leader.
    pub fn block_starting(&self, pc: Pc) -> Option<BlockId> {
        self.starts.get(&(pc.module, pc.index)).copied()
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0]
    }

    pub fn successors(&self, id: BlockId) -> impl Iterator<Item = (BlockId, EdgeKind)> + '_ {
        self.edges
            .range((id, BlockId(0), EdgeKind::Fallthrough)..=(id, BlockId(usize::MAX), EdgeKind::Return))
            .map(|&(_, to, kind)| (to, kind))
    }

    pub fn has_edge(&self, from: BlockId, to: BlockId) -> bool {
        self.successors(from).any(|(t, _)| t == to)
    }

    /// Predecessor adjacency, for reverse traversals.
    pub fn predecessors(&self) -> Vec<Vec<BlockId>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for &(from, to, _) in &self.edges {
            preds[to.0].push(from);
        }
        for p in &mut preds {
            p.dedup();
        }
        preds
    }

    /// Graphviz rendering; nodes are named `module:start`.
    pub fn dot(&self, program: &Program) -> String {
        let name = |b: BlockId| {
            let blk = self.block(b);
            format!("{}:{}", program.module_name(blk.module), blk.start)
        };
        let mut out = String::from("digraph cfg {\n");
        for (i, _) in self.blocks.iter().enumerate() {
            out.push_str(&format!("  \"{}\";\n", name(BlockId(i))));
        }
        for &(from, to, kind) in &self.edges {
            out.push_str(&format!("  \"{}\" -> \"{}\" [label=\"{kind}\"];\n", name(from), name(to)));
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_cfg(program: &Program) -> Cfg {
    let mut blocks = Vec::new();
    let mut starts = BTreeMap::new();

    for module_id in 0..program.module_count() {
        let code = &program.module(module_id).instructions;
        if code.is_empty() {
            continue;
        }
        let mut leaders = BTreeSet::new();
        leaders.insert(0usize);
        for (i, instr) in code.iter().enumerate() {
            if let Some(t) = instr.target() {
                if t < code.len() {
                    leaders.insert(t);
                }
            }
            if instr.is_block_end() && i + 1 < code.len() {
                leaders.insert(i + 1);
            }
        }
        // Cross-module leaders: resolved xcall entry points.
        // (Targets of Call are same-module; xcall entries are handled when
        // the callee module's own leaders are collected below.)
        let bounds: Vec<usize> = leaders.into_iter().collect();
        for (k, &start) in bounds.iter().enumerate() {
            let end = bounds.get(k + 1).copied().unwrap_or(code.len());
            starts.insert((module_id, start), BlockId(blocks.len()));
            blocks.push(Block { module: module_id, start, end });
        }
    }

    // Resolved xcall entries must begin a block in the callee module; they
    // always do when the export label is also branched to locally, but not
    // otherwise, so split blocks as needed.
    let mut extra_leaders: BTreeSet<(usize, usize)> = BTreeSet::new();
    for module_id in 0..program.module_count() {
        for instr in &program.module(module_id).instructions {
            if let Instruction::Xcall { symbol } = instr {
                if let Some(entry) = program.resolve_symbol(symbol) {
                    if !starts.contains_key(&(entry.module, entry.index)) {
                        extra_leaders.insert((entry.module, entry.index));
                    }
                }
            }
        }
    }
    if !extra_leaders.is_empty() {
        let mut split = Vec::new();
        for b in blocks {
            let mut cuts: Vec<usize> = extra_leaders
                .iter()
                .filter(|&&(m, i)| m == b.module && b.start < i && i < b.end)
                .map(|&(_, i)| i)
                .collect();
            cuts.push(b.end);
            let mut s = b.start;
            for c in cuts {
                split.push(Block { module: b.module, start: s, end: c });
                s = c;
            }
        }
        blocks = split;
        starts = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| ((b.module, b.start), BlockId(i)))
            .collect();
    }

    let mut cfg = Cfg { blocks, edges: BTreeSet::new(), starts };

    // Intra-block edges plus call-site bookkeeping.
    // call_sites: (callee entry block, block after the call site)
    let mut call_sites: Vec<(BlockId, Option<BlockId>)> = Vec::new();
    let mut edges = BTreeSet::new();
    for (i, block) in cfg.blocks.iter().enumerate() {
        let id = BlockId(i);
        let code = &program.module(block.module).instructions;
        let last = &code[block.end - 1];
        let next_block = cfg.block_starting(Pc::new(block.module, block.end));
        match last {
            Instruction::Jmp { target } => {
                if let Some(t) = cfg.block_starting(Pc::new(block.module, *target)) {
                    edges.insert((id, t, EdgeKind::Taken));
                }
            }
            Instruction::Branch { target, .. } => {
                if let Some(t) = cfg.block_starting(Pc::new(block.module, *target)) {
                    edges.insert((id, t, EdgeKind::Taken));
                }
                if let Some(n) = next_block {
                    edges.insert((id, n, EdgeKind::Fallthrough));
                }
            }
            Instruction::Call { target } => {
                if let Some(t) = cfg.block_starting(Pc::new(block.module, *target)) {
                    edges.insert((id, t, EdgeKind::Call));
                    call_sites.push((t, next_block));
                }
            }
            Instruction::Xcall { symbol } => match program.resolve_symbol(symbol) {
                Some(entry) => {
                    if let Some(t) = cfg.block_starting(entry) {
                        edges.insert((id, t, EdgeKind::Call));
                        call_sites.push((t, next_block));
                    }
                }
                // Native or unbound: control continues at the next instruction.
                None => {
                    if let Some(n) = next_block {
                        edges.insert((id, n, EdgeKind::Fallthrough));
                    }
                }
            },
            Instruction::Ret | Instruction::Halt { .. } => {}
            // Block ends because the next instruction is a leader.
            _ => {
                if let Some(n) = next_block {
                    edges.insert((id, n, EdgeKind::Fallthrough));
                }
            }
        }
    }

    // Return edges: from each ret block reachable inside the callee back to
    // the block after the call. Reachability follows fallthrough/taken edges
    // and skips over nested calls (a call is assumed to return).
    let mut ret_cache: BTreeMap<BlockId, Vec<BlockId>> = BTreeMap::new();
    let skip_target = |cfg: &Cfg, b: BlockId| -> Option<BlockId> {
        let blk = cfg.block(b);
        let last = &program.module(blk.module).instructions[blk.end - 1];
        match last {
            Instruction::Call { .. } => cfg.block_starting(Pc::new(blk.module, blk.end)),
            Instruction::Xcall { symbol } if program.resolve_symbol(symbol).is_some() => {
                cfg.block_starting(Pc::new(blk.module, blk.end))
            }
            _ => None,
        }
    };
    for &(entry, after) in &call_sites {
        let rets = ret_cache.entry(entry).or_insert_with(|| {
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::from([entry]);
            let mut rets = Vec::new();
            while let Some(b) = queue.pop_front() {
                if !seen.insert(b) {
                    continue;
                }
                let blk = cfg.block(b);
                let last = &program.module(blk.module).instructions[blk.end - 1];
                if matches!(last, Instruction::Ret) {
                    rets.push(b);
                }
                for (to, kind) in edges
                    .iter()
                    .filter(|(f, _, _)| *f == b)
                    .map(|&(_, t, k)| (t, k))
                {
                    if matches!(kind, EdgeKind::Fallthrough | EdgeKind::Taken) {
                        queue.push_back(to);
                    }
                }
                if let Some(skip) = skip_target(&cfg, b) {
                    queue.push_back(skip);
                }
            }
            rets
        });
        if let Some(after) = after {
            for &r in rets.iter() {
                edges.insert((r, after, EdgeKind::Return));
            }
        }
    }

    cfg.edges = edges;
    cfg
}
