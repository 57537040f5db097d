//! Signature extraction end to end: a minimal rule-database format, a
//! corpus of scanner programs, and a driver that recovers the pattern a
//! scanner matches on by driving it to its detection endpoint.
//!
//! The database format is one rule per line, `Name:Offset:Hex`, with `#`
//! comments; the offset is `*` for match-anywhere or a decimal absolute
//! file offset. For the scanners, a database compiles into a binary region:
//! a little-endian rule count followed by `kind,offset,length` words and
//! the raw pattern bytes per rule.
//!
//! Scanner ABI: inputs are region 0 `file` at 0x1000 and region 1 `db` at
//! 0x2000, described by the input table. Scanners halt 1 at the `detected`
//! label and 0 at `clean`; at `detected`, r1 holds the matched window
//! offset, r2 the matched pattern length, and r6 the rules remaining. The
//! extraction driver reads those registers from the verification replay to
//! localize the recovered bytes instead of re-searching the witness, which
//! could hit coincidental matches.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::concolic::ExternalPolicy;
use crate::interp::{self, InputImage};
use crate::isa::{parse_program, Program};
use crate::search::{
    build_map, directed_search, ExecutionMap, SearchConfig, SearchError, SearchStats, TargetSpec,
};

pub const FILE_BASE: u32 = 0x1000;
pub const DB_BASE: u32 = 0x2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOffset {
    Anywhere,
    At(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureRule {
    pub name: String,
    pub offset: RuleOffset,
    pub pattern: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignatureDb {
    pub rules: Vec<SignatureRule>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DbError {
    #[error("pattern has odd length (line {line})")]
    OddLength { line: usize },
    #[error("pattern is not hex (line {line})")]
    BadHex { line: usize },
    #[error("pattern length out of range 2..=64 hex digits (line {line})")]
    LengthRange { line: usize },
    #[error("malformed rule line (line {line})")]
    Malformed { line: usize },
    #[error("bad offset '{offset}' (line {line})")]
    BadOffset { offset: String, line: usize },
    #[error("empty or invalid rule name (line {line})")]
    BadName { line: usize },
    #[error("duplicate rule name '{name}' (line {line})")]
    DuplicateName { name: String, line: usize },
}

fn validate_pattern(hex_pattern: &str, line: usize) -> Result<Vec<u8>, DbError> {
    if !(2..=64).contains(&hex_pattern.len()) {
        return Err(DbError::LengthRange { line });
    }
    if !hex_pattern.len().is_multiple_of(2) {
        return Err(DbError::OddLength { line });
    }
    hex::decode(hex_pattern).map_err(|_| DbError::BadHex { line })
}

/// Format a one-rule database.
pub fn gen_min_db(name: &str, hex_pattern: &str, offset: RuleOffset) -> Result<String, DbError> {
    if name.is_empty() || name.contains(':') || name.contains('#') {
        return Err(DbError::BadName { line: 1 });
    }
    if !hex_pattern.len().is_multiple_of(2) {
        return Err(DbError::OddLength { line: 1 });
    }
    validate_pattern(hex_pattern, 1)?;
    let offset = match offset {
        RuleOffset::Anywhere => "*".to_string(),
        RuleOffset::At(n) => n.to_string(),
    };
    Ok(format!("{name}:{offset}:{hex_pattern}\n"))
}

pub fn parse_db(text: &str) -> Result<SignatureDb, DbError> {
    let mut db = SignatureDb::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.splitn(3, ':');
        let (name, offset, pattern) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(o), Some(p)) => (n.trim(), o.trim(), p.trim()),
            _ => return Err(DbError::Malformed { line }),
        };
        if name.is_empty() {
            return Err(DbError::BadName { line });
        }
        if db.rules.iter().any(|r| r.name == name) {
            return Err(DbError::DuplicateName { name: name.to_string(), line });
        }
        let offset = if offset == "*" {
            RuleOffset::Anywhere
        } else {
            RuleOffset::At(offset.parse().map_err(|_| DbError::BadOffset {
                offset: offset.to_string(),
                line,
            })?)
        };
        let pattern = validate_pattern(pattern, line)?;
        db.rules.push(SignatureRule { name: name.to_string(), offset, pattern });
    }
    Ok(db)
}

pub fn db_to_text(db: &SignatureDb) -> String {
    let mut out = String::new();
    for rule in &db.rules {
        let offset = match rule.offset {
            RuleOffset::Anywhere => "*".to_string(),
            RuleOffset::At(n) => n.to_string(),
        };
        out.push_str(&format!("{}:{}:{}\n", rule.name, offset, hex::encode(&rule.pattern)));
    }
    out
}

/// Binary region the scanners consume: rule count, then per rule the kind
/// word (0 anywhere, 1 absolute), offset word, length word, pattern bytes.
pub fn compile_db(db: &SignatureDb) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(db.rules.len() as u32).to_le_bytes());
    for rule in &db.rules {
        let (kind, offset) = match rule.offset {
            RuleOffset::Anywhere => (0u32, 0u32),
            RuleOffset::At(n) => (1u32, n),
        };
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(rule.pattern.len() as u32).to_le_bytes());
        out.extend_from_slice(&rule.pattern);
    }
    out
}

/// The standard input image for a scanner: `file` then `db`.
pub fn scan_inputs(db: &SignatureDb, file_bytes: &[u8]) -> InputImage {
    InputImage::new()
        .with_region("file", FILE_BASE, file_bytes.to_vec())
        .with_region("db", DB_BASE, compile_db(db))
}

pub const SCANNER_INLINE_SRC: &str = "\
; In-module scanner: slides every rule pattern over the file region.
main:
  const r0, 0x0F00
  load32 r5, [r0]         ; file base
  load32 r4, [r0+4]       ; file length
  load32 r7, [r0+8]       ; db base
  load32 r6, [r7]         ; rule count
  add r7, r7, 4
rule_loop:
  jz r6, clean
  load32 r0, [r7]         ; offset kind: 0 anywhere, 1 absolute
  load32 r1, [r7+4]       ; absolute offset
  load32 r2, [r7+8]       ; pattern length
  add r7, r7, 12
  const r3, 0x0E00
  store32 [r3], r2        ; spill pattern length
  lt r3, r4, r2
  jnz r3, next_rule       ; pattern longer than file
  sub r3, r4, r2
  const r2, 0x0E04
  store32 [r2], r3        ; spill last window start
  jz r0, scan_any
  lt r3, r3, r1
  jnz r3, next_rule       ; absolute offset past the last window
  mov r3, r1
  jmp try_window
scan_any:
  const r3, 0
try_window:
  const r2, 0
cmp_loop:
  const r0, 0x0E00
  load32 r0, [r0]
  lt r1, r2, r0
  jz r1, detected         ; every pattern byte matched
  add r0, r5, r3
  add r0, r0, r2
  load8 r1, [r0]          ; file[w+i]
  add r0, r7, r2
  load8 r0, [r0]          ; pattern[i]
  xor r0, r0, r1
  jnz r0, window_fail
  add r2, r2, 1
  jmp cmp_loop
window_fail:
  load32 r0, [r7-12]      ; offset kind again
  jnz r0, next_rule       ; absolute rules get a single window
  const r0, 0x0E04
  load32 r0, [r0]
  lt r1, r3, r0
  jz r1, next_rule        ; no window left
  add r3, r3, 1
  jmp try_window
next_rule:
  const r0, 0x0E00
  load32 r0, [r0]
  add r7, r7, r0
  sub r6, r6, 1
  jmp rule_loop
clean:
  const r0, 0
  halt r0
detected:
  mov r1, r3              ; matched window offset
  const r0, 0x0E00
  load32 r2, [r0]         ; matched pattern length
  const r0, 1
  halt r0
";

pub const SCANNER_DYLIB_SRC: &str = "\
; Scanner with the byte comparison routed through a library call.
.module main
main:
  const r0, 0x0F00
  load32 r5, [r0]
  load32 r4, [r0+4]
  load32 r7, [r0+8]
  load32 r6, [r7]
  add r7, r7, 4
rule_loop:
  jz r6, clean
  load32 r0, [r7]
  load32 r1, [r7+4]
  load32 r2, [r7+8]
  add r7, r7, 12
  const r3, 0x0E00
  store32 [r3], r2
  lt r3, r4, r2
  jnz r3, next_rule
  sub r3, r4, r2
  const r2, 0x0E04
  store32 [r2], r3
  jz r0, scan_any
  lt r3, r3, r1
  jnz r3, next_rule
  mov r3, r1
  jmp try_window
scan_any:
  const r3, 0
try_window:
  const r2, 0
cmp_loop:
  const r0, 0x0E00
  load32 r0, [r0]
  lt r1, r2, r0
  jz r1, detected
  add r0, r5, r3
  add r0, r0, r2
  load8 r0, [r0]          ; file[w+i] -> first argument
  add r1, r7, r2
  load8 r1, [r1]          ; pattern[i] -> second argument
  xcall str.match
  jz r0, window_fail      ; library returned 0: mismatch
  add r2, r2, 1
  jmp cmp_loop
window_fail:
  load32 r0, [r7-12]
  jnz r0, next_rule
  const r0, 0x0E04
  load32 r0, [r0]
  lt r1, r3, r0
  jz r1, next_rule
  add r3, r3, 1
  jmp try_window
next_rule:
  const r0, 0x0E00
  load32 r0, [r0]
  add r7, r7, r0
  sub r6, r6, 1
  jmp rule_loop
clean:
  const r0, 0
  halt r0
detected:
  mov r1, r3
  const r0, 0x0E00
  load32 r2, [r0]
  const r0, 1
  halt r0

.module str
match:
  xor r0, r0, r1
  jnz r0, match_ne
  const r0, 1
  ret
match_ne:
  const r0, 0
  ret
";

pub const SCANNER_LOOP_SRC: &str = "\
; Scanner with a data-dependent retry gate: a file starting 0xAA spins
; forever before the scan even starts.
main:
  const r0, 0x0F00
  load32 r5, [r0]
  load32 r4, [r0+4]
  load32 r7, [r0+8]
  jz r4, scan_setup       ; empty file skips the gate
retry:
  load8 r0, [r5]
  xor r0, r0, 0xAA
  jz r0, retry
scan_setup:
  load32 r6, [r7]
  add r7, r7, 4
rule_loop:
  jz r6, clean
  load32 r0, [r7]
  load32 r1, [r7+4]
  load32 r2, [r7+8]
  add r7, r7, 12
  const r3, 0x0E00
  store32 [r3], r2
  lt r3, r4, r2
  jnz r3, next_rule
  sub r3, r4, r2
  const r2, 0x0E04
  store32 [r2], r3
  jz r0, scan_any
  lt r3, r3, r1
  jnz r3, next_rule
  mov r3, r1
  jmp try_window
scan_any:
  const r3, 0
try_window:
  const r2, 0
cmp_loop:
  const r0, 0x0E00
  load32 r0, [r0]
  lt r1, r2, r0
  jz r1, detected
  add r0, r5, r3
  add r0, r0, r2
  load8 r1, [r0]
  add r0, r7, r2
  load8 r0, [r0]
  xor r0, r0, r1
  jnz r0, window_fail
  add r2, r2, 1
  jmp cmp_loop
window_fail:
  load32 r0, [r7-12]
  jnz r0, next_rule
  const r0, 0x0E04
  load32 r0, [r0]
  lt r1, r3, r0
  jz r1, next_rule
  add r3, r3, 1
  jmp try_window
next_rule:
  const r0, 0x0E00
  load32 r0, [r0]
  add r7, r7, r0
  sub r6, r6, 1
  jmp rule_loop
clean:
  const r0, 0
  halt r0
detected:
  mov r1, r3
  const r0, 0x0E00
  load32 r2, [r0]
  const r0, 1
  halt r0
";

/// The three shipped scanners.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub scanner_inline: Program,
    pub scanner_dylib: Program,
    pub scanner_loop: Program,
}

pub fn corpus() -> Corpus {
    Corpus {
        scanner_inline: parse_program(SCANNER_INLINE_SRC).expect("corpus source is valid"),
        scanner_dylib: parse_program(SCANNER_DYLIB_SRC).expect("corpus source is valid"),
        scanner_loop: parse_program(SCANNER_LOOP_SRC).expect("corpus source is valid"),
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("file length {file_len} is shorter than the longest rule pattern ({longest})")]
    FileTooShort { file_len: usize, longest: usize },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Image(#[from] interp::ImageError),
}

/// What extraction produced. Serializes as the report file.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionReport {
    pub target_endpoint: String,
    pub policy_used: String,
    /// "witness", "exhausted", or "budget-exceeded".
    pub outcome: String,
    /// Hex bytes per input region, present when a witness was found.
    pub witness_bytes: Option<BTreeMap<String, String>>,
    /// Hex of the byte run satisfying the match constraints.
    pub recovered_pattern: Option<String>,
    pub matched_offset: Option<u32>,
    /// Replay verdict: did the witness reach the target concretely?
    pub verification: Option<bool>,
    /// Recovered bytes equal the matched database rule's pattern.
    pub equality_vs_ground_truth: Option<bool>,
    pub statistics: SearchStats,
    /// Unix seconds; present only when stamping was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stamp: Option<u64>,
}

/// Run the whole strategy: map the database concretely, make the file
/// symbolic, search for the endpoint, verify by concrete replay, and read
/// the recovered pattern out of the witness.
pub fn extract_signature(
    scanner: &Program,
    db_text: &str,
    file_len: usize,
    target: &TargetSpec,
    policy: &ExternalPolicy,
    config: &SearchConfig,
    preruns: Option<&[InputImage]>,
) -> Result<ExtractionReport, ExtractError> {
    let db = parse_db(db_text)?;
    let longest = db.rules.iter().map(|r| r.pattern.len()).max().unwrap_or(0);
    if file_len < longest {
        return Err(ExtractError::FileTooShort { file_len, longest });
    }

    let seed = scan_inputs(&db, &vec![0u8; file_len]);
    let marks = crate::concolic::SymbolicMarks::one("file");

    // Pre-runs extend the execution map and switch on map restriction.
    let mut config = config.clone();
    let mut map = match policy {
        ExternalPolicy::Mapped(m) => m.clone(),
        _ => ExecutionMap::default(),
    };
    if let Some(seeds) = preruns {
        for seed_inputs in seeds {
            let (text, _) = interp::record_replay(scanner, seed_inputs, config.fuel)?;
            let trace = interp::trace_from_text(&text, scanner)
                .map_err(|e| SearchError::Target(e.to_string()))?;
            map.merge(&build_map(std::slice::from_ref(&trace), scanner).map_err(
                |e| SearchError::Target(e.to_string()),
            )?);
        }
        config.restrict_to_map = Some(map.clone());
    }
    let policy_used = match policy {
        ExternalPolicy::Mapped(_) => ExternalPolicy::Mapped(map),
        other => other.clone(),
    };

    let result = directed_search(scanner, &seed, &marks, target, &policy_used, &config)?;

    let mut report = ExtractionReport {
        target_endpoint: target.display(),
        policy_used: policy_used.name().to_string(),
        outcome: result.verdict().to_string(),
        witness_bytes: None,
        recovered_pattern: None,
        matched_offset: None,
        verification: None,
        equality_vs_ground_truth: None,
        statistics: result.stats().clone(),
        stamp: None,
    };

    let Some(witness) = result.witness() else {
        return Ok(report);
    };

    report.witness_bytes = Some(
        witness
            .inputs
            .regions
            .iter()
            .map(|r| (r.name.clone(), hex::encode(&r.bytes)))
            .collect(),
    );

    // Verification replay; the scanner ABI registers of the final state
    // localize the match.
    let target_pc = target.resolve(scanner)?;
    let target_block = scanner.cfg().block_at(target_pc);
    let state = interp::load_image(scanner, &witness.inputs)?;
    let (final_state, trace) = interp::run(scanner, state, config.fuel);
    let reached = target_block.map(|b| trace.blocks().any(|x| x == b)).unwrap_or(false);
    report.verification = Some(reached);
    if !reached {
        return Ok(report);
    }

    let offset = final_state.regs[1];
    let plen = final_state.regs[2] as usize;
    let remaining = final_state.regs[6] as usize;
    report.matched_offset = Some(offset);

    let file_bytes = witness.inputs.region("file").map(|r| r.bytes.as_slice()).unwrap_or(&[]);
    let start = offset as usize;
    if start + plen <= file_bytes.len() {
        let recovered = &file_bytes[start..start + plen];
        report.recovered_pattern = Some(hex::encode(recovered));
        // The database itself is the ground truth here; compare against
        // the rule the scanner was processing when it halted.
        if remaining >= 1 && remaining <= db.rules.len() {
            let rule = &db.rules[db.rules.len() - remaining];
            report.equality_vs_ground_truth = Some(rule.pattern.as_slice() == recovered);
        }
    }

    Ok(report)
}
