//! Directed path exploration toward a target endpoint.
//!
//! The search is generational: run the concolic executor on the current
//! input, and if the target block was not entered, turn each symbolic
//! branch of the collected path condition into a negation candidate. Each
//! candidate is scored by the CFG distance from the branch's alternate
//! successor to the target (reverse-BFS over all edge kinds), with ties
//! broken by shorter path prefix, lower branch index, and finally creation
//! order, giving a reproducible total order. The best candidate is solved,
//! the inputs patched, and the loop repeats.
//!
//! Loops are contained by a per-path block visit bound, and exploration
//! can be restricted to an execution map recorded from concrete pre-runs:
//! candidates whose alternate successor is outside the map are skipped
//! (the target block itself is always exempt).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::concolic::{
    execute_concolic_with, negate_at, ConcolicError, ConcolicOptions, ConcolicRun, ExternalPolicy,
    SymbolicMarks,
};
use crate::interp::{self, InputImage, Trace};
use crate::isa::{BlockId, Cfg, Pc, Program};
use crate::solver::{solve, SolveResult, SolverBudget};
use crate::symexpr::{Assignment, ConstraintKind, PathCondition};

/// Where the search is headed: a label or an explicit instruction site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    Label(String),
    Site { module: String, index: usize },
}

impl TargetSpec {
    pub fn label(name: &str) -> TargetSpec {
        TargetSpec::Label(name.to_string())
    }

    /// `label`, or `module:index` with a numeric index.
    pub fn parse(text: &str) -> TargetSpec {
        if let Some((module, idx)) = text.rsplit_once(':') {
            if let Ok(index) = idx.parse::<usize>() {
                return TargetSpec::Site { module: module.to_string(), index };
            }
        }
        TargetSpec::Label(text.to_string())
    }

    pub fn resolve(&self, program: &Program) -> Result<Pc, SearchError> {
        match self {
            TargetSpec::Label(name) => {
                program.find_label(name).map_err(SearchError::Target)
            }
            TargetSpec::Site { module, index } => {
                let id = program
                    .module_id(module)
                    .ok_or_else(|| SearchError::Target(format!("unknown module '{module}'")))?;
                if *index >= program.module(id).instructions.len() {
                    return Err(SearchError::Target(format!(
                        "index {index} out of range in module '{module}'"
                    )));
                }
                Ok(Pc::new(id, *index))
            }
        }
    }

    pub fn display(&self) -> String {
        match self {
            TargetSpec::Label(name) => name.clone(),
            TargetSpec::Site { module, index } => format!("{module}:{index}"),
        }
    }
}

/// Blocks, library loads, and call sites observed across concrete pre-runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionMap {
    pub blocks: BTreeSet<BlockId>,
    pub loads: BTreeSet<String>,
    pub call_sites: BTreeSet<(Pc, String)>,
}

impl ExecutionMap {
    /// Maps are union-closed: merging adds coverage, never removes it.
    pub fn merge(&mut self, other: &ExecutionMap) {
        self.blocks.extend(other.blocks.iter().copied());
        self.loads.extend(other.loads.iter().cloned());
        self.call_sites.extend(other.call_sites.iter().cloned());
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("trace does not match program: {0}")]
    Mismatch(String),
}

/// Union the coverage of several traces into one map.
pub fn build_map(traces: &[Trace], program: &Program) -> Result<ExecutionMap, MapError> {
    let cfg = program.cfg();
    let mut map = ExecutionMap::default();
    for trace in traces {
        for b in trace.blocks() {
            if b.0 >= cfg.blocks.len() {
                return Err(MapError::Mismatch(format!("block id {} out of range", b.0)));
            }
            map.blocks.insert(b);
        }
        for lib in trace.loads() {
            if program.module_id(lib).is_none() {
                return Err(MapError::Mismatch(format!("unknown library '{lib}'")));
            }
            map.loads.insert(lib.to_string());
        }
        for (pc, symbol) in trace.xcall_sites() {
            map.call_sites.insert((pc, symbol.to_string()));
        }
    }
    Ok(map)
}

/// Minimum edge count from every block to `target`, over all edge kinds.
/// Unreachable blocks get `None`.
pub fn distance_map(cfg: &Cfg, target: BlockId) -> Vec<Option<u32>> {
    let preds = cfg.predecessors();
    let mut dist = vec![None; cfg.blocks.len()];
    dist[target.0] = Some(0);
    let mut queue = VecDeque::from([target]);
    while let Some(b) = queue.pop_front() {
        let d = dist[b.0].unwrap();
        for &p in &preds[b.0] {
            if dist[p.0].is_none() {
                dist[p.0] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Conventional fill byte for symbolic-region seeds: any fixed value
/// works, a printable one eases debugging.
pub const DEFAULT_SEED_FILL: u8 = 0x58;

/// Candidate ordering strategy; `Fifo` exists for heuristic comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchOrder {
    #[default]
    Directed,
    Fifo,
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Max visits of one block within a candidate's path prefix.
    pub loop_bound: u32,
    pub max_frontier: usize,
    pub max_solver_calls: u32,
    pub solver_budget: SolverBudget,
    pub restrict_to_map: Option<ExecutionMap>,
    /// Fuel per concolic run.
    pub fuel: u64,
    pub order: SearchOrder,
    /// Parallelism hint for candidate solving. Solving is currently
    /// sequential; the tie-break order makes the accepted candidate
    /// independent of completion order either way.
    pub jobs: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            loop_bound: 128,
            max_frontier: 4096,
            max_solver_calls: 512,
            solver_budget: SolverBudget::default(),
            restrict_to_map: None,
            fuel: interp::DEFAULT_FUEL,
            order: SearchOrder::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub iterations: u32,
    pub solver_calls: u32,
    pub sat: u32,
    pub unsat: u32,
    pub unknown: u32,
    pub candidates_enumerated: u64,
    pub skipped_loop_bound: u64,
    pub skipped_map: u64,
    pub skipped_duplicate: u64,
    pub divergences: u32,
    pub frontier_peak: usize,
    pub frontier_truncated: bool,
}

/// A verified input that reaches the target.
#[derive(Debug, Clone)]
pub struct Witness {
    /// Values of the path condition's variables in the witness inputs.
    pub assignment: Assignment,
    pub inputs: InputImage,
    pub branch_path: Vec<(Pc, bool)>,
    pub stats: SearchStats,
}

#[derive(Debug)]
pub enum SearchResult {
    Witness(Box<Witness>),
    /// No candidates remain within bounds.
    Exhausted(SearchStats),
    /// A frontier or solver limit clipped the exploration.
    BudgetExceeded(SearchStats),
}

impl SearchResult {
    pub fn verdict(&self) -> &'static str {
        match self {
            SearchResult::Witness(_) => "witness",
            SearchResult::Exhausted(_) => "exhausted",
            SearchResult::BudgetExceeded(_) => "budget-exceeded",
        }
    }

    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchResult::Witness(w) => &w.stats,
            SearchResult::Exhausted(s) | SearchResult::BudgetExceeded(s) => s,
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            SearchResult::Witness(w) => Some(w),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("{0}")]
    Target(String),
    #[error("target site is not inside any block")]
    TargetOutsideBlocks,
    #[error(transparent)]
    Concolic(#[from] ConcolicError),
    #[error("witness replay diverged from the recorded path: {0}")]
    ReplayDivergence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CandKey {
    distance: u32,
    prefix_len: u32,
    branch_index: u32,
    seq: u64,
}

struct Candidate {
    path: PathCondition,
    base: InputImage,
}

/// Search for an input that drives execution into the target block.
pub fn directed_search(
    program: &Program,
    seed: &InputImage,
    marks: &SymbolicMarks,
    target: &TargetSpec,
    policy: &ExternalPolicy,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    let cfg = program.cfg();
    let target_pc = target.resolve(program)?;
    let target_block = cfg.block_at(target_pc).ok_or(SearchError::TargetOutsideBlocks)?;
    let distances = distance_map(cfg, target_block);

    let mut stats = SearchStats::default();
    let mut frontier: BTreeMap<CandKey, Candidate> = BTreeMap::new();
    let mut seen_prefixes: BTreeSet<Vec<(Pc, bool)>> = BTreeSet::new();
    let mut seen_inputs: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut seq: u64 = 0;

    let options = ConcolicOptions { fuel: config.fuel, ..Default::default() };
    let mut inputs = seed.clone();
    seen_inputs.insert(image_bytes(&inputs));

    let mut current: ConcolicRun =
        execute_concolic_with(program, &inputs, marks, policy, &options)?;
    stats.iterations += 1;

    loop {
        if current.trace.blocks().any(|b| b == target_block) {
            return finish_witness(program, inputs, current, target_block, stats, config.fuel);
        }

        enumerate_candidates(
            cfg,
            &current,
            &inputs,
            &distances,
            target_block,
            config,
            &mut frontier,
            &mut seen_prefixes,
            &mut seq,
            &mut stats,
        );

        // Pop candidates in tie-break order until one solves and replays.
        let next_run = loop {
            let Some((_, cand)) = frontier.pop_first() else {
                return Ok(if stats.frontier_truncated {
                    SearchResult::BudgetExceeded(stats)
                } else {
                    SearchResult::Exhausted(stats)
                });
            };
            if stats.solver_calls >= config.max_solver_calls {
                return Ok(SearchResult::BudgetExceeded(stats));
            }
            stats.solver_calls += 1;
            match solve(&cand.path, &config.solver_budget) {
                SolveResult::Sat(a) => {
                    stats.sat += 1;
                    let patched = cand.base.patched(&a);
                    let key = image_bytes(&patched);
                    if !seen_inputs.insert(key) {
                        stats.skipped_duplicate += 1;
                        continue;
                    }
                    let run = execute_concolic_with(program, &patched, marks, policy, &options)?;
                    stats.iterations += 1;
                    // The new path should realize the predicted branch
                    // directions (aligned by branch ordinal); a divergence
                    // means constraints were lost somewhere, for example by
                    // silent concretization, so just work with the run we
                    // actually got.
                    let got = run.trace.branch_records();
                    let diverged = cand
                        .path
                        .entries
                        .iter()
                        .filter(|e| e.kind == ConstraintKind::Branch)
                        .any(|e| {
                            got.get(e.ordinal as usize)
                                .is_none_or(|&(pc, taken)| (pc, taken) != (e.site, e.taken))
                        });
                    if diverged {
                        stats.divergences += 1;
                    }
                    break (patched, run);
                }
                SolveResult::Unsat => {
                    stats.unsat += 1;
                    continue;
                }
                SolveResult::Unknown { .. } => {
                    stats.unknown += 1;
                    continue;
                }
            }
        };

        inputs = next_run.0;
        current = next_run.1;
    }
}

fn image_bytes(image: &InputImage) -> Vec<u8> {
    let mut out = Vec::new();
    for r in &image.regions {
        out.extend_from_slice(r.name.as_bytes());
        out.push(0);
        out.extend_from_slice(&r.base.to_le_bytes());
        out.extend_from_slice(&(r.bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&r.bytes);
    }
    out
}

/// (site, taken) sequence of the branch-kind entries of a path.
fn branch_prefix(path: &PathCondition) -> Vec<(Pc, bool)> {
    path.entries
        .iter()
        .filter(|e| e.kind == ConstraintKind::Branch)
        .map(|e| (e.site, e.taken))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn enumerate_candidates(
    cfg: &Cfg,
    run: &ConcolicRun,
    inputs: &InputImage,
    distances: &[Option<u32>],
    target_block: BlockId,
    config: &SearchConfig,
    frontier: &mut BTreeMap<CandKey, Candidate>,
    seen_prefixes: &mut BTreeSet<Vec<(Pc, bool)>>,
    seq: &mut u64,
    stats: &mut SearchStats,
) {
    // Walk the trace once, tracking block visit counts and aligning branch
    // records with the path condition's branch entries by ordinal.
    let mut visits: BTreeMap<BlockId, u32> = BTreeMap::new();
    let mut max_visits: u32 = 0;
    let mut branch_ordinal: u32 = 0;
    let mut entry_iter = run
        .path
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == ConstraintKind::Branch)
        .peekable();

    for event in &run.trace.events {
        match event {
            crate::interp::TraceEvent::Block(b) => {
                let count = visits.entry(*b).or_insert(0);
                *count += 1;
                max_visits = max_visits.max(*count);
            }
            crate::interp::TraceEvent::Branch { pc, taken } => {
                let this_ordinal = branch_ordinal;
                branch_ordinal += 1;
                let Some((entry_idx, entry)) = entry_iter.peek().copied() else {
                    continue;
                };
                if entry.ordinal != this_ordinal {
                    continue;
                }
                entry_iter.next();
                debug_assert_eq!((entry.site, entry.taken), (*pc, *taken));

                stats.candidates_enumerated += 1;
                let Some(alternate) = alternate_successor(cfg, *pc, *taken) else {
                    continue;
                };

                // Loop bound over the candidate's whole path: every block
                // of the executed prefix plus one more visit of the
                // alternate successor must stay within the bound.
                let alt_visits = visits.get(&alternate).copied().unwrap_or(0) + 1;
                if max_visits > config.loop_bound || alt_visits > config.loop_bound {
                    stats.skipped_loop_bound += 1;
                    continue;
                }
                if let Some(map) = &config.restrict_to_map {
                    if alternate != target_block && !map.blocks.contains(&alternate) {
                        stats.skipped_map += 1;
                        continue;
                    }
                }

                let Ok(negated) = negate_at(&run.path, entry_idx) else {
                    continue;
                };
                let prefix = branch_prefix(&negated);
                if !seen_prefixes.insert(prefix) {
                    stats.skipped_duplicate += 1;
                    continue;
                }

                let distance = distances[alternate.0].unwrap_or(u32::MAX);
                let key = match config.order {
                    SearchOrder::Directed => CandKey {
                        distance,
                        prefix_len: entry_idx as u32,
                        branch_index: this_ordinal,
                        seq: *seq,
                    },
                    SearchOrder::Fifo => CandKey {
                        distance: 0,
                        prefix_len: 0,
                        branch_index: 0,
                        seq: *seq,
                    },
                };
                *seq += 1;
                frontier.insert(key, Candidate { path: negated, base: inputs.clone() });
                if frontier.len() > config.max_frontier {
                    frontier.pop_last();
                    stats.frontier_truncated = true;
                }
                stats.frontier_peak = stats.frontier_peak.max(frontier.len());
            }
            _ => {}
        }
    }
}

/// Block the branch at `pc` enters when it goes the other way.
fn alternate_successor(cfg: &Cfg, pc: Pc, taken: bool) -> Option<BlockId> {
    let block = cfg.block_at(pc)?;
    let mut taken_succ = None;
    let mut fall_succ = None;
    for (to, kind) in cfg.successors(block) {
        match kind {
            crate::isa::EdgeKind::Taken => taken_succ = Some(to),
            crate::isa::EdgeKind::Fallthrough => fall_succ = Some(to),
            _ => {}
        }
    }
    if taken {
        fall_succ
    } else {
        taken_succ
    }
}

fn finish_witness(
    program: &Program,
    inputs: InputImage,
    run: ConcolicRun,
    target_block: BlockId,
    stats: SearchStats,
    fuel: u64,
) -> Result<SearchResult, SearchError> {
    // The reaching run's own inputs are the witness; its path condition is
    // satisfied by construction. Restrict the byte assignment to the
    // variables the path actually mentions.
    let mut assignment = Assignment::new();
    for var in run.path.free_vars() {
        if let Some(region) = inputs.region(&var.region) {
            if let Some(&b) = region.bytes.get(var.index as usize) {
                assignment.insert(var, b);
            }
        }
    }

    // Replay concretely and require the identical branch path and the
    // target block. Zero tolerance: divergence here is an engine defect.
    let state = interp::load_image(program, &inputs)
        .map_err(|e| SearchError::ReplayDivergence(e.to_string()))?;
    let (_, replay) = interp::run(program, state, fuel);
    if replay.branch_records() != run.trace.branch_records() {
        return Err(SearchError::ReplayDivergence(
            "replayed branch records differ from the concolic run".to_string(),
        ));
    }
    if !replay.blocks().any(|b| b == target_block) {
        return Err(SearchError::ReplayDivergence(
            "replay did not enter the target block".to_string(),
        ));
    }

    Ok(SearchResult::Witness(Box::new(Witness {
        assignment,
        inputs,
        branch_path: run.trace.branch_records(),
        stats,
    })))
}

/// The machine-readable search report.
#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub target: String,
    pub iterations: u32,
    pub solver_calls: u32,
    pub verdict: String,
    /// Witness bytes hex-encoded per region, in region order.
    pub witness: Option<BTreeMap<String, String>>,
    pub branch_path_len: Option<usize>,
    /// Unix seconds; present only when stamping was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stamp: Option<u64>,
}

impl SearchReport {
    pub fn from_result(target: &TargetSpec, result: &SearchResult) -> SearchReport {
        let stats = result.stats();
        SearchReport {
            target: target.display(),
            iterations: stats.iterations,
            solver_calls: stats.solver_calls,
            verdict: result.verdict().to_string(),
            witness: result.witness().map(|w| {
                w.inputs
                    .regions
                    .iter()
                    .map(|r| (r.name.clone(), hex::encode(&r.bytes)))
                    .collect()
            }),
            branch_path_len: result.witness().map(|w| w.branch_path.len()),
            stamp: None,
        }
    }
}
