//! End-to-end pipeline tests over the scanner corpus: directed search,
//! policy behavior, map execution, and extraction.

use siglift::concolic::{ExternalPolicy, SymbolicMarks};
use siglift::interp::{self, InputImage, TraceEvent};
use siglift::isa::{EdgeKind, Instruction, Program};
use siglift::search::{
    build_map, directed_search, distance_map, SearchConfig, SearchOrder, SearchResult, TargetSpec,
};
use siglift::sigextract::{
    corpus, extract_signature, parse_db, scan_inputs, RuleOffset, SignatureDb,
};

const TEST_DB: &str = "Test:*:414243\n";

fn inline_inputs(db_text: &str, file: &[u8]) -> InputImage {
    scan_inputs(&parse_db(db_text).unwrap(), file)
}

fn detected(program: &Program) -> TargetSpec {
    let _ = program;
    TargetSpec::label("detected")
}

/// Every consecutive block pair must be a CFG edge, with call and return
/// edges following the stack discipline.
fn validate_trace(program: &Program, trace: &siglift::interp::Trace) {
    let cfg = program.cfg();
    let mut stack: Vec<siglift::isa::BlockId> = Vec::new();
    let mut prev: Option<siglift::isa::BlockId> = None;
    for event in &trace.events {
        let TraceEvent::Block(b) = event else { continue };
        if let Some(a) = prev {
            let kinds: Vec<EdgeKind> = cfg
                .successors(a)
                .filter(|(to, _)| *to == *b)
                .map(|(_, k)| k)
                .collect();
            assert!(!kinds.is_empty(), "no edge {a:?} -> {b:?}");
            let blk = cfg.block(a);
            let last = &program.module(blk.module).instructions[blk.end - 1];
            match last {
                Instruction::Call { .. } => {
                    assert!(kinds.contains(&EdgeKind::Call));
                    let after = cfg.block_starting(siglift::isa::Pc::new(blk.module, blk.end));
                    stack.push(after.expect("call must have a return site"));
                }
                Instruction::Xcall { symbol } if program.resolve_symbol(symbol).is_some() => {
                    assert!(kinds.contains(&EdgeKind::Call));
                    let after = cfg.block_starting(siglift::isa::Pc::new(blk.module, blk.end));
                    stack.push(after.expect("xcall must have a return site"));
                }
                Instruction::Ret => {
                    assert!(kinds.contains(&EdgeKind::Return));
                    let expected = stack.pop().expect("return without a call");
                    assert_eq!(*b, expected, "return went to the wrong site");
                }
                _ => {
                    assert!(
                        kinds.contains(&EdgeKind::Taken) || kinds.contains(&EdgeKind::Fallthrough),
                        "unexpected edge kinds {kinds:?}"
                    );
                }
            }
        }
        prev = Some(*b);
    }
}

#[test]
fn corpus_traces_are_cfg_consistent() {
    let c = corpus();
    for (program, file) in [
        (&c.scanner_inline, b"XABCY".as_slice()),
        (&c.scanner_inline, b"".as_slice()),
        (&c.scanner_dylib, b"XABCY".as_slice()),
        (&c.scanner_loop, b"QQQQ".as_slice()),
    ] {
        let inputs = inline_inputs(TEST_DB, file);
        let state = interp::load_image(program, &inputs).unwrap();
        let (_, trace) = interp::run(program, state, 100_000);
        validate_trace(program, &trace);
    }
}

#[test]
fn inline_scanner_cfg_shape_is_stable() {
    // Frozen regression values for the shipped scanner.
    let c = corpus();
    let cfg = c.scanner_inline.cfg();
    assert_eq!(cfg.blocks.len(), 17);
    assert_eq!(cfg.edges.len(), 23);
}

#[test]
fn successor_counts_follow_the_block_terminator() {
    let c = corpus();
    for program in [&c.scanner_inline, &c.scanner_dylib, &c.scanner_loop] {
        let cfg = program.cfg();
        for (i, block) in cfg.blocks.iter().enumerate() {
            let id = siglift::isa::BlockId(i);
            let last = &program.module(block.module).instructions[block.end - 1];
            let succ = cfg.successors(id).count();
            match last {
                Instruction::Branch { .. } => assert_eq!(succ, 2, "branch block {id}"),
                Instruction::Jmp { .. } => assert_eq!(succ, 1, "jmp block {id}"),
                Instruction::Halt { .. } => assert_eq!(succ, 0, "halt block {id}"),
                _ => {}
            }
        }
    }
}

#[test]
fn inline_scanner_distances_are_stable() {
    let c = corpus();
    let cfg = c.scanner_inline.cfg();
    let target_pc = TargetSpec::label("detected").resolve(&c.scanner_inline).unwrap();
    let target = cfg.block_at(target_pc).unwrap();
    let d = distance_map(cfg, target);
    assert_eq!(d[target.0], Some(0));
    // The cmp-loop guard block sits one edge from the detection block.
    let guard = cfg
        .block_at(TargetSpec::label("cmp_loop").resolve(&c.scanner_inline).unwrap())
        .unwrap();
    assert_eq!(d[guard.0], Some(1));
    // Frozen distance table, entry block through halt blocks. The clean
    // exit block is the one place detection is unreachable from.
    let table: Vec<Option<u32>> = d.clone();
    assert_eq!(
        table,
        vec![
            Some(7),
            Some(6),
            Some(5),
            Some(4),
            Some(4),
            Some(3),
            Some(3),
            Some(2),
            Some(1),
            Some(3),
            Some(2),
            Some(5),
            Some(4),
            Some(3),
            Some(7),
            None,
            Some(0),
        ]
    );
}

#[test]
fn directed_search_recovers_planted_bytes() {
    let c = corpus();
    let seed = inline_inputs(TEST_DB, &[0x58; 8]);
    let result = directed_search(
        &c.scanner_inline,
        &seed,
        &SymbolicMarks::one("file"),
        &detected(&c.scanner_inline),
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
    )
    .unwrap();
    let witness = result.witness().expect("search must find the pattern");
    let file = &witness.inputs.region("file").unwrap().bytes;
    assert!(
        file.windows(3).any(|w| w == [0x41, 0x42, 0x43]),
        "witness {file:02x?} must contain the pattern"
    );

    // Replay soundness: the concrete run reproduces the branch path and
    // reaches the detection exit.
    let state = interp::load_image(&c.scanner_inline, &witness.inputs).unwrap();
    let (state, trace) = interp::run(&c.scanner_inline, state, 1_000_000);
    assert_eq!(state.status, interp::Status::Halted(1));
    assert_eq!(trace.branch_records(), witness.branch_path);
    validate_trace(&c.scanner_inline, &trace);
}

#[test]
fn target_on_seed_path_returns_seed_unchanged() {
    let c = corpus();
    let seed = inline_inputs(TEST_DB, &[0x58; 8]);
    let result = directed_search(
        &c.scanner_inline,
        &seed,
        &SymbolicMarks::one("file"),
        &TargetSpec::label("clean"),
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
    )
    .unwrap();
    let witness = result.witness().expect("clean endpoint is on the seed path");
    assert_eq!(witness.inputs, seed, "witness equals the seed inputs");
    assert_eq!(witness.stats.iterations, 1, "zero negations needed");
    assert_eq!(witness.stats.solver_calls, 0);
}

#[test]
fn directed_beats_fifo_on_solver_calls() {
    let c = corpus();
    let seed = inline_inputs(TEST_DB, &[0x58; 8]);
    let run = |order: SearchOrder| {
        let config = SearchConfig { order, ..SearchConfig::default() };
        let result = directed_search(
            &c.scanner_inline,
            &seed,
            &SymbolicMarks::one("file"),
            &detected(&c.scanner_inline),
            &ExternalPolicy::Halt,
            &config,
        )
        .unwrap();
        result.stats().solver_calls
    };
    let directed = run(SearchOrder::Directed);
    let fifo = run(SearchOrder::Fifo);
    assert!(
        directed <= fifo,
        "directed order used {directed} solver calls, fifo used {fifo}"
    );
}

#[test]
fn search_is_deterministic() {
    let c = corpus();
    let seed = inline_inputs(TEST_DB, &[0x58; 8]);
    let go = || {
        let result = directed_search(
            &c.scanner_inline,
            &seed,
            &SymbolicMarks::one("file"),
            &detected(&c.scanner_inline),
            &ExternalPolicy::Halt,
            &SearchConfig::default(),
        )
        .unwrap();
        let w = result.witness().unwrap().clone();
        (w.inputs, w.branch_path, w.stats)
    };
    assert_eq!(go(), go());
}

#[test]
fn concretize_never_reaches_detection_on_dylib() {
    let c = corpus();
    let seed = inline_inputs(TEST_DB, &[0x58; 8]);
    let result = directed_search(
        &c.scanner_dylib,
        &seed,
        &SymbolicMarks::one("file"),
        &detected(&c.scanner_dylib),
        &ExternalPolicy::Concretize,
        &SearchConfig::default(),
    )
    .unwrap();
    assert!(
        matches!(result, SearchResult::Exhausted(_)),
        "silent concretization strips every symbolic constraint, got {}",
        result.verdict()
    );
    // No library constraint was ever collected, so nothing was negatable.
    assert_eq!(result.stats().candidates_enumerated, 0);
}

#[test]
fn mapped_policy_reaches_detection_on_dylib() {
    let c = corpus();
    // One concrete detection pre-run charts the library.
    let prerun = inline_inputs(TEST_DB, b"ABC\x00\x00\x00\x00\x00");
    let (text, state) = interp::record_replay(&c.scanner_dylib, &prerun, 1_000_000).unwrap();
    assert_eq!(state.status, interp::Status::Halted(1), "pre-run must detect");
    let trace = interp::trace_from_text(&text, &c.scanner_dylib).unwrap();
    let map = build_map(std::slice::from_ref(&trace), &c.scanner_dylib).unwrap();
    assert!(map.loads.contains("str"));

    let seed = inline_inputs(TEST_DB, &[0x58; 8]);
    let config = SearchConfig {
        restrict_to_map: Some(map.clone()),
        ..SearchConfig::default()
    };
    let result = directed_search(
        &c.scanner_dylib,
        &seed,
        &SymbolicMarks::one("file"),
        &detected(&c.scanner_dylib),
        &ExternalPolicy::Mapped(map),
        &config,
    )
    .unwrap();
    let witness = result.witness().expect("map execution must recover the pattern");
    let file = &witness.inputs.region("file").unwrap().bytes;
    assert!(file.windows(3).any(|w| w == [0x41, 0x42, 0x43]));

    let st = interp::load_image(&c.scanner_dylib, &witness.inputs).unwrap();
    let (st, _) = interp::run(&c.scanner_dylib, st, 1_000_000);
    assert_eq!(st.status, interp::Status::Halted(1));
}

#[test]
fn map_restriction_only_explores_mapped_blocks() {
    let c = corpus();
    let prerun = inline_inputs(TEST_DB, b"ABC\x00\x00\x00\x00\x00");
    let (text, _) = interp::record_replay(&c.scanner_dylib, &prerun, 1_000_000).unwrap();
    let trace = interp::trace_from_text(&text, &c.scanner_dylib).unwrap();
    let map = build_map(std::slice::from_ref(&trace), &c.scanner_dylib).unwrap();

    // With the map restriction on, skipped candidates are accounted and
    // the search still succeeds through mapped blocks only.
    let seed = inline_inputs(TEST_DB, &[0x58; 8]);
    let config =
        SearchConfig { restrict_to_map: Some(map.clone()), ..SearchConfig::default() };
    let result = directed_search(
        &c.scanner_dylib,
        &seed,
        &SymbolicMarks::one("file"),
        &detected(&c.scanner_dylib),
        &ExternalPolicy::Mapped(map),
        &config,
    )
    .unwrap();
    assert!(result.witness().is_some());
}

#[test]
fn loop_scanner_terminates_with_bounds() {
    let c = corpus();
    // The gate byte is 0xAA; an absolute-offset rule starting 0xAA is
    // unreachable (the gate would spin forever), so the search must prove
    // itself out of candidates instead of diverging.
    let db = "Gate:0:aa42\n";
    let seed = inline_inputs(db, &[0x00; 6]);
    let config = SearchConfig {
        loop_bound: 128,
        max_frontier: 4096,
        fuel: 50_000,
        ..SearchConfig::default()
    };
    let start = std::time::Instant::now();
    let result = directed_search(
        &c.scanner_loop,
        &seed,
        &SymbolicMarks::one("file"),
        &detected(&c.scanner_loop),
        &ExternalPolicy::Halt,
        &config,
    )
    .unwrap();
    assert!(start.elapsed().as_secs() < 30);
    assert!(
        matches!(result, SearchResult::Exhausted(_) | SearchResult::BudgetExceeded(_)),
        "got {}",
        result.verdict()
    );
    // The run that satisfied the gate spun until fuel ran out, and its
    // loop iterations were bounded away instead of enumerated.
    assert!(result.stats().skipped_loop_bound > 0 || result.stats().unsat > 0);
}

#[test]
fn loop_scanner_still_finds_reachable_patterns() {
    let c = corpus();
    let seed = inline_inputs(TEST_DB, &[0x00; 8]);
    let config = SearchConfig { fuel: 50_000, ..SearchConfig::default() };
    let result = directed_search(
        &c.scanner_loop,
        &seed,
        &SymbolicMarks::one("file"),
        &detected(&c.scanner_loop),
        &ExternalPolicy::Halt,
        &config,
    )
    .unwrap();
    let witness = result.witness().expect("pattern is reachable despite the gate");
    let file = &witness.inputs.region("file").unwrap().bytes;
    assert!(file.windows(3).any(|w| w == [0x41, 0x42, 0x43]));
    assert_ne!(file[0], 0xAA, "witness respects the gate constraint");
}

#[test]
fn concolic_trace_matches_interp_on_the_corpus() {
    // Concrete-path fidelity across policies for every shipped scanner.
    let c = corpus();
    let db = parse_db(TEST_DB).unwrap();
    for (name, program) in [
        ("inline", &c.scanner_inline),
        ("dylib", &c.scanner_dylib),
        ("loop", &c.scanner_loop),
    ] {
        for file in [b"XABCY".as_slice(), b"".as_slice(), &[0x41; 4]] {
            let inputs = scan_inputs(&db, file);
            let state = interp::load_image(program, &inputs).unwrap();
            let (_, reference) = interp::run(program, state, 100_000);
            for policy in [ExternalPolicy::Halt, ExternalPolicy::Concretize] {
                let run = siglift::concolic::execute_concolic(
                    program,
                    &inputs,
                    &SymbolicMarks::one("file"),
                    &policy,
                    100_000,
                )
                .unwrap();
                if matches!(run.outcome, siglift::concolic::ConcolicOutcome::PolicyHalt { .. }) {
                    // Policy stops early; the trace is a strict prefix.
                    let n = run.trace.events.len();
                    assert_eq!(
                        run.trace.events[..],
                        reference.events[..n],
                        "{name} under {} truncates to a prefix",
                        policy.name()
                    );
                } else {
                    assert_eq!(
                        run.trace, reference,
                        "{name} under {} must follow the concrete path exactly",
                        policy.name()
                    );
                }
            }
        }
    }
}

#[test]
fn core_values_are_shareable_across_threads() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<Program>();
    assert_send_sync::<siglift::interp::MachineState>();
    assert_send_sync::<siglift::interp::Trace>();
    assert_send_sync::<siglift::symexpr::Expr>();
    assert_send_sync::<siglift::symexpr::BoolExpr>();
    assert_send_sync::<siglift::symexpr::PathCondition>();
    assert_send_sync::<siglift::search::ExecutionMap>();
    assert_send_sync::<InputImage>();
}

#[test]
fn recorded_traces_end_in_the_right_exit_block() {
    let c = corpus();
    let detected_block = {
        let pc = TargetSpec::label("detected").resolve(&c.scanner_inline).unwrap();
        c.scanner_inline.cfg().block_at(pc).unwrap()
    };
    let clean_block = {
        let pc = TargetSpec::label("clean").resolve(&c.scanner_inline).unwrap();
        c.scanner_inline.cfg().block_at(pc).unwrap()
    };

    let last_block = |file: &[u8]| {
        let inputs = inline_inputs(TEST_DB, file);
        let (text, _) = interp::record_replay(&c.scanner_inline, &inputs, 1_000_000).unwrap();
        let trace = interp::trace_from_text(&text, &c.scanner_inline).unwrap();
        trace.blocks().last().unwrap()
    };

    assert_eq!(last_block(b"XABCY"), detected_block);
    assert_eq!(last_block(b"XXXXX"), clean_block);

    // An empty file region records zero comparison-loop iterations.
    let inputs = inline_inputs(TEST_DB, b"");
    let (text, state) = interp::record_replay(&c.scanner_inline, &inputs, 1_000_000).unwrap();
    assert_eq!(state.status, interp::Status::Halted(0));
    let trace = interp::trace_from_text(&text, &c.scanner_inline).unwrap();
    let cmp_block = {
        let pc = TargetSpec::label("cmp_loop").resolve(&c.scanner_inline).unwrap();
        c.scanner_inline.cfg().block_at(pc).unwrap()
    };
    assert!(trace.blocks().all(|b| b != cmp_block), "no comparison iterations");
}

#[test]
fn detection_path_condition_closes_the_loop() {
    // A concrete file that already matches: the collected path condition
    // must pin the match bytes, and solving plus re-running reproduces the
    // same endpoint.
    let c = corpus();
    let inputs = inline_inputs(TEST_DB, b"ABC");
    let run = siglift::concolic::execute_concolic(
        &c.scanner_inline,
        &inputs,
        &SymbolicMarks::one("file"),
        &ExternalPolicy::Halt,
        1_000_000,
    )
    .unwrap();
    assert_eq!(run.outcome, siglift::concolic::ConcolicOutcome::Halted(1));

    // The condition forces file[0..3] = 41 42 43 for any solution.
    let solved = siglift::solver::solve(&run.path, &Default::default());
    let assignment = solved.assignment().expect("detection path is satisfiable").clone();
    let patched = inputs.patched(&assignment);
    assert_eq!(patched.region("file").unwrap().bytes, b"ABC".to_vec());
    let st = interp::load_image(&c.scanner_inline, &patched).unwrap();
    let (st, trace) = interp::run(&c.scanner_inline, st, 1_000_000);
    assert_eq!(st.status, interp::Status::Halted(1));
    assert_eq!(trace.branch_records(), run.trace.branch_records());
}

#[test]
fn restriction_to_a_clean_map_blocks_detection() {
    // A map recorded only from a clean run misses the comparison-continue
    // blocks, so with the restriction on, no candidate survives.
    let c = corpus();
    let clean_run = inline_inputs(TEST_DB, &[0x00; 8]);
    let (text, state) = interp::record_replay(&c.scanner_inline, &clean_run, 1_000_000).unwrap();
    assert_eq!(state.status, interp::Status::Halted(0));
    let trace = interp::trace_from_text(&text, &c.scanner_inline).unwrap();
    let map = build_map(std::slice::from_ref(&trace), &c.scanner_inline).unwrap();

    let seed = inline_inputs(TEST_DB, &[0x00; 8]);
    let config = SearchConfig { restrict_to_map: Some(map), ..SearchConfig::default() };
    let result = directed_search(
        &c.scanner_inline,
        &seed,
        &SymbolicMarks::one("file"),
        &detected(&c.scanner_inline),
        &ExternalPolicy::Halt,
        &config,
    )
    .unwrap();
    assert!(matches!(result, SearchResult::Exhausted(_)), "got {}", result.verdict());
    assert!(result.stats().skipped_map > 0, "candidates were skipped by the map filter");
}

#[test]
fn detection_prerun_map_contains_library_blocks() {
    let c = corpus();
    let prerun = inline_inputs(TEST_DB, b"ABC\x00\x00\x00\x00\x00");
    let (text, _) = interp::record_replay(&c.scanner_dylib, &prerun, 1_000_000).unwrap();
    let trace = interp::trace_from_text(&text, &c.scanner_dylib).unwrap();
    let map = build_map(std::slice::from_ref(&trace), &c.scanner_dylib).unwrap();
    let lib_id = c.scanner_dylib.module_id("str").unwrap();
    let cfg = c.scanner_dylib.cfg();
    assert!(
        map.blocks.iter().any(|b| cfg.block(*b).module == lib_id),
        "map covers blocks inside the library"
    );
    assert!(map.call_sites.iter().any(|(_, sym)| sym == "str.match"));
}

#[test]
fn extraction_recovers_the_planted_rule() {
    let c = corpus();
    let report = extract_signature(
        &c.scanner_inline,
        TEST_DB,
        8,
        &TargetSpec::label("detected"),
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(report.outcome, "witness");
    assert_eq!(report.verification, Some(true));
    assert_eq!(report.recovered_pattern.as_deref(), Some("414243"));
    assert_eq!(report.equality_vs_ground_truth, Some(true));
}

#[test]
fn extraction_fails_under_concretize_and_succeeds_mapped() {
    let c = corpus();

    let failing = extract_signature(
        &c.scanner_dylib,
        TEST_DB,
        8,
        &TargetSpec::label("detected"),
        &ExternalPolicy::Concretize,
        &SearchConfig::default(),
        None,
    )
    .unwrap();
    assert_ne!(failing.outcome, "witness");
    assert!(failing.witness_bytes.is_none());
    assert!(failing.verification.is_none());

    // Same scanner, same database; only the policy changes.
    let prerun = inline_inputs(TEST_DB, b"ABC\x00\x00\x00\x00\x00");
    let succeeding = extract_signature(
        &c.scanner_dylib,
        TEST_DB,
        8,
        &TargetSpec::label("detected"),
        &ExternalPolicy::Mapped(Default::default()),
        &SearchConfig::default(),
        Some(&[prerun]),
    )
    .unwrap();
    assert_eq!(succeeding.outcome, "witness");
    assert_eq!(succeeding.verification, Some(true));
    assert_eq!(succeeding.recovered_pattern.as_deref(), Some("414243"));
    assert_eq!(succeeding.equality_vs_ground_truth, Some(true));
}

#[test]
fn extraction_handles_absolute_offset_rules() {
    let c = corpus();
    let report = extract_signature(
        &c.scanner_inline,
        "Fix:3:4445\n",
        8,
        &TargetSpec::label("detected"),
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(report.outcome, "witness");
    assert_eq!(report.matched_offset, Some(3));
    assert_eq!(report.recovered_pattern.as_deref(), Some("4445"));
    assert_eq!(report.equality_vs_ground_truth, Some(true));
}

#[test]
fn extraction_selects_the_matched_rule_for_ground_truth() {
    let c = corpus();
    // Two rules; the first one's absolute offset cannot fit in the file,
    // so detection must come from the second.
    let db = "Skip:7:4142\nShort:*:5152\n";
    let report = extract_signature(
        &c.scanner_inline,
        db,
        8,
        &TargetSpec::label("detected"),
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(report.outcome, "witness");
    assert_eq!(report.recovered_pattern.as_deref(), Some("5152"));
    assert_eq!(report.equality_vs_ground_truth, Some(true));
}

#[test]
fn extraction_rejects_short_files() {
    let c = corpus();
    let err = extract_signature(
        &c.scanner_inline,
        TEST_DB,
        2,
        &TargetSpec::label("detected"),
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
        None,
    );
    assert!(err.is_err());
}

#[test]
fn randomized_patterns_round_trip_through_extraction() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let c = corpus();
    let mut rng = StdRng::seed_from_u64(0x5161_1f7a);
    for case in 0..10 {
        let len = rng.gen_range(1..=6);
        let pattern: Vec<u8> = (0..len).map(|_| rng.gen_range(0x20..0x7F)).collect();
        let db = SignatureDb {
            rules: vec![siglift::sigextract::SignatureRule {
                name: "R".to_string(),
                offset: RuleOffset::Anywhere,
                pattern: pattern.clone(),
            }],
        };
        let report = extract_signature(
            &c.scanner_inline,
            &siglift::sigextract::db_to_text(&db),
            8,
            &TargetSpec::label("detected"),
            &ExternalPolicy::Halt,
            &SearchConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(report.outcome, "witness", "case {case}, pattern {pattern:02x?}");
        assert_eq!(
            report.recovered_pattern.as_deref(),
            Some(hex::encode(&pattern).as_str()),
            "case {case}"
        );
        assert_eq!(report.equality_vs_ground_truth, Some(true), "case {case}");
    }
}
