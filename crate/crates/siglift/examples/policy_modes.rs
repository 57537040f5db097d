//! The external-call policies side by side on the library-backed scanner.
//!
//! `halt` refuses the first symbolic argument. `concretize` silently
//! strips symbolic state at the library boundary, so the search has
//! nothing to negate and detection is unreachable. `mapped` charts the
//! library with one concrete pre-run and then propagates shadows through
//! its bytecode, which makes extraction work again.
//!
//! ```sh
//! cargo run --example policy_modes
//! ```

use siglift::concolic::{execute_concolic, ExternalPolicy, SymbolicMarks};
use siglift::interp::{record_replay, trace_from_text};
use siglift::search::{build_map, directed_search, SearchConfig, TargetSpec};
use siglift::sigextract::{corpus, parse_db, scan_inputs};

fn main() {
    let scanner = corpus().scanner_dylib;
    let db = parse_db("Demo:*:414243\n").expect("rule parses");
    let seed = scan_inputs(&db, &[0x58; 8]);
    let marks = SymbolicMarks::one("file");
    let target = TargetSpec::label("detected");

    // halt: the analysis stops at the first symbolic library argument.
    let run = execute_concolic(&scanner, &seed, &marks, &ExternalPolicy::Halt, 100_000)
        .expect("valid inputs");
    println!("halt policy:       {:?}", run.outcome);

    // concretize: the run completes but collects no file constraints.
    let run = execute_concolic(&scanner, &seed, &marks, &ExternalPolicy::Concretize, 100_000)
        .expect("valid inputs");
    println!(
        "concretize policy: {:?}, {} constraints collected",
        run.outcome,
        run.path.len()
    );
    let result = directed_search(
        &scanner,
        &seed,
        &marks,
        &target,
        &ExternalPolicy::Concretize,
        &SearchConfig::default(),
    )
    .expect("search setup is valid");
    println!("concretize search: {}", result.verdict());

    // mapped: one detection pre-run charts the library, and the search
    // recovers the pattern through its code.
    let prerun = scan_inputs(&db, b"ABC\x00\x00\x00\x00\x00");
    let (trace_text, _) = record_replay(&scanner, &prerun, 1_000_000).expect("pre-run executes");
    let trace = trace_from_text(&trace_text, &scanner).expect("trace parses");
    let map = build_map(std::slice::from_ref(&trace), &scanner).expect("map builds");
    println!("map covers libraries {:?}", map.loads);

    let config = SearchConfig { restrict_to_map: Some(map.clone()), ..SearchConfig::default() };
    let result = directed_search(
        &scanner,
        &seed,
        &marks,
        &target,
        &ExternalPolicy::Mapped(map),
        &config,
    )
    .expect("search setup is valid");
    println!("mapped search:     {}", result.verdict());
    if let Some(w) = result.witness() {
        println!(
            "recovered file bytes: {:02x?}",
            w.inputs.region("file").unwrap().bytes
        );
    }
}
