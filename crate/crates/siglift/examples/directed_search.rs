//! Drive the inline scanner to its detection endpoint from a neutral seed
//! file: run, negate the best-scored branch, solve, patch, repeat.
//!
//! ```sh
//! cargo run --example directed_search
//! ```

use siglift::concolic::{ExternalPolicy, SymbolicMarks};
use siglift::search::{directed_search, SearchConfig, SearchReport, TargetSpec};
use siglift::sigextract::{corpus, parse_db, scan_inputs};

fn main() {
    let scanner = corpus().scanner_inline;
    let db = parse_db("Demo:*:44454647\n").expect("rule parses"); // "DEFG"
    let seed = scan_inputs(&db, &[siglift::search::DEFAULT_SEED_FILL; 12]);

    let target = TargetSpec::label("detected");
    let result = directed_search(
        &scanner,
        &seed,
        &SymbolicMarks::one("file"),
        &target,
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
    )
    .expect("search setup is valid");

    let report = SearchReport::from_result(&target, &result);
    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    if let Some(witness) = result.witness() {
        let file = &witness.inputs.region("file").unwrap().bytes;
        println!("\nwitness file bytes: {file:02x?}");
        println!(
            "as text: {:?}",
            String::from_utf8_lossy(file)
        );
        println!("iterations: {}", witness.stats.iterations);
        println!("solver calls: {}", witness.stats.solver_calls);
    }
}
