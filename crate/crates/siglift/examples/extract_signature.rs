//! The whole strategy end to end: generate a minimal one-rule database,
//! map it concretely next to a symbolic file, drive the scanner to its
//! detection endpoint, and read the signature bytes back out of the
//! witness.
//!
//! ```sh
//! cargo run --example extract_signature
//! ```

use siglift::concolic::ExternalPolicy;
use siglift::search::{SearchConfig, TargetSpec};
use siglift::sigextract::{corpus, extract_signature, gen_min_db, RuleOffset};

fn main() {
    let scanner = corpus().scanner_inline;

    // The secret the scanner knows and we pretend not to.
    let db_text = gen_min_db("Secret", "6d616c77617265", RuleOffset::Anywhere)
        .expect("valid rule");
    println!("database under test:\n{db_text}");

    let report = extract_signature(
        &scanner,
        &db_text,
        12,
        &TargetSpec::label("detected"),
        &ExternalPolicy::Halt,
        &SearchConfig::default(),
        None,
    )
    .expect("extraction runs");

    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    if let Some(hex) = &report.recovered_pattern {
        let bytes = hex::decode(hex).unwrap();
        println!(
            "\nrecovered signature: {hex} ({:?})",
            String::from_utf8_lossy(&bytes)
        );
        println!("matches the planted rule: {:?}", report.equality_vs_ground_truth);
    }
}
