//! Write the shipped scanner corpus (and a matching one-rule database and
//! detection seed) to a directory, ready for the `siglift` binary.
//!
//! ```sh
//! cargo run --example export_corpus -- /tmp/corpus
//! siglift extract /tmp/corpus/scanner_inline.asm \
//!     --db /tmp/corpus/sig.db --file-len 8 --target detected \
//!     --report /tmp/report.json
//! ```

use std::fs;
use std::path::PathBuf;

use siglift::sigextract::{
    gen_min_db, RuleOffset, SCANNER_DYLIB_SRC, SCANNER_INLINE_SRC, SCANNER_LOOP_SRC,
};

fn main() -> std::io::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "corpus-out".to_string())
        .into();
    fs::create_dir_all(&dir)?;

    fs::write(dir.join("scanner_inline.asm"), SCANNER_INLINE_SRC)?;
    fs::write(dir.join("scanner_dylib.asm"), SCANNER_DYLIB_SRC)?;
    fs::write(dir.join("scanner_loop.asm"), SCANNER_LOOP_SRC)?;

    let db = gen_min_db("Test", "414243", RuleOffset::Anywhere).expect("valid rule");
    fs::write(dir.join("sig.db"), &db)?;
    // A concrete file the scanners detect; useful as a mapped-mode pre-run.
    fs::write(dir.join("seed.bin"), b"ABC\x00\x00\x00\x00\x00")?;

    println!("corpus written to {}", dir.display());
    println!("  scanner_inline.asm  scanner_dylib.asm  scanner_loop.asm");
    println!("  sig.db ({})  seed.bin", db.trim_end());
    Ok(())
}
