//! Assemble a two-module program, inspect its structure, and round-trip
//! it through the canonical text form.
//!
//! ```sh
//! cargo run --example assemble_disassemble
//! ```

use siglift::isa::{parse_program, program_text};

const SOURCE: &str = "\
.module main
main:
  const r0, 5
  const r1, 7
  xcall math.max
  halt r0

.module math
max:
  lt r2, r0, r1
  jz r2, keep
  mov r0, r1
keep:
  ret
";

fn main() {
    let program = parse_program(SOURCE).expect("source assembles");

    println!("modules: {}", program.module_count());
    for id in 0..program.module_count() {
        let m = program.module(id);
        println!(
            "  {}: {} instructions, labels {:?}",
            m.name,
            m.instructions.len(),
            m.labels.keys().collect::<Vec<_>>()
        );
    }
    println!(
        "xcall math.max resolved to {:?}",
        program.resolve_symbol("math.max")
    );

    // Canonical text re-parses to an equal program.
    let text = program_text(&program);
    println!("\ncanonical form:\n{text}");
    let again = parse_program(&text).expect("canonical text parses");
    assert_eq!(program, again);

    // The control-flow graph renders as Graphviz.
    println!("cfg:\n{}", program.cfg().dot(&program));
}
