//! Mark an input region symbolic and watch the path condition grow: every
//! conditional branch that depends on the marked bytes contributes one
//! constraint for the direction the concrete run took.
//!
//! ```sh
//! cargo run --example concolic_constraints
//! ```

use siglift::concolic::{execute_concolic, negate_at, ExternalPolicy, SymbolicMarks};
use siglift::interp::InputImage;
use siglift::isa::parse_program;
use siglift::solver::{solve, SolveResult, SolverBudget};

// Classifies file[0]: '<' digits, letters, everything else.
const SOURCE: &str = "\
main:
  const r1, 0x1000
  load8 r2, [r1]
  lt r3, r2, 0x30
  jnz r3, low
  lt r3, r2, 0x3A
  jnz r3, digit
  const r0, 3
  halt r0
low:
  const r0, 1
  halt r0
digit:
  const r0, 2
  halt r0
";

fn main() {
    let program = parse_program(SOURCE).expect("source assembles");
    let inputs = InputImage::new().with_region("file", 0x1000, vec![b'Q']);

    let run = execute_concolic(
        &program,
        &inputs,
        &SymbolicMarks::one("file"),
        &ExternalPolicy::Halt,
        10_000,
    )
    .expect("inputs are valid");

    println!("outcome: {:?}", run.outcome);
    println!("path condition ({} constraints):", run.path.len());
    print!("{}", run.path.to_text());

    // Negate the last branch and ask the solver for an input that takes
    // the other direction.
    let k = run.path.len() - 1;
    let flipped = negate_at(&run.path, k).expect("index in range");
    match solve(&flipped, &SolverBudget::default()) {
        SolveResult::Sat(a) => {
            println!("\nflipping branch {k} is satisfied by:");
            for (var, value) in &a {
                println!("  {var} = 0x{value:02x}");
            }
        }
        other => println!("\nflipping branch {k}: {other:?}"),
    }
}
