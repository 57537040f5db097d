//! Feed the bitvector solver a constraint set in the textual format and
//! verify the witness with the independent evaluation oracle.
//!
//! ```sh
//! cargo run --example solve_witness
//! ```

use siglift::solver::{solve_constraints, SolveResult, SolverBudget};
use siglift::symexpr::parse_constraints;

const CONSTRAINTS: &str = "\
; file[0] is printable, not a letter, and xors with file[1] to 0x11
(not (ult (var file 0) (const 8 0x20)))
(ult (var file 0) (const 8 0x41))
(= (bvxor (var file 0) (var file 1)) (const 8 0x11))
";

fn main() {
    let constraints = parse_constraints(CONSTRAINTS).expect("constraints parse");
    let refs: Vec<&_> = constraints.iter().collect();

    match solve_constraints(&refs, &SolverBudget::default()) {
        SolveResult::Sat(assignment) => {
            println!("sat");
            for (var, value) in &assignment {
                println!("  {var} = 0x{value:02x}");
            }
            // Close the loop: every constraint holds under the witness.
            for c in &constraints {
                assert_eq!(c.eval(&assignment), Ok(true), "witness must satisfy {c}");
            }
            println!("witness verified by direct evaluation");
        }
        SolveResult::Unsat => println!("unsat"),
        SolveResult::Unknown { decisions } => {
            println!("unknown after {decisions} decisions")
        }
    }
}
