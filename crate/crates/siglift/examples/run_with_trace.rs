//! Map input regions into memory, run a program concretely, and print the
//! recorded execution trace.
//!
//! ```sh
//! cargo run --example run_with_trace
//! ```

use siglift::interp::{load_image, run, trace_to_text, InputImage, DEFAULT_FUEL};
use siglift::isa::parse_program;

// Sums the bytes of its input region. The input table at 0x0F00 holds
// (base, length) for each mapped region, so nothing is hard-coded.
const SOURCE: &str = "\
main:
  const r1, 0x0F00
  load32 r2, [r1]       ; region base
  load32 r3, [r1+4]     ; region length
  const r0, 0           ; accumulator
loop:
  jz r3, done
  load8 r4, [r2]
  add r0, r0, r4
  add r2, r2, 1
  sub r3, r3, 1
  jmp loop
done:
  halt r0
";

fn main() {
    let program = parse_program(SOURCE).expect("source assembles");
    let inputs = InputImage::new().with_region("data", 0x1000, vec![10, 20, 30, 40]);

    let state = load_image(&program, &inputs).expect("regions are well-formed");
    let (state, trace) = run(&program, state, DEFAULT_FUEL);

    println!("status: {:?}", state.status);
    println!("steps:  {}", trace.steps);
    println!("\ntrace file:\n{}", trace_to_text(&trace, &program));
}
