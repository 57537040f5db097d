//! Command-line frontend over the whole pipeline.
//!
//! Exit codes: 0 success or witness found, 1 usage error, 2 input or parse
//! error, 3 target not reached (search exhausted or out of budget, solver
//! unsat/unknown), 4 internal fault (program fault during a run, replay
//! divergence).
//!
//! Machine-readable results go to stdout, diagnostics to stderr, reports
//! to files. Output is byte-for-byte reproducible for identical inputs;
//! `--stamp` opts into a timestamp field in reports.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::concolic::{execute_concolic, ConcolicOutcome, ExternalPolicy, SymbolicMarks};
use crate::interp::{self, InputImage, Status};
use crate::isa::{parse_program, program_text, Program};
use crate::search::{
    build_map, directed_search, ExecutionMap, SearchConfig, SearchError, SearchReport,
    SearchResult, TargetSpec,
};
use crate::sigextract::{extract_signature, parse_db, scan_inputs};
use crate::solver::{solve_constraints, SolveResult, SolverBudget};
use crate::symexpr::parse_constraints;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_REACHED: i32 = 3;
pub const EXIT_FAULT: i32 = 4;

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> CliError {
        CliError { code: EXIT_INPUT, message: msg.into() }
    }

    fn usage(msg: impl Into<String>) -> CliError {
        CliError { code: EXIT_USAGE, message: msg.into() }
    }

    fn fault(msg: impl Into<String>) -> CliError {
        CliError { code: EXIT_FAULT, message: msg.into() }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "siglift",
    version,
    about = "Concolic execution over a small bytecode VM, with directed search and signature extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assemble and link a program source, writing canonical text.
    Asm(AsmArgs),
    /// Run a program concretely and print its final status.
    Run(RunArgs),
    /// Run a program and write the execution trace.
    Trace(TraceArgs),
    /// Print the control-flow graph.
    Cfg(CfgArgs),
    /// Decide a constraint file and print a witness.
    Solve(SolveArgs),
    /// Run concolically and report the collected path condition.
    Concolic(ConcolicArgs),
    /// Search for an input that reaches a target site.
    Search(SearchArgs),
    /// Recover the signature bytes a scanner matches on.
    Extract(ExtractArgs),
}

#[derive(Args, Debug)]
struct AsmArgs {
    /// Program source file (`.module` sections or a bare main module).
    src: PathBuf,
    /// Output path for the canonical program text.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct InputFlags {
    /// Input region: name=file@hexaddr (repeatable).
    #[arg(long = "input", value_name = "SPEC")]
    inputs: Vec<String>,
    /// Instruction budget for one run.
    #[arg(long, default_value_t = interp::DEFAULT_FUEL)]
    fuel: u64,
}

#[derive(Args, Debug)]
struct RunArgs {
    prog: PathBuf,
    #[command(flatten)]
    input: InputFlags,
}

#[derive(Args, Debug)]
struct TraceArgs {
    prog: PathBuf,
    #[command(flatten)]
    input: InputFlags,
    /// Write the trace here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CfgArgs {
    prog: PathBuf,
    /// Emit Graphviz digraph text.
    #[arg(long)]
    dot: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Constraint file, one constraint per line.
    constraints: PathBuf,
    /// Solver decision budget.
    #[arg(long, default_value_t = 1_000_000)]
    max_decisions: u64,
    /// Solver time budget in seconds.
    #[arg(long, default_value_t = 10)]
    max_seconds: u64,
}

#[derive(Args, Debug)]
struct PolicyFlags {
    /// External-call policy.
    #[arg(long, value_parser = ["halt", "concretize", "mapped"], default_value = "halt")]
    policy: String,
    /// Trace files that build the execution map (repeatable).
    #[arg(long = "map", value_name = "TRACEFILE")]
    map_files: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct ConcolicArgs {
    prog: PathBuf,
    #[command(flatten)]
    input: InputFlags,
    /// Region to mark symbolic (repeatable).
    #[arg(long = "symbolic", value_name = "REGION", required = true)]
    symbolic: Vec<String>,
    #[command(flatten)]
    policy: PolicyFlags,
    /// Print the path condition in the constraint text format.
    #[arg(long)]
    dump_constraints: bool,
}

#[derive(Args, Debug)]
struct SearchArgs {
    prog: PathBuf,
    #[command(flatten)]
    input: InputFlags,
    /// Region to mark symbolic (repeatable).
    #[arg(long = "symbolic", value_name = "REGION", required = true)]
    symbolic: Vec<String>,
    /// Target label or module:index.
    #[arg(long)]
    target: String,
    #[command(flatten)]
    policy: PolicyFlags,
    /// Restrict exploration to blocks in the map.
    #[arg(long)]
    restrict_to_map: bool,
    /// Max visits of one block per candidate path.
    #[arg(long, default_value_t = 128)]
    loop_bound: u32,
    /// Max frontier states.
    #[arg(long = "max-states", default_value_t = 4096)]
    max_states: usize,
    /// Max solver calls.
    #[arg(long, default_value_t = 512)]
    max_solver_calls: u32,
    /// Parallelism hint for candidate solving.
    #[arg(long, default_value_t = 1)]
    jobs: u32,
    /// Add a timestamp to the report.
    #[arg(long)]
    stamp: bool,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Scanner program source.
    scanner: PathBuf,
    /// Signature database file.
    #[arg(long)]
    db: PathBuf,
    /// Length of the symbolic file region.
    #[arg(long)]
    file_len: usize,
    /// Target label or module:index.
    #[arg(long)]
    target: String,
    #[command(flatten)]
    policy: PolicyFlags,
    /// Concrete pre-run file (bytes for the file region; repeatable).
    #[arg(long = "prerun", value_name = "FILE")]
    preruns: Vec<PathBuf>,
    /// Where to write the extraction report.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = interp::DEFAULT_FUEL)]
    fuel: u64,
    #[arg(long, default_value_t = 128)]
    loop_bound: u32,
    #[arg(long = "max-states", default_value_t = 4096)]
    max_states: usize,
    #[arg(long, default_value_t = 512)]
    max_solver_calls: u32,
    #[arg(long, default_value_t = 1)]
    jobs: u32,
    /// Add a timestamp to the report.
    #[arg(long)]
    stamp: bool,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Asm(args) => cmd_asm(args),
        Command::Run(args) => cmd_run(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Cfg(args) => cmd_cfg(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Concolic(args) => cmd_concolic(args),
        Command::Search(args) => cmd_search(args),
        Command::Extract(args) => cmd_extract(args),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<Program, CliError> {
    let source = read_text(path)?;
    parse_program(&source).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// `name=file@hexaddr` to a mapped region.
fn parse_input_specs(specs: &[String]) -> Result<InputImage, CliError> {
    let mut image = InputImage::new();
    for spec in specs {
        let (name, rest) = spec
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("bad input spec '{spec}' (want name=file@hexaddr)")))?;
        let (file, addr) = rest
            .rsplit_once('@')
            .ok_or_else(|| CliError::usage(format!("bad input spec '{spec}' (want name=file@hexaddr)")))?;
        let addr = addr.strip_prefix("0x").or_else(|| addr.strip_prefix("0X")).unwrap_or(addr);
        let base = u32::from_str_radix(addr, 16)
            .map_err(|_| CliError::usage(format!("bad address in input spec '{spec}'")))?;
        let bytes = read_bytes(Path::new(file))?;
        image = image.with_region(name, base, bytes);
    }
    Ok(image)
}

fn build_policy(
    flags: &PolicyFlags,
    program: &Program,
) -> Result<(ExternalPolicy, Option<ExecutionMap>), CliError> {
    let map = if flags.map_files.is_empty() {
        None
    } else {
        let mut traces = Vec::new();
        for path in &flags.map_files {
            let text = read_text(path)?;
            let trace = interp::trace_from_text(&text, program)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            traces.push(trace);
        }
        Some(
            build_map(&traces, program)
                .map_err(|e| CliError::input(e.to_string()))?,
        )
    };
    let policy = match flags.policy.as_str() {
        "halt" => ExternalPolicy::Halt,
        "concretize" => ExternalPolicy::Concretize,
        "mapped" => ExternalPolicy::Mapped(map.clone().ok_or_else(|| {
            CliError::usage("--policy mapped requires at least one --map trace file")
        })?),
        other => return Err(CliError::usage(format!("unknown policy '{other}'"))),
    };
    Ok((policy, map))
}

fn status_line(status: &Status, program: &Program) -> String {
    match status {
        Status::Running => "fuel-exhausted".to_string(),
        Status::Halted(code) => format!("halted {code}"),
        Status::Fault { reason, pc } => format!(
            "fault {reason} at {}:{}",
            program.module_name(pc.module),
            pc.index
        ),
        Status::UnresolvedExternal { symbol, pc } => format!(
            "unresolved-external {symbol} at {}:{}",
            program.module_name(pc.module),
            pc.index
        ),
    }
}

fn status_exit(status: &Status) -> i32 {
    if status.is_fault() {
        EXIT_FAULT
    } else {
        EXIT_OK
    }
}

fn cmd_asm(args: AsmArgs) -> Result<i32, CliError> {
    let program = load_program(&args.src)?;
    write_text(&args.output, &program_text(&program))?;
    Ok(EXIT_OK)
}

fn cmd_run(args: RunArgs) -> Result<i32, CliError> {
    let program = load_program(&args.prog)?;
    let inputs = parse_input_specs(&args.input.inputs)?;
    let state = interp::load_image(&program, &inputs)
        .map_err(|e| CliError::input(e.to_string()))?;
    let (state, _) = interp::run(&program, state, args.input.fuel);
    println!("{}", status_line(&state.status, &program));
    Ok(status_exit(&state.status))
}

fn cmd_trace(args: TraceArgs) -> Result<i32, CliError> {
    let program = load_program(&args.prog)?;
    let inputs = parse_input_specs(&args.input.inputs)?;
    let (text, state) = interp::record_replay(&program, &inputs, args.input.fuel)
        .map_err(|e| CliError::input(e.to_string()))?;
    match &args.output {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    eprintln!("{}", status_line(&state.status, &program));
    Ok(status_exit(&state.status))
}

fn cmd_cfg(args: CfgArgs) -> Result<i32, CliError> {
    let program = load_program(&args.prog)?;
    let cfg = program.cfg();
    if args.dot {
        print!("{}", cfg.dot(&program));
    } else {
        println!("blocks {}", cfg.blocks.len());
        println!("edges {}", cfg.edges.len());
    }
    Ok(EXIT_OK)
}

fn cmd_solve(args: SolveArgs) -> Result<i32, CliError> {
    let text = read_text(&args.constraints)?;
    let constraints =
        parse_constraints(&text).map_err(|e| CliError::input(e.to_string()))?;
    let refs: Vec<&_> = constraints.iter().collect();
    let budget = SolverBudget {
        max_decisions: args.max_decisions,
        max_time: Duration::from_secs(args.max_seconds),
    };
    match solve_constraints(&refs, &budget) {
        SolveResult::Sat(assignment) => {
            println!("sat");
            for (var, value) in &assignment {
                println!("var {} {} = 0x{value:02x}", var.region, var.index);
            }
            Ok(EXIT_OK)
        }
        SolveResult::Unsat => {
            println!("unsat");
            Ok(EXIT_NOT_REACHED)
        }
        SolveResult::Unknown { decisions } => {
            println!("unknown");
            eprintln!("budget exhausted after {decisions} decisions");
            Ok(EXIT_NOT_REACHED)
        }
    }
}

fn cmd_concolic(args: ConcolicArgs) -> Result<i32, CliError> {
    let program = load_program(&args.prog)?;
    let inputs = parse_input_specs(&args.input.inputs)?;
    let (policy, _) = build_policy(&args.policy, &program)?;
    let marks = SymbolicMarks { regions: args.symbolic.clone() };
    let run = execute_concolic(&program, &inputs, &marks, &policy, args.input.fuel)
        .map_err(|e| CliError::input(e.to_string()))?;
    let outcome = match &run.outcome {
        ConcolicOutcome::Halted(code) => format!("halted {code}"),
        ConcolicOutcome::Fault { status, .. } => status_line(status, &program),
        ConcolicOutcome::FuelExhausted => "fuel-exhausted".to_string(),
        ConcolicOutcome::PolicyHalt { symbol, pc } => format!(
            "policy-halt {symbol} at {}:{}",
            program.module_name(pc.module),
            pc.index
        ),
    };
    println!("outcome {outcome}");
    println!("constraints {}", run.path.len());
    if args.dump_constraints {
        print!("{}", run.path.to_text());
    }
    Ok(match &run.outcome {
        ConcolicOutcome::Fault { .. } => EXIT_FAULT,
        _ => EXIT_OK,
    })
}

fn search_error(e: SearchError) -> CliError {
    match e {
        SearchError::Target(msg) => CliError::input(msg),
        SearchError::TargetOutsideBlocks => {
            CliError::input("target site is not inside any block")
        }
        SearchError::Concolic(e) => CliError::input(e.to_string()),
        SearchError::ReplayDivergence(msg) => CliError::fault(msg),
    }
}

fn stamp_now() -> u64 {
    SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn cmd_search(args: SearchArgs) -> Result<i32, CliError> {
    let program = load_program(&args.prog)?;
    let inputs = parse_input_specs(&args.input.inputs)?;
    let (policy, map) = build_policy(&args.policy, &program)?;
    let marks = SymbolicMarks { regions: args.symbolic.clone() };
    let target = TargetSpec::parse(&args.target);
    let config = SearchConfig {
        loop_bound: args.loop_bound,
        max_frontier: args.max_states,
        max_solver_calls: args.max_solver_calls,
        restrict_to_map: if args.restrict_to_map {
            Some(map.ok_or_else(|| {
                CliError::usage("--restrict-to-map requires at least one --map trace file")
            })?)
        } else {
            None
        },
        fuel: args.input.fuel,
        jobs: args.jobs,
        ..SearchConfig::default()
    };

    let result = directed_search(&program, &inputs, &marks, &target, &policy, &config)
        .map_err(search_error)?;
    let mut report = SearchReport::from_result(&target, &result);
    if args.stamp {
        report.stamp = Some(stamp_now());
    }
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::fault(e.to_string()))?;
    println!("{json}");
    Ok(match result {
        SearchResult::Witness(_) => EXIT_OK,
        _ => EXIT_NOT_REACHED,
    })
}

fn cmd_extract(args: ExtractArgs) -> Result<i32, CliError> {
    let program = load_program(&args.scanner)?;
    let db_text = read_text(&args.db)?;
    let db = parse_db(&db_text).map_err(|e| CliError::input(e.to_string()))?;
    let (policy, _) = match args.policy.policy.as_str() {
        // Extraction builds the map from pre-runs; an explicit --map set
        // is merged in on top.
        "mapped" if args.policy.map_files.is_empty() => {
            if args.preruns.is_empty() {
                return Err(CliError::usage(
                    "--policy mapped requires --prerun seeds or --map trace files",
                ));
            }
            (ExternalPolicy::Mapped(ExecutionMap::default()), None)
        }
        _ => build_policy(&args.policy, &program)?,
    };

    let preruns: Option<Vec<InputImage>> = if args.preruns.is_empty() {
        None
    } else {
        let mut images = Vec::new();
        for path in &args.preruns {
            let bytes = read_bytes(path)?;
            images.push(scan_inputs(&db, &bytes));
        }
        Some(images)
    };

    let target = TargetSpec::parse(&args.target);
    let config = SearchConfig {
        loop_bound: args.loop_bound,
        max_frontier: args.max_states,
        max_solver_calls: args.max_solver_calls,
        fuel: args.fuel,
        jobs: args.jobs,
        ..SearchConfig::default()
    };

    let mut report = extract_signature(
        &program,
        &db_text,
        args.file_len,
        &target,
        &policy,
        &config,
        preruns.as_deref(),
    )
    .map_err(|e| match e {
        crate::sigextract::ExtractError::Search(se) => search_error(se),
        other => CliError::input(other.to_string()),
    })?;
    if args.stamp {
        report.stamp = Some(stamp_now());
    }
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::fault(e.to_string()))?;
    write_text(&args.report, &format!("{json}\n"))?;
    let outcome = report.outcome.clone();
    println!("{outcome}");
    Ok(if outcome == "witness" { EXIT_OK } else { EXIT_NOT_REACHED })
}
