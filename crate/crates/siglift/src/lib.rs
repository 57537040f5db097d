//! Concolic execution over a small bytecode virtual machine.
//!
//! The crate drives a scanner-style program concretely while shadowing
//! designated input bytes symbolically, records the branch constraints the
//! path imposes, decides them with an in-crate bitvector solver, and
//! searches for inputs that reach a chosen endpoint. The `sigextract`
//! module packages the pipeline as a signature-recovery driver over a
//! shipped scanner corpus.
//!
//! Start with the runnable examples in `examples/`; each one exercises a
//! single capability end to end. The `siglift` binary exposes the same
//! pipeline as subcommands for scripting.

pub mod concolic;
pub mod interp;
pub mod isa;
pub mod search;
pub mod sigextract;
pub mod solver;
pub mod symexpr;

pub mod cli;
