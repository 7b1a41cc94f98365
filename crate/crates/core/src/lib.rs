//! Migrate a project across breaking releases of a dependency by showing an
//! LLM the dependency's own diff, and measure how good the result is.
//!
//! The crate is organised by stage:
//!
//! * [`repo`] and [`filter`] extract filtered file sets from local git clones.
//! * [`diff`] computes Myers edit scripts and renders, parses and applies
//!   unified diffs.
//! * [`tokens`] counts tokens for context budgeting.
//! * [`prompt`] fills the migration and benchmark prompt templates.
//! * [`llm`] talks to OpenAI-compatible chat endpoints (or a mock) with
//!   retries, rate limiting and a usage ledger.
//! * [`migrate`] runs the per-file migration loop.
//! * [`eval`] scores results by test counts and by change-block matching.
//! * [`bench`] builds and scores the diff-comprehension benchmark.
//! * [`history`] measures repository size against commit-diff size.

pub mod bench;
pub mod diff;
pub mod eval;
pub mod files;
pub mod filter;
pub mod history;
pub mod llm;
pub mod migrate;
pub mod prompt;
pub mod repo;
pub mod tokens;

mod pool;

pub use files::{FileEntry, FileSet};
pub use filter::{FileFilter, FilterSpec};
