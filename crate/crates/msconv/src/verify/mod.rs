//! Runnable invariant suites shared by the `verify` CLI subcommand and
//! the test suite: oracle cross-checks, gradient soundness, exact
//! equivalence identities, and complexity invariants.

pub mod gradcheck;
pub mod oracle;
mod suites;

pub use suites::{all_checks, run_suite, Check, CheckOutcome, Suite};
