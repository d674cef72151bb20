//! Seeded corpora, suite runners and the regression ledger behind the
//! `journe-lab` command line.

pub mod config;
pub mod error;
pub mod gen;
pub mod ledger;
pub mod report;
pub mod suites;
pub mod verify;

pub use config::SuiteConfig;
pub use error::{LabError, LabResult};
pub use ledger::Ledger;
pub use suites::{judge, Suite, SuiteOutcome, Verdict};
