//! Test drivers: scripted scenarios, the conformance suite, the load
//! generator and curve fitting.

pub mod conformance;
pub mod fit;
pub mod load;
pub mod scenario;

pub use conformance::{conformance_suite, run_suite, SuiteReport, SUITE_HOSTNAME, SUITE_PORT};
pub use fit::{fit, fit_rows, read_csv, write_csv, Fit, FitError, LoadRow, Model};
pub use load::{audit_count, run_load, LoadError, LoadResult, LoadRun};
pub use scenario::{run_scenario, Matcher, Scenario, ScenarioOutcome, ScenarioParseError, Step, StepFailure, Target};
