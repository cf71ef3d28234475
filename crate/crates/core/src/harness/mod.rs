//! Scenarios, fuzzing, oracle checking and model comparison.

mod compare;
mod fuzz;
mod gen;
mod laws;
mod run;
mod scenario;
mod sequential;

pub use compare::{compare_models, CompareReport, ModelRun};
pub use fuzz::{fuzz, replica_names, shrink, FuzzConfig, FuzzOutcome, MAX_SHRINK_RERUNS};
pub use gen::{random_op, OpContext, MAP_REMOVE_P};
pub use laws::{check_laws, observe, LawReport};
pub use run::{
    matches_expectation, recheck_trace, run_scenario, CheckpointRecord, Runner, StepRecord, TraceReport, Verdict,
    Verdicts,
};
pub use scenario::{expectation_fits, parse_scenario, Direction, Outcome, Scenario, ScenarioError, SchemaError, Step, FORMAT_VERSION};
pub use sequential::{check_sequential, SeqAdt};

#[cfg(test)]
mod tests;
