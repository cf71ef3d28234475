//! Runs one script under every sync model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::causality::ReplicaId;
use crate::model::SyncModel;

use super::run::{run_scenario, Verdict};
use super::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub verdict: Verdict,
    pub final_values: BTreeMap<ReplicaId, serde_json::Value>,
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub payload_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub name: String,
    pub models: BTreeMap<SyncModel, ModelRun>,
    /// Final values agree across models.
    pub identical: bool,
    pub verdict: Verdict,
}

impl CompareReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// PASS iff every model's run passes and all final values agree.
pub fn compare_models(s: &Scenario) -> CompareReport {
    let models: BTreeMap<SyncModel, ModelRun> = SyncModel::ALL
        .into_iter()
        .map(|m| {
            let r = run_scenario(s, Some(m));
            let run = ModelRun {
                verdict: r.verdict,
                final_values: r.final_values,
                messages_sent: r.stats.messages_sent,
                bytes_sent: r.stats.bytes_sent,
                payload_bytes: r.stats.payload_bytes,
            };
            (m, run)
        })
        .collect();
    let mut finals = models.values().map(|r| &r.final_values);
    let first = finals.next();
    let identical = finals.all(|f| Some(f) == first);
    let verdict = Verdict::of(identical && models.values().all(|r| r.verdict.passed()));
    CompareReport { name: s.name.clone(), models, identical, verdict }
}
