//! Executes scenarios on the simulator and judges the outcome.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::causality::{Dot, ReplicaId};
use crate::model::{CrdtKind, Reading, SyncModel, Value};
use crate::oracle::{check_list, evaluate, ListObservation, UpdateHistory};
use crate::sim::{NetStats, Network, SimConfig, SyncOutcome};
use crate::state::Metadata;

use super::scenario::{Direction, Outcome, Scenario, Step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.passed() { "PASS" } else { "FAIL" })
    }
}

impl Verdict {
    pub fn of(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub tick: u64,
    pub outcome: String,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: usize,
    pub replica: ReplicaId,
    pub observed: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<serde_json::Value>,
    /// Oracle value over the events the replica knows; lists record
    /// whether the observed order satisfies the list specification.
    pub oracle: serde_json::Value,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub steps: bool,
    pub checkpoints: bool,
    pub quiescent: bool,
    pub converged: bool,
    pub oracle: bool,
    pub expected_final: bool,
    /// No delivery-contract or type-invariant violation was observed.
    pub invariants: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.steps
            && self.checkpoints
            && self.quiescent
            && self.converged
            && self.oracle
            && self.expected_final
            && self.invariants
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub version: u32,
    pub name: String,
    pub crdt: CrdtKind,
    pub sync: SyncModel,
    pub seed: u64,
    pub replicas: Vec<ReplicaId>,
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub final_values: BTreeMap<ReplicaId, serde_json::Value>,
    /// Final element ids per replica, for lists.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub list_orders: BTreeMap<ReplicaId, Vec<Dot>>,
    pub oracle: serde_json::Value,
    pub verdicts: Verdicts,
    pub violations: Vec<String>,
    pub errors: Vec<String>,
    pub metadata: BTreeMap<ReplicaId, Metadata>,
    pub stats: NetStats,
    pub ticks: u64,
    pub history: UpdateHistory,
    pub verdict: Verdict,
}

impl TraceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Whether `reading` is the value described by `expected`. Sets compare
/// as sets; sequences and everything else compare exactly.
pub fn matches_expectation(reading: &Reading, expected: &serde_json::Value) -> bool {
    match (reading, expected) {
        (Reading::Set(s), serde_json::Value::Array(a)) => {
            let want: Option<BTreeSet<Value>> = a.iter().map(json_value).collect();
            want.is_some_and(|w| w.len() == a.len() && &w == s)
        }
        (Reading::Map(m), serde_json::Value::Object(o)) => {
            m.len() == o.len() && m.iter().all(|(k, r)| o.get(k).is_some_and(|e| matches_expectation(r, e)))
        }
        _ => reading.to_json() == *expected,
    }
}

fn json_value(v: &serde_json::Value) -> Option<Value> {
    match v {
        serde_json::Value::String(s) => Some(Value::Str(s.clone())),
        v => v.as_i64().map(Value::Int),
    }
}

/// Drives a network through scenario steps one at a time.
pub struct Runner {
    scenario: Scenario,
    net: Network,
    steps: Vec<StepRecord>,
    checkpoints: Vec<CheckpointRecord>,
}

impl Runner {
    pub fn new(scenario: &Scenario, model: SyncModel) -> Runner {
        let cfg = SimConfig {
            kind: scenario.crdt,
            model,
            replicas: scenario.replicas.clone(),
            seed: scenario.seed,
            faults: scenario.faults.clone(),
            schedule: scenario.schedule.clone(),
            max_ticks: scenario.max_ticks,
        };
        let mut scenario = scenario.clone();
        scenario.sync = model;
        scenario.steps.clear();
        Runner { scenario, net: Network::new(cfg), steps: Vec::new(), checkpoints: Vec::new() }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Executes one step and advances the clock by a tick.
    pub fn exec(&mut self, step: Step) {
        let index = self.steps.len();
        let (outcome, ok) = match &step {
            Step::Submit { replica, op, outcome } => {
                let res = self.net.submit(replica, op.clone());
                let ok = match outcome {
                    Some(Outcome::Ok) => res.is_ok(),
                    Some(Outcome::Fail) => res.is_err(),
                    None => true,
                };
                (res.map_or_else(|e| format!("failed: {e}"), |d| format!("applied {d}")), ok)
            }
            Step::Sync { a, b, direction } => {
                let mut parts = vec![self.sync(a, b)];
                if *direction == Direction::Bi {
                    parts.push(self.sync(b, a));
                }
                (parts.join("; "), true)
            }
            Step::Partition { a, b, ticks } => match self.net.partition(a.clone(), b.clone(), *ticks) {
                Ok(()) => (format!("partitioned until tick {}", self.net.now() + ticks), true),
                Err(e) => (format!("failed: {e}"), false),
            },
            Step::Crash(r) => match self.net.crash(r) {
                Ok(()) => ("crashed".into(), true),
                Err(e) => (format!("failed: {e}"), false),
            },
            Step::Recover { replica, from, outcome } => {
                let res = self.net.recover(replica, from);
                let ok = match outcome {
                    Some(Outcome::Fail) => res.is_err(),
                    _ => res.is_ok(),
                };
                (res.map_or_else(|e| format!("failed: {e}"), |()| "recovered".into()), ok)
            }
            Step::Tick(n) => {
                for _ in 1..*n {
                    self.net.tick();
                }
                (format!("advanced {n} ticks"), true)
            }
            Step::Checkpoint { replica, expect } => {
                let rec = self.checkpoint(index, replica, expect.as_ref());
                let out = format!("observed {}", rec.observed);
                let ok = rec.pass;
                self.checkpoints.push(rec);
                (out, ok)
            }
        };
        if !matches!(step, Step::Tick(0)) {
            self.net.tick();
        }
        self.steps.push(StepRecord { index, tick: self.net.now(), outcome, ok });
        self.scenario.steps.push(step);
    }

    fn sync(&mut self, a: &ReplicaId, b: &ReplicaId) -> String {
        match self.net.sync(a, b) {
            Ok(SyncOutcome::Sent(n)) => format!("{a}->{b} sent {n}"),
            Ok(SyncOutcome::Idle) => format!("{a}->{b} idle"),
            Ok(SyncOutcome::Partitioned) => format!("{a}->{b} skipped: partitioned"),
            Ok(SyncOutcome::Crashed) => format!("{a}->{b} skipped: crashed"),
            Err(e) => format!("{a}->{b} failed: {e}"),
        }
    }

    fn oracle_at(&self, r: &ReplicaId) -> Result<(serde_json::Value, bool), String> {
        let known = self.net.known(r).map_err(|e| e.to_string())?;
        let h = self.net.history().restrict(known);
        let reading = self.net.read(r).map_err(|e| e.to_string())?;
        let Some(reading) = reading else { return Ok((serde_json::Value::Null, false)) };
        match evaluate(self.scenario.crdt, &h) {
            Ok(Some(want)) => Ok((want.to_json(), want == reading)),
            Ok(None) => {
                let ids = self.net.list_ids(r).map_err(|e| e.to_string())?.unwrap_or_default();
                let obs = ListObservation { replica: r.clone(), known: known.clone(), ids };
                let verdict = check_list(&h, &[obs]).map_err(|e| e.to_string())?;
                let holds = verdict.holds();
                Ok((json!({ "list_spec_holds": holds, "violations": verdict.violations }), holds))
            }
            Err(e) => Err(e.to_string()),
        }
    }

    fn checkpoint(&self, step: usize, r: &ReplicaId, expect: Option<&serde_json::Value>) -> CheckpointRecord {
        let reading = self.net.read(r).ok().flatten();
        let observed = reading.as_ref().map_or(json!({ "crashed": true }), Reading::to_json);
        let (oracle, oracle_ok) = self.oracle_at(r).unwrap_or_else(|e| (json!({ "error": e }), false));
        let expect_ok = match (expect, &reading) {
            (Some(e), Some(rd)) => matches_expectation(rd, e),
            (Some(_), None) => false,
            (None, _) => true,
        };
        CheckpointRecord {
            step,
            replica: r.clone(),
            observed,
            expected: expect.cloned(),
            oracle,
            pass: expect_ok && oracle_ok,
        }
    }

    /// Brings the network to quiescence and judges the run.
    pub fn finish(mut self) -> TraceReport {
        let mut errors = Vec::new();
        let quiescent = match self.net.quiesce() {
            Ok(_) => true,
            Err(e) => {
                errors.push(e.to_string());
                false
            }
        };
        let replicas = self.scenario.replicas.clone();
        let readings: BTreeMap<ReplicaId, Option<Reading>> =
            replicas.iter().map(|r| (r.clone(), self.net.read(r).ok().flatten())).collect();
        let final_values = readings
            .iter()
            .map(|(r, v)| (r.clone(), v.as_ref().map_or(serde_json::Value::Null, Reading::to_json)))
            .collect();
        let first = readings.values().next().cloned().flatten();
        let converged = readings.values().all(|v| v.is_some() && *v == first);
        let mut list_ok = true;
        let oracle = match evaluate(self.scenario.crdt, self.net.history()) {
            Ok(Some(v)) => v.to_json(),
            Ok(None) => {
                let obs: Vec<ListObservation> = replicas
                    .iter()
                    .map(|r| ListObservation {
                        replica: r.clone(),
                        known: self.net.known(r).cloned().unwrap_or_default(),
                        ids: self.net.list_ids(r).ok().flatten().unwrap_or_default(),
                    })
                    .collect();
                match check_list(self.net.history(), &obs) {
                    Ok(v) => {
                        list_ok = v.holds();
                        json!({ "list_spec_holds": v.holds(), "violations": v.violations })
                    }
                    Err(e) => {
                        list_ok = false;
                        errors.push(e.to_string());
                        serde_json::Value::Null
                    }
                }
            }
            Err(e) => {
                errors.push(format!("oracle: {e}"));
                serde_json::Value::Null
            }
        };
        let oracle_ok = if self.scenario.crdt == CrdtKind::List {
            list_ok
        } else {
            readings.values().all(|v| v.as_ref().is_some_and(|r| r.to_json() == oracle))
        };
        let expected_final = match &self.scenario.expect_final {
            Some(e) => readings.values().all(|v| v.as_ref().is_some_and(|r| matches_expectation(r, e))),
            None => true,
        };
        let verdicts = Verdicts {
            steps: self.steps.iter().all(|s| s.ok),
            checkpoints: self.checkpoints.iter().all(|c| c.pass),
            quiescent,
            converged,
            oracle: oracle_ok,
            expected_final,
            invariants: self.net.violations().is_empty(),
        };
        let list_orders = replicas
            .iter()
            .filter_map(|r| self.net.list_ids(r).ok().flatten().map(|ids| (r.clone(), ids)))
            .collect();
        let metadata = replicas
            .iter()
            .filter_map(|r| self.net.metadata(r).ok().map(|m| (r.clone(), m)))
            .collect();
        TraceReport {
            version: super::scenario::FORMAT_VERSION,
            name: self.scenario.name.clone(),
            crdt: self.scenario.crdt,
            sync: self.scenario.sync,
            seed: self.scenario.seed,
            replicas,
            steps: std::mem::take(&mut self.steps),
            checkpoints: std::mem::take(&mut self.checkpoints),
            final_values,
            list_orders,
            oracle,
            verdict: Verdict::of(verdicts.all()),
            verdicts,
            violations: self.net.violations().to_vec(),
            errors,
            metadata,
            stats: self.net.stats().clone(),
            ticks: self.net.now(),
            history: self.net.history().clone(),
        }
    }

    /// The steps executed so far, as a scenario.
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
}

/// Runs `s` under its own sync model, or `model` if given.
pub fn run_scenario(s: &Scenario, model: Option<SyncModel>) -> TraceReport {
    let mut runner = Runner::new(s, model.unwrap_or(s.sync));
    for step in &s.steps {
        runner.exec(step.clone());
    }
    runner.finish()
}

/// Re-evaluates a recorded trace: the oracle over its history must equal
/// every recorded final value, or for lists, every recorded final order
/// must satisfy the list specification.
pub fn recheck_trace(report: &TraceReport) -> (Verdict, String) {
    match evaluate(report.crdt, &report.history) {
        Ok(Some(v)) => {
            let want = v.to_json();
            let bad: Vec<_> = report.final_values.iter().filter(|(_, f)| **f != want).map(|(r, _)| r.to_string()).collect();
            if bad.is_empty() {
                (Verdict::Pass, format!("oracle value {want} matches every replica"))
            } else {
                (Verdict::Fail, format!("oracle value {want} differs at {}", bad.join(", ")))
            }
        }
        Ok(None) => {
            let obs: Vec<ListObservation> = report
                .list_orders
                .iter()
                .map(|(r, ids)| ListObservation {
                    replica: r.clone(),
                    known: report.history.summary().clone(),
                    ids: ids.clone(),
                })
                .collect();
            match check_list(&report.history, &obs) {
                Ok(v) if v.holds() && obs.len() == report.replicas.len() => {
                    (Verdict::Pass, "every final order satisfies the list specification".into())
                }
                Ok(v) => (Verdict::Fail, format!("list specification violated: {:?}", v.violations)),
                Err(e) => (Verdict::Fail, e.to_string()),
            }
        }
        Err(e) => (Verdict::Fail, e.to_string()),
    }
}
