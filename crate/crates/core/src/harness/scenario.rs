//! Scenario files: a replicated type, a sync model, replicas and a script
//! of steps. See `schema/scenario.schema.json` for the format.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::causality::ReplicaId;
use crate::model::{CrdtKind, Op, RegisterSemantics, SyncModel, Value};
use crate::sim::{FaultPolicy, RecoverySource, Schedule};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uni,
    #[default]
    Bi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Submit {
        replica: ReplicaId,
        op: Op,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<Outcome>,
    },
    /// `a` sends to `b`; with `bi`, `b` then sends to `a`.
    Sync {
        a: ReplicaId,
        b: ReplicaId,
        #[serde(default)]
        direction: Direction,
    },
    Partition {
        a: BTreeSet<ReplicaId>,
        b: BTreeSet<ReplicaId>,
        ticks: u64,
    },
    Crash(ReplicaId),
    Recover {
        replica: ReplicaId,
        from: RecoverySource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<Outcome>,
    },
    Tick(u64),
    Checkpoint {
        replica: ReplicaId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<serde_json::Value>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub crdt: CrdtKind,
    #[serde(default = "default_sync")]
    pub sync: SyncModel,
    pub replicas: Vec<ReplicaId>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub faults: FaultPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    pub steps: Vec<Step>,
    /// Expected value at every replica after quiescence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_final: Option<serde_json::Value>,
}

fn default_sync() -> SyncModel {
    SyncModel::State
}

fn default_max_ticks() -> u64 {
    10_000
}

fn is_default(f: &FaultPolicy) -> bool {
    *f == FaultPolicy::default()
}

/// One problem found while reading a scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SchemaError {
    pub line: usize,
    pub column: usize,
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.column, self.path, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{}", .errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ScenarioError {
    pub errors: Vec<SchemaError>,
}

#[derive(Deserialize)]
struct RawScenario<'a> {
    #[serde(borrow)]
    steps: Option<Vec<&'a RawValue>>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Parses and validates a scenario. Errors carry 1-based line and column
/// positions; every step is checked, so one call reports all step errors.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let err = |line, column, path: &str, message: String| SchemaError { line, column, path: path.into(), message };
    let raw: RawScenario = serde_json::from_str(text)
        .map_err(|e| ScenarioError { errors: vec![err(e.line(), e.column(), "", e.to_string())] })?;

    // steps first, one at a time, so each error points at its own step
    let mut errors = Vec::new();
    let mut step_lines = Vec::new();
    for (i, s) in raw.steps.iter().flatten().enumerate() {
        let offset = s.get().as_ptr() as usize - text.as_ptr() as usize;
        let (line, col) = line_col(text, offset);
        step_lines.push((line, col));
        if let Err(e) = serde_json::from_str::<Step>(s.get()) {
            let (l, c) = line_col(text, offset + e.column().saturating_sub(1));
            let l = if e.line() > 1 { line + e.line() - 1 } else { l };
            errors.push(err(l, if e.line() > 1 { e.column() } else { c }, &format!("steps[{i}]"), strip_position(&e)));
        }
    }
    if !errors.is_empty() {
        return Err(ScenarioError { errors });
    }
    let scenario: Scenario = serde_json::from_str(text)
        .map_err(|e| ScenarioError { errors: vec![err(e.line(), e.column(), "", strip_position(&e))] })?;
    let problems = scenario.validate();
    if problems.is_empty() {
        return Ok(scenario);
    }
    Err(ScenarioError {
        errors: problems
            .into_iter()
            .map(|(step, path, message)| {
                let (line, column) = step.and_then(|i| step_lines.get(i).copied()).unwrap_or((1, 1));
                err(line, column, &path, message)
            })
            .collect(),
    })
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

impl Scenario {
    pub fn new(crdt: CrdtKind, sync: SyncModel, replicas: &[&str]) -> Scenario {
        Scenario {
            version: FORMAT_VERSION,
            name: String::new(),
            description: String::new(),
            crdt,
            sync,
            replicas: replicas.iter().map(|r| ReplicaId::new(*r)).collect(),
            seed: 0,
            faults: FaultPolicy::default(),
            schedule: None,
            max_ticks: default_max_ticks(),
            steps: Vec::new(),
            expect_final: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialize")
    }

    /// Semantic checks. Each problem is `(step index, path, message)`.
    pub fn validate(&self) -> Vec<(Option<usize>, String, String)> {
        let mut out = Vec::new();
        let mut top = |path: &str, msg: String| out.push((None, path.to_string(), msg));
        if self.version != FORMAT_VERSION {
            top("version", format!("unsupported version {}, expected {FORMAT_VERSION}", self.version));
        }
        if self.replicas.is_empty() {
            top("replicas", "at least one replica is required".into());
        }
        let declared: BTreeSet<&ReplicaId> = self.replicas.iter().collect();
        if declared.len() != self.replicas.len() {
            top("replicas", "replica ids must be unique".into());
        }
        if self.replicas.iter().any(|r| r.as_str().is_empty()) {
            top("replicas", "replica ids must be non-empty".into());
        }
        if let Err(e) = self.faults.validate() {
            top("faults", e);
        }
        if let Some(s) = &self.schedule {
            for (a, b) in &s.pairs {
                for r in [a, b] {
                    if !declared.contains(r) {
                        top("schedule.pairs", format!("undeclared replica {r}"));
                    }
                }
                if a == b {
                    top("schedule.pairs", format!("pair ({a}, {a}) syncs a replica with itself"));
                }
            }
            if !s.connects(&self.replicas) {
                top("schedule.pairs", "sync graph is not connected, so quiescence cannot converge".into());
            }
        }
        if let Some(e) = &self.expect_final {
            if !expectation_fits(self.crdt, e) {
                top("expect_final", format!("{e} is not a {} value", self.crdt));
            }
        }
        for (i, step) in self.steps.iter().enumerate() {
            let mut bad = |field: &str, msg: String| out.push((Some(i), format!("steps[{i}].{field}"), msg));
            let mut need = |field: &str, r: &ReplicaId| {
                if !declared.contains(r) {
                    bad(field, format!("undeclared replica {r}"));
                }
            };
            match step {
                Step::Submit { replica, op, .. } => {
                    need("submit.replica", replica);
                    if let Op::Transfer { to, .. } = op {
                        need("submit.op.transfer.to", to);
                    }
                    let int_write = !matches!(self.crdt, CrdtKind::MaxRegister) || matches!(op, Op::Wr(Value::Int(_)));
                    if !self.crdt.accepts(op) || !int_write {
                        bad("submit.op", format!("{} is not an operation of {}", op.name(), self.crdt));
                    }
                }
                Step::Sync { a, b, .. } => {
                    need("sync.a", a);
                    need("sync.b", b);
                    if a == b {
                        bad("sync", format!("{a} cannot sync with itself"));
                    }
                }
                Step::Partition { a, b, .. } => {
                    a.iter().for_each(|r| need("partition.a", r));
                    b.iter().for_each(|r| need("partition.b", r));
                    if a.intersection(b).next().is_some() {
                        bad("partition", "groups overlap".into());
                    }
                }
                Step::Crash(r) => need("crash", r),
                Step::Recover { replica, from, .. } => {
                    need("recover.replica", replica);
                    if let RecoverySource::Peer(p) = from {
                        need("recover.from.peer", p);
                    }
                }
                Step::Tick(_) => {}
                Step::Checkpoint { replica, expect } => {
                    need("checkpoint.replica", replica);
                    if let Some(e) = expect {
                        if !expectation_fits(self.crdt, e) {
                            bad("checkpoint.expect", format!("{e} is not a {} value", self.crdt));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Whether `e` has the JSON shape of a reading of `kind`.
pub fn expectation_fits(kind: CrdtKind, e: &serde_json::Value) -> bool {
    use serde_json::Value as J;
    let scalar = |v: &J| v.is_i64() || v.is_string();
    match kind {
        CrdtKind::Counter | CrdtKind::BoundedCounter => e.is_i64(),
        CrdtKind::MaxRegister => e.is_i64() || e.is_null(),
        CrdtKind::Register(RegisterSemantics::Lww) => scalar(e) || e.is_null(),
        CrdtKind::Register(RegisterSemantics::Mv) | CrdtKind::Set(_) | CrdtKind::List => {
            e.as_array().is_some_and(|a| a.iter().all(scalar))
        }
        CrdtKind::Map(_) => e.is_object(),
    }
}
