//! The global update history: every event with its origin, operation,
//! causal context and arbitration timestamp.
//!
//! Happens-before is never stored as edges. Each event carries the version
//! vector of its origin at generation time, so `a ≺ b` exactly when `b`'s
//! context covers `a`'s dot.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::causality::{next_dot, Dot, HbOrder, LamportClock, ReplicaId, Timestamp, VersionVector};
use crate::model::Op;

use super::OracleError;

/// Origin-time facts about list operations that positions alone cannot
/// convey.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Element ids visible at the origin just before the insert.
    ListInsert { view: Vec<Dot> },
    /// The element id the remove targeted at the origin.
    ListRemove { target: Dot },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub id: Dot,
    pub origin: ReplicaId,
    pub op: Op,
    pub context: VersionVector,
    pub ts: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
}

impl UpdateEvent {
    /// `self ≺ other`.
    pub fn happened_before(&self, other: &UpdateEvent) -> bool {
        other.context.contains(&self.id)
    }

    pub fn concurrent_with(&self, other: &UpdateEvent) -> bool {
        self.id != other.id && !self.happened_before(other) && !other.happened_before(self)
    }
}

/// A causally closed set of update events.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateHistory {
    events: BTreeMap<Dot, UpdateEvent>,
    summary: VersionVector,
}

impl UpdateHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event generated at `origin` with the given causal
    /// context. The event's id is the origin's next dot after `context`.
    pub fn record(
        &mut self,
        origin: &ReplicaId,
        op: Op,
        context: VersionVector,
        ts: Timestamp,
    ) -> Result<Dot, OracleError> {
        self.record_resolved(origin, op, context, ts, None)
    }

    pub fn record_resolved(
        &mut self,
        origin: &ReplicaId,
        op: Op,
        context: VersionVector,
        ts: Timestamp,
        resolution: Option<Resolution>,
    ) -> Result<Dot, OracleError> {
        let id = next_dot(origin, &context);
        if self.events.contains_key(&id) {
            return Err(OracleError::DuplicateDot(id));
        }
        if !context.le(&self.summary) {
            return Err(OracleError::OpenContext { id, context });
        }
        if self.summary.get(origin) + 1 != id.counter {
            // the origin's previous event exists but is missing from its own context
            return Err(OracleError::OpenContext { id, context });
        }
        if ts.replica != *origin {
            return Err(OracleError::TimestampOrder(id));
        }
        for (r, n) in context.iter() {
            let last = &self.events[&Dot::new(r.clone(), n)];
            if last.ts >= ts {
                return Err(OracleError::TimestampOrder(id));
            }
        }
        self.summary.record(&id);
        self.events.insert(
            id.clone(),
            UpdateEvent {
                id: id.clone(),
                origin: origin.clone(),
                op,
                context,
                ts,
                resolution,
            },
        );
        Ok(id)
    }

    /// Rebuilds a history from events in any order.
    pub fn from_events(mut events: Vec<UpdateEvent>) -> Result<Self, OracleError> {
        events.sort_by(|a, b| a.ts.cmp(&b.ts));
        let mut h = UpdateHistory::new();
        for e in events {
            let id = h.record_resolved(&e.origin, e.op, e.context, e.ts, e.resolution)?;
            if id != e.id {
                return Err(OracleError::DuplicateDot(e.id));
            }
        }
        Ok(h)
    }

    pub fn get(&self, id: &Dot) -> Result<&UpdateEvent, OracleError> {
        self.events
            .get(id)
            .ok_or_else(|| OracleError::UnknownEvent(id.clone()))
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn summary(&self) -> &VersionVector {
        &self.summary
    }

    pub fn events(&self) -> impl Iterator<Item = &UpdateEvent> {
        self.events.values()
    }

    /// Events in timestamp order, a linear extension of happens-before.
    pub fn events_by_ts(&self) -> Vec<&UpdateEvent> {
        let mut v: Vec<_> = self.events.values().collect();
        v.sort_by(|a, b| a.ts.cmp(&b.ts));
        v
    }

    pub fn hb_compare(&self, a: &Dot, b: &Dot) -> Result<HbOrder, OracleError> {
        let ea = self.get(a)?;
        let eb = self.get(b)?;
        Ok(if a == b {
            HbOrder::Equal
        } else if ea.happened_before(eb) {
            HbOrder::Before
        } else if eb.happened_before(ea) {
            HbOrder::After
        } else {
            HbOrder::Concurrent
        })
    }

    /// Events with no successor in the history.
    pub fn frontier(&self) -> Vec<&UpdateEvent> {
        self.events
            .values()
            .filter(|e| !self.events.values().any(|o| e.happened_before(o)))
            .collect()
    }

    /// The sub-history known by a replica whose summary is `known`.
    pub fn restrict(&self, known: &VersionVector) -> UpdateHistory {
        let events: BTreeMap<_, _> = self
            .events
            .iter()
            .filter(|(d, _)| known.contains(d))
            .map(|(d, e)| (d.clone(), e.clone()))
            .collect();
        let mut summary = VersionVector::new();
        for d in events.keys() {
            summary.raise(&d.replica, d.counter);
        }
        UpdateHistory { events, summary }
    }

    /// Minimal edge set with the same reachability as happens-before.
    pub fn transitive_reduction(&self) -> BTreeSet<(Dot, Dot)> {
        let all: Vec<&UpdateEvent> = self.events.values().collect();
        transitive_reduction(&all)
    }
}

/// Hasse diagram of happens-before restricted to `events`.
pub fn transitive_reduction(events: &[&UpdateEvent]) -> BTreeSet<(Dot, Dot)> {
    let mut edges = BTreeSet::new();
    for a in events {
        for b in events {
            if a.happened_before(b)
                && !events
                    .iter()
                    .any(|c| a.happened_before(c) && c.happened_before(b))
            {
                edges.insert((a.id.clone(), b.id.clone()));
            }
        }
    }
    edges
}

impl Serialize for UpdateHistory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.events.values())
    }
}

impl<'de> Deserialize<'de> for UpdateHistory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let events = Vec::<UpdateEvent>::deserialize(d)?;
        UpdateHistory::from_events(events).map_err(serde::de::Error::custom)
    }
}

/// Builds histories by scripting replicas that generate events and
/// exchange knowledge, without any CRDT in the loop.
#[derive(Clone, Debug, Default)]
pub struct ScriptedHistory {
    history: UpdateHistory,
    known: BTreeMap<ReplicaId, (VersionVector, LamportClock)>,
}

impl ScriptedHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Generates `op` at `replica` against everything it currently knows.
    pub fn submit(&mut self, replica: &str, op: Op) -> Dot {
        self.submit_resolved(replica, op, None)
    }

    pub fn submit_resolved(&mut self, replica: &str, op: Op, resolution: Option<Resolution>) -> Dot {
        let r = ReplicaId::new(replica);
        let (vv, clock) = self.known.entry(r.clone()).or_default();
        let ts = clock.tick(&r);
        let id = self
            .history
            .record_resolved(&r, op, vv.clone(), ts, resolution)
            .expect("scripted history stays well formed");
        vv.record(&id);
        id
    }

    /// `to` learns everything `from` knows.
    pub fn sync(&mut self, from: &str, to: &str) {
        let (vv, clock) = self.known.get(&ReplicaId::new(from)).cloned().unwrap_or_default();
        let entry = self.known.entry(ReplicaId::new(to)).or_default();
        entry.0.merge(&vv);
        entry.1.observe_clock(clock.now());
    }

    pub fn sync_bi(&mut self, a: &str, b: &str) {
        self.sync(a, b);
        self.sync(b, a);
    }

    pub fn known(&self, replica: &str) -> VersionVector {
        self.known
            .get(&ReplicaId::new(replica))
            .map(|(vv, _)| vv.clone())
            .unwrap_or_default()
    }

    pub fn history(&self) -> &UpdateHistory {
        &self.history
    }

    pub fn into_history(self) -> UpdateHistory {
        self.history
    }
}
