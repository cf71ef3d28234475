//! Operation-based CRDTs. A generator runs at the origin against its
//! current state and produces a self-contained [`Effector`]; every replica
//! (the origin first) applies it. Effectors assume exactly-once causal
//! delivery, which the simulator's middleware provides.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_with::serde_as;

use crate::causality::{Dot, ReplicaId, Timestamp, VersionVector};
use crate::model::{CrdtKind, Op, Reading, RegisterSemantics, SetSemantics, Value};
use crate::oracle::Resolution;
use crate::state::map::make_record;
use crate::state::{EventMeta, ListState, MapLog, MapRecord, PosId, RecordBody, UpdateError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Counter { n: i64 },
    Transfer { to: ReplicaId, n: u64 },
    LwwWrite { value: Value },
    MvWrite { value: Value, overwrites: BTreeSet<Dot> },
    AwAdd { elem: Value },
    AwRmv { elem: Value, uids: BTreeSet<Dot> },
    RwAdd { elem: Value, supersedes: BTreeSet<Dot>, covers: BTreeSet<Dot> },
    RwRmv { elem: Value, adds: BTreeSet<Dot>, rmvs: BTreeSet<Dot> },
    LwwSet { elem: Value, present: bool },
    ListIns { id: PosId, elem: Value },
    ListRmv { target: Dot },
    Map(RecordBody),
}

/// A generated update, carrying everything the middleware needs to order
/// and deduplicate it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effector {
    pub origin: ReplicaId,
    pub dot: Dot,
    pub context: VersionVector,
    pub ts: Timestamp,
    pub payload: Payload,
}

#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundedRights {
    #[serde_as(as = "Vec<(_, _)>")]
    net: BTreeMap<ReplicaId, i64>,
    #[serde_as(as = "Vec<(_, _)>")]
    transfers: BTreeMap<(ReplicaId, ReplicaId), u64>,
}

impl BoundedRights {
    fn value(&self) -> i64 {
        self.net.values().sum()
    }

    fn rights(&self, r: &ReplicaId) -> i64 {
        let mut have = self.net.get(r).copied().unwrap_or(0);
        for ((from, to), n) in &self.transfers {
            if from == r {
                have -= *n as i64;
            }
            if to == r {
                have += *n as i64;
            }
        }
        have
    }
}

#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RwElems {
    #[serde_as(as = "Vec<(_, Vec<(_, _)>)>")]
    elems: BTreeMap<Value, BTreeMap<Dot, BTreeSet<Dot>>>,
    #[serde_as(as = "Vec<(_, _)>")]
    rmvs: BTreeMap<Value, BTreeSet<Dot>>,
}

#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwElems {
    #[serde_as(as = "Vec<(_, _)>")]
    elems: BTreeMap<Value, (Timestamp, bool)>,
}

/// Replica state of an op-based type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "state", rename_all = "snake_case")]
pub enum OpState {
    Counter(i64),
    BoundedCounter(BoundedRights),
    LwwRegister(Option<(Value, Timestamp)>),
    MvRegister(BTreeSet<(Value, Dot)>),
    MaxRegister(BTreeSet<(Value, Dot)>),
    AwSet(BTreeSet<(Value, Dot)>),
    RwSet(RwElems),
    LwwSet(LwwElems),
    List(ListState),
    Map { semantics: crate::model::MapSemantics, log: MapLog },
}

impl OpState {
    pub fn new(kind: CrdtKind) -> OpState {
        match kind {
            CrdtKind::Counter => OpState::Counter(0),
            CrdtKind::BoundedCounter => OpState::BoundedCounter(BoundedRights::default()),
            CrdtKind::Register(RegisterSemantics::Lww) => OpState::LwwRegister(None),
            CrdtKind::Register(RegisterSemantics::Mv) => OpState::MvRegister(BTreeSet::new()),
            CrdtKind::MaxRegister => OpState::MaxRegister(BTreeSet::new()),
            CrdtKind::Set(SetSemantics::AddWins) => OpState::AwSet(BTreeSet::new()),
            CrdtKind::Set(SetSemantics::RemoveWins) => OpState::RwSet(RwElems::default()),
            CrdtKind::Set(SetSemantics::Lww) => OpState::LwwSet(LwwElems::default()),
            CrdtKind::List => OpState::List(ListState::new()),
            CrdtKind::Map(semantics) => OpState::Map { semantics, log: MapLog::default() },
        }
    }

    pub fn kind(&self) -> CrdtKind {
        match self {
            OpState::Counter(_) => CrdtKind::Counter,
            OpState::BoundedCounter(_) => CrdtKind::BoundedCounter,
            OpState::LwwRegister(_) => CrdtKind::Register(RegisterSemantics::Lww),
            OpState::MvRegister(_) => CrdtKind::Register(RegisterSemantics::Mv),
            OpState::MaxRegister(_) => CrdtKind::MaxRegister,
            OpState::AwSet(_) => CrdtKind::Set(SetSemantics::AddWins),
            OpState::RwSet(_) => CrdtKind::Set(SetSemantics::RemoveWins),
            OpState::LwwSet(_) => CrdtKind::Set(SetSemantics::Lww),
            OpState::List(_) => CrdtKind::List,
            OpState::Map { semantics, .. } => CrdtKind::Map(*semantics),
        }
    }

    /// Builds the effector for `op` at its origin. Does not change state.
    pub fn generate(
        &self,
        op: &Op,
        meta: &EventMeta,
        context: &VersionVector,
    ) -> Result<(Effector, Option<Resolution>), UpdateError> {
        let kind = self.kind();
        let bad = || UpdateError::InvalidOp { op: op.name(), kind };
        let mut resolution = None;
        let payload = match (self, op) {
            (OpState::Counter(_), Op::Inc(n)) => Payload::Counter { n: *n as i64 },
            (OpState::Counter(_), Op::Dec(n)) => Payload::Counter { n: -(*n as i64) },
            (OpState::BoundedCounter(b), _) => {
                let need = |n: u64| {
                    let have = b.rights(&meta.replica);
                    if have < n as i64 {
                        Err(UpdateError::InsufficientRights { need: n, have })
                    } else {
                        Ok(())
                    }
                };
                match op {
                    Op::Inc(n) => Payload::Counter { n: *n as i64 },
                    Op::Dec(n) => {
                        need(*n)?;
                        Payload::Counter { n: -(*n as i64) }
                    }
                    Op::Transfer { to, n } => {
                        if *to == meta.replica {
                            return Err(UpdateError::SelfTransfer);
                        }
                        need(*n)?;
                        Payload::Transfer { to: to.clone(), n: *n }
                    }
                    _ => return Err(bad()),
                }
            }
            (OpState::LwwRegister(_), Op::Wr(v)) => Payload::LwwWrite { value: v.clone() },
            (OpState::MvRegister(s), Op::Wr(v)) => Payload::MvWrite {
                value: v.clone(),
                overwrites: s.iter().map(|(_, d)| d.clone()).collect(),
            },
            (OpState::MaxRegister(s), Op::Wr(v @ Value::Int(_))) => Payload::MvWrite {
                value: v.clone(),
                overwrites: s.iter().map(|(_, d)| d.clone()).collect(),
            },
            (OpState::AwSet(_), Op::Add(e)) => Payload::AwAdd { elem: e.clone() },
            (OpState::AwSet(s), Op::Rmv(e)) => Payload::AwRmv {
                elem: e.clone(),
                uids: s.iter().filter(|(v, _)| v == e).map(|(_, d)| d.clone()).collect(),
            },
            (OpState::RwSet(s), Op::Add(e)) => Payload::RwAdd {
                elem: e.clone(),
                supersedes: s.elems.get(e).map(|a| a.keys().cloned().collect()).unwrap_or_default(),
                covers: s.rmvs.get(e).cloned().unwrap_or_default(),
            },
            (OpState::RwSet(s), Op::Rmv(e)) => Payload::RwRmv {
                elem: e.clone(),
                adds: s.elems.get(e).map(|a| a.keys().cloned().collect()).unwrap_or_default(),
                rmvs: s.rmvs.get(e).cloned().unwrap_or_default(),
            },
            (OpState::LwwSet(_), Op::Add(e)) => Payload::LwwSet { elem: e.clone(), present: true },
            (OpState::LwwSet(_), Op::Rmv(e)) => Payload::LwwSet { elem: e.clone(), present: false },
            (OpState::List(l), Op::Ins { .. } | Op::RmvAt(_)) => match l.prepare(op, meta)? {
                crate::state::list::Prepared::Insert { id, elem, view } => {
                    resolution = Some(Resolution::ListInsert { view });
                    Payload::ListIns { id, elem }
                }
                crate::state::list::Prepared::Remove { target } => {
                    resolution = Some(Resolution::ListRemove { target: target.clone() });
                    Payload::ListRmv { target }
                }
            },
            (OpState::Map { .. }, _) => Payload::Map(make_record(op, meta, context.clone(), kind)?.body),
            _ => return Err(bad()),
        };
        Ok((
            Effector {
                origin: meta.replica.clone(),
                dot: meta.dot.clone(),
                context: context.clone(),
                ts: meta.ts.clone(),
                payload,
            },
            resolution,
        ))
    }

    /// Applies a delivered effector. Payloads for another type are ignored.
    pub fn apply(&mut self, eff: &Effector) {
        match (self, &eff.payload) {
            (OpState::Counter(v), Payload::Counter { n }) => *v = v.wrapping_add(*n),
            (OpState::BoundedCounter(b), Payload::Counter { n }) => {
                let e = b.net.entry(eff.origin.clone()).or_default();
                *e = e.wrapping_add(*n);
            }
            (OpState::BoundedCounter(b), Payload::Transfer { to, n }) => {
                let t = b.transfers.entry((eff.origin.clone(), to.clone())).or_default();
                *t = t.wrapping_add(*n);
            }
            (OpState::LwwRegister(cur), Payload::LwwWrite { value }) => {
                if cur.as_ref().is_none_or(|(_, ts)| *ts < eff.ts) {
                    *cur = Some((value.clone(), eff.ts.clone()));
                }
            }
            (OpState::MvRegister(s) | OpState::MaxRegister(s), Payload::MvWrite { value, overwrites }) => {
                s.retain(|(_, d)| !overwrites.contains(d));
                s.insert((value.clone(), eff.dot.clone()));
            }
            (OpState::AwSet(s), Payload::AwAdd { elem }) => {
                s.insert((elem.clone(), eff.dot.clone()));
            }
            (OpState::AwSet(s), Payload::AwRmv { elem, uids }) => {
                s.retain(|(v, d)| v != elem || !uids.contains(d));
            }
            (OpState::RwSet(s), Payload::RwAdd { elem, supersedes, covers }) => {
                let adds = s.elems.entry(elem.clone()).or_default();
                adds.retain(|d, _| !supersedes.contains(d));
                adds.insert(eff.dot.clone(), covers.clone());
            }
            (OpState::RwSet(s), Payload::RwRmv { elem, adds, rmvs }) => {
                if let Some(a) = s.elems.get_mut(elem) {
                    a.retain(|d, _| !adds.contains(d));
                }
                let r = s.rmvs.entry(elem.clone()).or_default();
                r.retain(|d| !rmvs.contains(d));
                r.insert(eff.dot.clone());
            }
            (OpState::LwwSet(s), Payload::LwwSet { elem, present }) => match s.elems.get(elem) {
                Some((ts, _)) if *ts >= eff.ts => {}
                _ => {
                    s.elems.insert(elem.clone(), (eff.ts.clone(), *present));
                }
            },
            (OpState::List(l), Payload::ListIns { id, elem }) => {
                l.insert_entry(eff.dot.clone(), id.clone(), elem.clone());
            }
            (OpState::List(l), Payload::ListRmv { target }) => l.remove_entry(target),
            (OpState::Map { log, .. }, Payload::Map(body)) => log.insert(MapRecord {
                dot: eff.dot.clone(),
                ctx: eff.context.clone(),
                ts: eff.ts.clone(),
                body: body.clone(),
            }),
            _ => {}
        }
    }

    pub fn read(&self) -> Reading {
        match self {
            OpState::Counter(v) => Reading::Int(*v),
            OpState::BoundedCounter(b) => Reading::Int(b.value()),
            OpState::LwwRegister(v) => v.as_ref().map_or(Reading::Null, |(v, _)| Reading::Scalar(v.clone())),
            OpState::MvRegister(s) => Reading::Set(s.iter().map(|(v, _)| v.clone()).collect()),
            OpState::MaxRegister(s) => s
                .iter()
                .filter_map(|(v, _)| v.as_int())
                .max()
                .map_or(Reading::Null, Reading::Int),
            OpState::AwSet(s) => Reading::Set(s.iter().map(|(v, _)| v.clone()).collect()),
            OpState::RwSet(s) => Reading::Set(
                s.elems
                    .iter()
                    .filter(|(e, adds)| {
                        let empty = BTreeSet::new();
                        let rmvs = s.rmvs.get(*e).unwrap_or(&empty);
                        adds.values().any(|cov| rmvs.is_subset(cov))
                    })
                    .map(|(e, _)| e.clone())
                    .collect(),
            ),
            OpState::LwwSet(s) => Reading::Set(
                s.elems
                    .iter()
                    .filter(|(_, (_, p))| *p)
                    .map(|(e, _)| e.clone())
                    .collect(),
            ),
            OpState::List(l) => Reading::Seq(l.values()),
            OpState::Map { semantics, log } => log.read(*semantics),
        }
    }

    /// Rights available to `r` under a bounded counter.
    pub fn rights(&self, r: &ReplicaId) -> Option<i64> {
        match self {
            OpState::BoundedCounter(b) => Some(b.rights(r)),
            _ => None,
        }
    }

    pub fn list_ids(&self) -> Option<Vec<Dot>> {
        match self {
            OpState::List(l) => Some(l.ids()),
            _ => None,
        }
    }

    pub fn state_bytes(&self) -> usize {
        serde_json::to_vec(self).map_or(0, |b| b.len())
    }
}
