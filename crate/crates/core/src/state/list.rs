use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_with::serde_as;

use crate::causality::{Dot, Timestamp, VersionVector};
use crate::model::{CrdtKind, Op, Reading, Value};
use crate::oracle::Resolution;

use super::{full_state_delta, invalid, EventMeta, StateCrdt, UpdateError};

/// Dense position identifier: a path in a binary tree where every step
/// also names the mini-node taken at the destination, so concurrent
/// allocations of the same path stay distinct.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PosId(pub Vec<(u8, Timestamp)>);

impl PosId {
    /// A fresh id strictly between `left` and `right`.
    pub fn between(left: Option<&PosId>, right: Option<&PosId>, dis: Timestamp) -> PosId {
        let extend = |base: &PosId, bit: u8| {
            let mut p = base.0.clone();
            p.push((bit, dis.clone()));
            PosId(p)
        };
        match (left, right) {
            (None, None) => PosId(vec![(1, dis)]),
            (None, Some(r)) => extend(r, 0),
            (Some(l), None) => extend(l, 1),
            (Some(l), Some(r)) if r.0.starts_with(&l.0) => extend(r, 0),
            (Some(l), Some(_)) => extend(l, 1),
        }
    }
}

impl Ord for PosId {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (&self.0, &other.0);
        for (x, y) in a.iter().zip(b) {
            let c = x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1));
            if c != Ordering::Equal {
                return c;
            }
        }
        match a.len().cmp(&b.len()) {
            Ordering::Equal => Ordering::Equal,
            // a is an ancestor of b: b sits left of a iff it branches left
            Ordering::Less => {
                if b[a.len()].0 == 0 {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
            Ordering::Greater => {
                if a[b.len()].0 == 0 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
        }
    }
}

impl PartialOrd for PosId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Replicated sequence. Entries are keyed by the dot of their insert;
/// removal drops the entry and leaves the dot covered by the summary.
#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListState {
    #[serde_as(as = "Vec<(_, _)>")]
    entries: BTreeMap<Dot, (PosId, Value)>,
    vv: VersionVector,
}

impl ListState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Visible entries in list order.
    pub fn ordered(&self) -> Vec<(&Dot, &PosId, &Value)> {
        let mut v: Vec<_> = self.entries.iter().map(|(d, (p, e))| (d, p, e)).collect();
        v.sort_by(|a, b| a.1.cmp(b.1));
        v
    }

    pub fn ids(&self) -> Vec<Dot> {
        self.ordered().into_iter().map(|(d, _, _)| d.clone()).collect()
    }

    pub fn values(&self) -> Vec<Value> {
        self.ordered().into_iter().map(|(_, _, v)| v.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Origin-side resolution shared by the state and op variants: the
    /// position id for an insert, or the target of a remove.
    pub(crate) fn prepare(&self, op: &Op, meta: &EventMeta) -> Result<Prepared, UpdateError> {
        let order = self.ordered();
        match op {
            Op::Ins { pos, elem } => {
                if *pos > order.len() {
                    return Err(UpdateError::IndexOutOfRange { pos: *pos, len: order.len() });
                }
                let left = pos.checked_sub(1).map(|i| order[i].1);
                let right = order.get(*pos).map(|e| e.1);
                let id = PosId::between(left, right, meta.ts.clone());
                debug_assert!(left.is_none_or(|l| *l < id) && right.is_none_or(|r| id < *r));
                let view = order.iter().map(|(d, _, _)| (*d).clone()).collect();
                Ok(Prepared::Insert { id, elem: elem.clone(), view })
            }
            Op::RmvAt(pos) => {
                let Some((target, _, _)) = order.get(*pos) else {
                    return Err(UpdateError::IndexOutOfRange { pos: *pos, len: order.len() });
                };
                Ok(Prepared::Remove { target: (*target).clone() })
            }
            _ => Err(invalid(op, CrdtKind::List)),
        }
    }

    pub(crate) fn insert_entry(&mut self, dot: Dot, id: PosId, elem: Value) {
        self.entries.insert(dot, (id, elem));
    }

    pub(crate) fn remove_entry(&mut self, target: &Dot) {
        self.entries.remove(target);
    }
}

pub(crate) enum Prepared {
    Insert { id: PosId, elem: Value, view: Vec<Dot> },
    Remove { target: Dot },
}

impl StateCrdt for ListState {
    fn kind(&self) -> CrdtKind {
        CrdtKind::List
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        let res = match self.prepare(op, meta)? {
            Prepared::Insert { id, elem, view } => {
                self.insert_entry(meta.dot.clone(), id, elem);
                Resolution::ListInsert { view }
            }
            Prepared::Remove { target } => {
                self.remove_entry(&target);
                Resolution::ListRemove { target }
            }
        };
        self.vv.record(&meta.dot);
        Ok(Some(res))
    }

    fn merge(&mut self, other: &Self) {
        // entries are immutable, so a dot present on both sides is the same entry
        self.entries.retain(|d, _| other.entries.contains_key(d) || !other.vv.contains(d));
        for (d, e) in &other.entries {
            if !self.vv.contains(d) {
                self.entries.entry(d.clone()).or_insert_with(|| e.clone());
            }
        }
        self.vv.merge(&other.vv);
    }

    fn read(&self) -> Reading {
        Reading::Seq(self.values())
    }

    fn dot_counts(&self) -> (usize, usize) {
        (self.entries.len(), 0)
    }

    fn vv_width(&self) -> usize {
        self.vv.width()
    }
}

full_state_delta!(ListState);
