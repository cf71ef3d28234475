use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::causality::{Dot, Timestamp, VersionVector};
use crate::model::{CrdtKind, Op, Reading, RegisterSemantics, Value};
use crate::oracle::Resolution;

use super::{full_state_delta, invalid, EventMeta, StateCrdt, UpdateError};

/// Last-writer-wins register.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwRegister {
    val: Option<Value>,
    ts: Option<Timestamp>,
}

impl LwwRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self) -> Option<&Value> {
        self.val.as_ref()
    }
}

impl StateCrdt for LwwRegister {
    fn kind(&self) -> CrdtKind {
        CrdtKind::Register(RegisterSemantics::Lww)
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        let Op::Wr(v) = op else {
            return Err(invalid(op, self.kind()));
        };
        debug_assert!(self.ts.as_ref().is_none_or(|t| *t < meta.ts));
        self.val = Some(v.clone());
        self.ts = Some(meta.ts.clone());
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        if other.ts > self.ts {
            *self = other.clone();
        }
    }

    fn read(&self) -> Reading {
        self.val.clone().map_or(Reading::Null, Reading::Scalar)
    }
}

full_state_delta!(LwwRegister);

/// Multi-value register: keeps every concurrently written value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MvRegister {
    entries: BTreeSet<(Value, Dot)>,
    vv: VersionVector,
}

impl MvRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn values(&self) -> BTreeSet<Value> {
        self.entries.iter().map(|(v, _)| v.clone()).collect()
    }

    fn write(&mut self, op: &Op, meta: &EventMeta, kind: CrdtKind) -> Result<(), UpdateError> {
        let Op::Wr(v) = op else {
            return Err(invalid(op, kind));
        };
        self.entries.clear();
        self.entries.insert((v.clone(), meta.dot.clone()));
        self.vv.record(&meta.dot);
        Ok(())
    }

    fn join(&mut self, other: &Self) {
        let keep = |x: &MvRegister, y: &MvRegister| -> Vec<(Value, Dot)> {
            x.entries
                .iter()
                .filter(|(_, d)| !y.vv.contains(d) || y.entries.iter().any(|(_, e)| e == d))
                .cloned()
                .collect()
        };
        let mut entries: BTreeSet<_> = keep(self, other).into_iter().collect();
        entries.extend(keep(other, self));
        self.entries = entries;
        self.vv.merge(&other.vv);
    }
}

impl StateCrdt for MvRegister {
    fn kind(&self) -> CrdtKind {
        CrdtKind::Register(RegisterSemantics::Mv)
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        self.write(op, meta, self.kind())?;
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        self.join(other);
    }

    fn read(&self) -> Reading {
        Reading::Set(self.values())
    }

    fn dot_counts(&self) -> (usize, usize) {
        (self.entries.len(), 0)
    }

    fn vv_width(&self) -> usize {
        self.vv.width()
    }
}

full_state_delta!(MvRegister);

/// Max register: a multi-value register of integers read as the maximum
/// of the concurrent latest writes. Its value can go down.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxRegister {
    inner: MvRegister,
}

impl MaxRegister {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StateCrdt for MaxRegister {
    fn kind(&self) -> CrdtKind {
        CrdtKind::MaxRegister
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        if !matches!(op, Op::Wr(Value::Int(_))) {
            return Err(invalid(op, self.kind()));
        }
        self.inner.write(op, meta, self.kind())?;
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        self.inner.join(&other.inner);
    }

    fn read(&self) -> Reading {
        self.inner
            .values()
            .iter()
            .filter_map(Value::as_int)
            .max()
            .map_or(Reading::Null, Reading::Int)
    }

    fn dot_counts(&self) -> (usize, usize) {
        self.inner.dot_counts()
    }

    fn vv_width(&self) -> usize {
        self.inner.vv_width()
    }
}

full_state_delta!(MaxRegister);
