use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_with::serde_as;

use crate::causality::ReplicaId;
use crate::model::{CrdtKind, Op, Reading};
use crate::oracle::Resolution;

use super::{full_state_delta, invalid, EventMeta, PnCounter, StateCrdt, UpdateError};

/// Counter that never goes below zero. Each replica may decrement only up
/// to its rights: what it incremented, minus what it decremented, adjusted
/// by transfers to and from other replicas.
#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundedCounter {
    counter: PnCounter,
    #[serde_as(as = "Vec<(_, _)>")]
    transfers: BTreeMap<(ReplicaId, ReplicaId), u64>,
}

impl BoundedCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self) -> i64 {
        self.counter.value()
    }

    pub fn rights(&self, r: &ReplicaId) -> i64 {
        let out: u64 = self
            .transfers
            .iter()
            .filter(|((from, _), _)| from == r)
            .map(|(_, n)| n)
            .sum();
        let inn: u64 = self
            .transfers
            .iter()
            .filter(|((_, to), _)| to == r)
            .map(|(_, n)| n)
            .sum();
        self.counter.local(r) - out as i64 + inn as i64
    }

    fn check(&self, r: &ReplicaId, need: u64) -> Result<(), UpdateError> {
        let have = self.rights(r);
        if have < need as i64 {
            return Err(UpdateError::InsufficientRights { need, have });
        }
        Ok(())
    }
}

impl StateCrdt for BoundedCounter {
    fn kind(&self) -> CrdtKind {
        CrdtKind::BoundedCounter
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        let r = &meta.replica;
        match op {
            Op::Inc(n) => self.counter.inc(r, *n as i64),
            Op::Dec(n) => {
                self.check(r, *n)?;
                self.counter.inc(r, -(*n as i64));
            }
            Op::Transfer { to, n } => {
                if to == r {
                    return Err(UpdateError::SelfTransfer);
                }
                self.check(r, *n)?;
                *self.transfers.entry((r.clone(), to.clone())).or_default() += n;
            }
            _ => return Err(invalid(op, CrdtKind::BoundedCounter)),
        }
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        self.counter.merge(&other.counter);
        for (k, &n) in &other.transfers {
            let e = self.transfers.entry(k.clone()).or_default();
            *e = (*e).max(n);
        }
    }

    fn read(&self) -> Reading {
        Reading::Int(self.value())
    }

    fn vv_width(&self) -> usize {
        self.counter.vv_width()
    }
}

full_state_delta!(BoundedCounter);
