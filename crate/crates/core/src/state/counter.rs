use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::causality::ReplicaId;
use crate::model::{CrdtKind, Op, Reading};
use crate::oracle::Resolution;

use super::{invalid, DeltaCrdt, EventMeta, StateCrdt, UpdateError};

/// Positive-negative counter. `p[r]` accumulates r's increments and `n[r]`
/// its decrements as a non-positive sum.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnCounter {
    pub(crate) p: BTreeMap<ReplicaId, i64>,
    pub(crate) n: BTreeMap<ReplicaId, i64>,
}

impl PnCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `n` to the local entry: positive amounts go to `p`, negative to `n`.
    pub fn inc(&mut self, replica: &ReplicaId, n: i64) {
        if n > 0 {
            *self.p.entry(replica.clone()).or_default() += n;
        } else if n < 0 {
            *self.n.entry(replica.clone()).or_default() += n;
        }
    }

    pub fn value(&self) -> i64 {
        self.p.values().sum::<i64>() + self.n.values().sum::<i64>()
    }

    pub(crate) fn local(&self, replica: &ReplicaId) -> i64 {
        self.p.get(replica).copied().unwrap_or(0) + self.n.get(replica).copied().unwrap_or(0)
    }

    fn amount(&self, op: &Op) -> Result<i64, UpdateError> {
        match op {
            Op::Inc(n) => Ok(*n as i64),
            Op::Dec(n) => Ok(-(*n as i64)),
            _ => Err(invalid(op, CrdtKind::Counter)),
        }
    }
}

impl StateCrdt for PnCounter {
    fn kind(&self) -> CrdtKind {
        CrdtKind::Counter
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        let n = self.amount(op)?;
        self.inc(&meta.replica, n);
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        for (r, &v) in &other.p {
            let e = self.p.entry(r.clone()).or_default();
            *e = (*e).max(v);
        }
        for (r, &v) in &other.n {
            let e = self.n.entry(r.clone()).or_default();
            *e = (*e).min(v);
        }
    }

    fn read(&self) -> Reading {
        Reading::Int(self.value())
    }

    fn vv_width(&self) -> usize {
        self.p.len().max(self.n.len())
    }
}

impl DeltaCrdt for PnCounter {
    type Delta = PnCounter;

    /// The delta is the single updated entry.
    fn update_delta(&mut self, op: &Op, meta: &EventMeta) -> Result<(Option<Resolution>, PnCounter), UpdateError> {
        let n = self.amount(op)?;
        self.inc(&meta.replica, n);
        let mut d = PnCounter::new();
        let r = &meta.replica;
        if n > 0 {
            d.p.insert(r.clone(), self.p[r]);
        } else if n < 0 {
            d.n.insert(r.clone(), self.n[r]);
        }
        Ok((None, d))
    }

    fn join_delta(&mut self, delta: &PnCounter) {
        self.merge(delta);
    }

    fn to_delta(&self) -> PnCounter {
        self.clone()
    }

    fn join_deltas(a: &mut PnCounter, b: &PnCounter) {
        a.merge(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::eval_counter;
    use crate::state::testing::Run;

    #[test]
    fn increments_from_two_replicas() {
        let mut run = Run::new(PnCounter::new());
        run.submit("A", Op::Inc(5)).unwrap();
        run.submit("B", Op::Dec(3)).unwrap();
        run.sync_bi("A", "B");
        assert_eq!(run.read("A"), Reading::Int(2));
        assert_eq!(run.read("A"), eval_counter(&run.history).unwrap());
        assert_eq!(run.read("B"), run.read("A"));
    }

    #[test]
    fn merge_of_separate_entries() {
        let mut x = PnCounter::new();
        x.inc(&"A".into(), 5);
        let mut y = PnCounter::new();
        y.inc(&"B".into(), -3);
        assert_eq!(x.merged(&y).value(), 2);
        assert_eq!(x.merged(&x), x);
    }

    #[test]
    fn zero_increment_is_a_no_op() {
        let mut x = PnCounter::new();
        x.inc(&"A".into(), 0);
        assert_eq!(x, PnCounter::new());
    }

    #[test]
    fn delta_matches_full_update() {
        let mut run = Run::new(PnCounter::new());
        run.submit("A", Op::Inc(4)).unwrap();
        let mut s = run.state("A").clone();
        let pre = s.clone();
        let meta = run.meta("A");
        let (_, d) = s.update_delta(&Op::Inc(3), &meta).unwrap();
        assert_eq!(d.value(), 7);
        let mut joined = pre.clone();
        joined.join_delta(&d);
        assert_eq!(joined, s);
        joined.join_delta(&d);
        assert_eq!(joined, s);
    }
}
