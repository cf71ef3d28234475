use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_with::serde_as;

use crate::causality::{Dot, Timestamp, VersionVector};
use crate::model::{CrdtKind, Op, Reading, SetSemantics, Value};
use crate::oracle::Resolution;

use super::{full_state_delta, invalid, DeltaCrdt, EventMeta, StateCrdt, UpdateError};

/// Raises `vv` with every dot in `dots`. Causal delta delivery makes the
/// dots extend `vv` without gaps; a gap is absorbed as if filled.
fn absorb(vv: &mut VersionVector, dots: &BTreeSet<Dot>) {
    for d in dots {
        vv.raise(&d.replica, d.counter);
    }
}

/// Add-wins (observed-remove) set. Each add tags the element with a fresh
/// dot; a remove deletes the tags it has seen.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwSet {
    entries: BTreeSet<(Value, Dot)>,
    vv: VersionVector,
}

/// A group of add-wins set changes: new tags plus the exact dots whose
/// effect the group carries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwSetDelta {
    pub adds: BTreeSet<(Value, Dot)>,
    pub ctx: BTreeSet<Dot>,
}

impl AwSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, e: &Value) -> bool {
        self.entries.iter().any(|(v, _)| v == e)
    }

    pub fn elements(&self) -> BTreeSet<Value> {
        self.entries.iter().map(|(v, _)| v.clone()).collect()
    }

    fn tags(&self, e: &Value) -> Vec<(Value, Dot)> {
        self.entries.iter().filter(|(v, _)| v == e).cloned().collect()
    }
}

impl StateCrdt for AwSet {
    fn kind(&self) -> CrdtKind {
        CrdtKind::Set(SetSemantics::AddWins)
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        self.update_delta(op, meta).map(|(r, _)| r)
    }

    fn merge(&mut self, other: &Self) {
        let keep = |x: &AwSet, y: &AwSet| -> Vec<(Value, Dot)> {
            x.entries
                .iter()
                .filter(|t| y.entries.contains(t) || !y.vv.contains(&t.1))
                .cloned()
                .collect()
        };
        let mut entries: BTreeSet<_> = keep(self, other).into_iter().collect();
        entries.extend(keep(other, self));
        self.entries = entries;
        self.vv.merge(&other.vv);
    }

    fn read(&self) -> Reading {
        Reading::Set(self.elements())
    }

    fn dot_counts(&self) -> (usize, usize) {
        (self.entries.len(), 0)
    }

    fn vv_width(&self) -> usize {
        self.vv.width()
    }
}

impl DeltaCrdt for AwSet {
    type Delta = AwSetDelta;

    fn update_delta(&mut self, op: &Op, meta: &EventMeta) -> Result<(Option<Resolution>, AwSetDelta), UpdateError> {
        let mut d = AwSetDelta::default();
        match op {
            Op::Add(e) => {
                let tag = (e.clone(), meta.dot.clone());
                self.entries.insert(tag.clone());
                d.adds.insert(tag);
            }
            Op::Rmv(e) => {
                for tag in self.tags(e) {
                    self.entries.remove(&tag);
                    d.ctx.insert(tag.1);
                }
            }
            _ => return Err(invalid(op, self.kind())),
        }
        self.vv.record(&meta.dot);
        d.ctx.insert(meta.dot.clone());
        Ok((None, d))
    }

    fn join_delta(&mut self, delta: &AwSetDelta) {
        self.entries
            .retain(|t| !delta.ctx.contains(&t.1) || delta.adds.contains(t));
        for t in &delta.adds {
            if !self.vv.contains(&t.1) {
                self.entries.insert(t.clone());
            }
        }
        absorb(&mut self.vv, &delta.ctx);
    }

    fn to_delta(&self) -> AwSetDelta {
        AwSetDelta {
            adds: self.entries.clone(),
            ctx: self.vv.dots().collect(),
        }
    }

    fn join_deltas(a: &mut AwSetDelta, b: &AwSetDelta) {
        let keep = |x: &AwSetDelta, y: &AwSetDelta| -> Vec<(Value, Dot)> {
            x.adds
                .iter()
                .filter(|t| y.adds.contains(t) || !y.ctx.contains(&t.1))
                .cloned()
                .collect()
        };
        let mut adds: BTreeSet<_> = keep(a, b).into_iter().collect();
        adds.extend(keep(b, a));
        a.adds = adds;
        a.ctx.extend(b.ctx.iter().cloned());
    }
}

/// Per-element remove-wins bookkeeping: each live add lists the remove
/// dots it supersedes; live removes are kept as tombstones.
#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
struct RwEntry {
    #[serde_as(as = "Vec<(_, _)>")]
    adds: BTreeMap<Dot, BTreeSet<Dot>>,
    rmvs: BTreeSet<Dot>,
}

impl RwEntry {
    fn present(&self) -> bool {
        self.adds.values().any(|cov| self.rmvs.is_subset(cov))
    }
}

/// Remove-wins set: an element is present only if some add happened after
/// every remove of it.
#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RwSet {
    #[serde_as(as = "Vec<(_, _)>")]
    elems: BTreeMap<Value, RwEntry>,
    vv: VersionVector,
}

impl RwSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, e: &Value) -> bool {
        self.elems.get(e).is_some_and(RwEntry::present)
    }
}

impl StateCrdt for RwSet {
    fn kind(&self) -> CrdtKind {
        CrdtKind::Set(SetSemantics::RemoveWins)
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        match op {
            Op::Add(e) => {
                let entry = self.elems.entry(e.clone()).or_default();
                let covered = entry.rmvs.clone();
                entry.adds.clear();
                entry.adds.insert(meta.dot.clone(), covered);
            }
            Op::Rmv(e) => {
                let entry = self.elems.entry(e.clone()).or_default();
                entry.adds.clear();
                entry.rmvs.clear();
                entry.rmvs.insert(meta.dot.clone());
            }
            _ => return Err(invalid(op, self.kind())),
        }
        self.vv.record(&meta.dot);
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        let empty = RwEntry::default();
        let keys: BTreeSet<Value> = self.elems.keys().chain(other.elems.keys()).cloned().collect();
        let mut out = BTreeMap::new();
        for k in keys {
            let x = self.elems.get(&k).unwrap_or(&empty);
            let y = other.elems.get(&k).unwrap_or(&empty);
            let mut e = RwEntry::default();
            for (a, b, bvv) in [(x, y, &other.vv), (y, x, &self.vv)] {
                for (d, cov) in &a.adds {
                    if b.adds.contains_key(d) || !bvv.contains(d) {
                        e.adds.insert(d.clone(), cov.clone());
                    }
                }
                for d in &a.rmvs {
                    if b.rmvs.contains(d) || !bvv.contains(d) {
                        e.rmvs.insert(d.clone());
                    }
                }
            }
            if !e.adds.is_empty() || !e.rmvs.is_empty() {
                out.insert(k, e);
            }
        }
        self.elems = out;
        self.vv.merge(&other.vv);
    }

    fn read(&self) -> Reading {
        Reading::Set(
            self.elems
                .iter()
                .filter(|(_, e)| e.present())
                .map(|(k, _)| k.clone())
                .collect(),
        )
    }

    fn dot_counts(&self) -> (usize, usize) {
        let adds = self.elems.values().map(|e| e.adds.len()).sum();
        let rmvs = self.elems.values().map(|e| e.rmvs.len()).sum();
        (adds, rmvs)
    }

    fn vv_width(&self) -> usize {
        self.vv.width()
    }
}

full_state_delta!(RwSet);

/// Last-writer-wins set: per element, the add or remove with the greatest
/// timestamp decides.
#[serde_as]
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwSet {
    #[serde_as(as = "Vec<(_, _)>")]
    elems: BTreeMap<Value, (Timestamp, bool)>,
}

impl LwwSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn stamp(&mut self, e: &Value, ts: &Timestamp, present: bool) {
        match self.elems.get(e) {
            Some((cur, _)) if cur >= ts => {}
            _ => {
                self.elems.insert(e.clone(), (ts.clone(), present));
            }
        }
    }
}

impl StateCrdt for LwwSet {
    fn kind(&self) -> CrdtKind {
        CrdtKind::Set(SetSemantics::Lww)
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        match op {
            Op::Add(e) => self.stamp(e, &meta.ts, true),
            Op::Rmv(e) => self.stamp(e, &meta.ts, false),
            _ => return Err(invalid(op, self.kind())),
        }
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        for (e, (ts, present)) in &other.elems {
            self.stamp(e, ts, *present);
        }
    }

    fn read(&self) -> Reading {
        Reading::Set(
            self.elems
                .iter()
                .filter(|(_, (_, p))| *p)
                .map(|(e, _)| e.clone())
                .collect(),
        )
    }

    fn dot_counts(&self) -> (usize, usize) {
        let live = self.elems.values().filter(|(_, p)| *p).count();
        (live, self.elems.len() - live)
    }
}

full_state_delta!(LwwSet);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::eval_set;
    use crate::state::testing::Run;

    fn set(items: &[&str]) -> Reading {
        Reading::Set(items.iter().map(|&s| Value::from(s)).collect())
    }

    fn add_wins_script<S: StateCrdt>(init: S) -> Run<S> {
        let mut run = Run::new(init);
        run.submit("A", Op::Add("a".into())).unwrap();
        run.sync_bi("A", "B");
        run.submit("A", Op::Rmv("a".into())).unwrap();
        run.submit("A", Op::Add("a".into())).unwrap();
        run.submit("B", Op::Rmv("a".into())).unwrap();
        run.sync_bi("A", "B");
        run
    }

    fn cross_remove_script<S: StateCrdt>(init: S) -> Run<S> {
        let mut run = Run::new(init);
        run.submit("A", Op::Add("a".into())).unwrap();
        run.submit("A", Op::Rmv("b".into())).unwrap();
        run.submit("B", Op::Add("b".into())).unwrap();
        run.submit("B", Op::Rmv("a".into())).unwrap();
        run.sync_bi("A", "B");
        run
    }

    #[test]
    fn add_wins_keeps_readded_element() {
        let run = add_wins_script(AwSet::new());
        assert_eq!(run.read("A"), set(&["a"]));
        assert_eq!(run.read("B"), set(&["a"]));
        let run = cross_remove_script(AwSet::new());
        assert_eq!(run.read("A"), set(&["a", "b"]));
        assert_eq!(run.read("B"), set(&["a", "b"]));
    }

    #[test]
    fn remove_wins_empties_the_set() {
        let run = add_wins_script(RwSet::new());
        assert_eq!(run.read("A"), set(&[]));
        assert_eq!(run.read("B"), set(&[]));
        assert_eq!(run.read("A"), eval_set(&run.history, SetSemantics::RemoveWins).unwrap());
        let run = cross_remove_script(RwSet::new());
        assert_eq!(run.read("A"), set(&[]));
    }

    #[test]
    fn remove_then_add_is_present() {
        let mut run = Run::new(RwSet::new());
        run.submit("A", Op::Rmv("x".into())).unwrap();
        run.submit("A", Op::Add("x".into())).unwrap();
        assert!(run.state("A").lookup(&"x".into()));
        let mut run = Run::new(RwSet::new());
        run.submit("A", Op::Add("x".into())).unwrap();
        run.submit("B", Op::Rmv("x".into())).unwrap();
        run.sync_bi("A", "B");
        assert!(!run.state("A").lookup(&"x".into()));
    }

    #[test]
    fn lww_set_follows_timestamps() {
        let run = add_wins_script(LwwSet::new());
        assert_eq!(run.read("A"), eval_set(&run.history, SetSemantics::Lww).unwrap());
        assert_eq!(run.read("A"), run.read("B"));
    }

    #[test]
    fn sequential_add_remove() {
        let mut run = Run::new(AwSet::new());
        run.submit("A", Op::Add("e".into())).unwrap();
        run.submit("A", Op::Rmv("e".into())).unwrap();
        assert!(!run.state("A").lookup(&"e".into()));
    }

    #[test]
    fn batched_deltas_equal_full_merge() {
        let mut run = Run::new(AwSet::new());
        run.submit("B", Op::Add("seed".into())).unwrap();
        run.sync_bi("A", "B");
        let remote = run.state("B").clone();
        let mut group: Option<AwSetDelta> = None;
        for i in 0..10 {
            let meta = run.meta("A");
            let (s, vv, clock) = run.replicas.get_mut("A").unwrap();
            let op = if i % 4 == 3 {
                Op::Rmv(Value::Int(i - 1))
            } else {
                Op::Add(Value::Int(i))
            };
            let (_, d) = s.update_delta(&op, &meta).unwrap();
            vv.record(&meta.dot);
            clock.observe(&meta.ts);
            match &mut group {
                None => group = Some(d),
                Some(g) => AwSet::join_deltas(g, &d),
            }
        }
        let mut via_delta = remote.clone();
        via_delta.join_delta(group.as_ref().unwrap());
        let via_state = remote.merged(run.state("A"));
        assert_eq!(via_delta, via_state);
        via_delta.join_delta(group.as_ref().unwrap());
        assert_eq!(via_delta, via_state);
    }

    #[test]
    fn gapped_context_is_absorbed() {
        let mut s = AwSet::new();
        let d = AwSetDelta {
            adds: [(Value::from("a"), Dot::new("B", 2))].into(),
            ctx: [Dot::new("B", 3)].into(),
        };
        s.join_delta(&d);
        assert_eq!(s.read(), Reading::Set([Value::from("a")].into()));
        assert_eq!(s.vv.get(&"B".into()), 3);
    }

    #[test]
    fn full_state_as_delta() {
        let run = cross_remove_script(AwSet::new());
        let mut fresh = AwSet::new();
        fresh.join_delta(&run.state("A").to_delta());
        assert_eq!(&fresh, run.state("A"));
    }

    #[test]
    fn states_round_trip_through_json() {
        let run = add_wins_script(RwSet::new());
        let s = run.state("A");
        let back: RwSet = serde_json::from_str(&serde_json::to_string(s).unwrap()).unwrap();
        assert_eq!(&back, s);
        let run = add_wins_script(LwwSet::new());
        let s = run.state("B");
        let back: LwwSet = serde_json::from_str(&serde_json::to_string(s).unwrap()).unwrap();
        assert_eq!(&back, s);
    }
}
