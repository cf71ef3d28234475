//! Map of CRDTs kept as a grow-only log of update and remove records.
//!
//! Each record carries its dot, the causal context of its origin and its
//! timestamp. Merge is set union; the query decides, per leaf, which
//! updates are still effective under the configured semantics and folds
//! them with the embedded type. The op-based map applies the same records
//! as effectors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::causality::{Dot, Timestamp, VersionVector};
use crate::model::{is_prefix, CrdtKind, KeyPath, LeafKey, LeafType, MapSemantics, Op, Reading};
use crate::oracle::Resolution;

use super::{invalid, DeltaCrdt, EventMeta, StateCrdt, UpdateError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordBody {
    Upd { key: KeyPath, op: Op },
    Rmv { key: KeyPath },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRecord {
    pub dot: Dot,
    pub ctx: VersionVector,
    pub ts: Timestamp,
    pub body: RecordBody,
}

impl MapRecord {
    fn before(&self, other: &MapRecord) -> bool {
        other.ctx.contains(&self.dot)
    }
}

/// Validates `op` as a map update and builds its record.
pub(crate) fn make_record(op: &Op, meta: &EventMeta, ctx: VersionVector, kind: CrdtKind) -> Result<MapRecord, UpdateError> {
    let body = match op {
        Op::Upd { key, op: inner } if !key.is_empty() && LeafType::of(inner).is_some() => RecordBody::Upd {
            key: key.clone(),
            op: (**inner).clone(),
        },
        Op::RmvKey(key) if !key.is_empty() => RecordBody::Rmv { key: key.clone() },
        _ => return Err(invalid(op, kind)),
    };
    Ok(MapRecord { dot: meta.dot.clone(), ctx, ts: meta.ts.clone(), body })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MapLog {
    records: BTreeMap<Dot, MapRecord>,
}

impl Serialize for MapLog {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.records.values())
    }
}

impl<'de> Deserialize<'de> for MapLog {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<MapRecord>::deserialize(d)?;
        Ok(MapLog { records: v.into_iter().map(|r| (r.dot.clone(), r)).collect() })
    }
}

impl MapLog {
    pub fn insert(&mut self, r: MapRecord) {
        self.records.insert(r.dot.clone(), r);
    }

    pub fn union(&mut self, other: &MapLog) {
        for (d, r) in &other.records {
            self.records.entry(d.clone()).or_insert_with(|| r.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tombstones(&self) -> usize {
        self.records
            .values()
            .filter(|r| matches!(r.body, RecordBody::Rmv { .. }))
            .count()
    }

    pub fn read(&self, semantics: MapSemantics) -> Reading {
        let mut leaves: BTreeMap<LeafKey, Vec<(&MapRecord, &Op)>> = BTreeMap::new();
        let mut rmvs: Vec<(&MapRecord, &KeyPath)> = Vec::new();
        let mut upds: Vec<(&MapRecord, &KeyPath)> = Vec::new();
        for r in self.records.values() {
            match &r.body {
                RecordBody::Upd { key, op } => {
                    // records are validated on creation; decoded ones may not be
                    let Some(ty) = LeafType::of(op) else { continue };
                    leaves.entry((key.clone(), ty)).or_default().push((r, op));
                    upds.push((r, key));
                }
                RecordBody::Rmv { key } => rmvs.push((r, key)),
            }
        }

        let mut cuts: BTreeMap<&KeyPath, Option<Vec<&MapRecord>>> = BTreeMap::new();
        if semantics == MapSemantics::UpdateWins {
            for (_, key) in &rmvs {
                if cuts.contains_key(key) {
                    continue;
                }
                let rs: Vec<&MapRecord> = rmvs.iter().filter(|(_, k)| is_prefix(k, key)).map(|(r, _)| *r).collect();
                let us: Vec<&MapRecord> = upds.iter().filter(|(_, k)| is_prefix(key, k)).map(|(r, _)| *r).collect();
                cuts.insert(key, latest_cut(&rs, &us));
            }
        }

        let mut out = BTreeMap::new();
        for ((path, ty), ops) in leaves {
            let covering: Vec<&MapRecord> = rmvs
                .iter()
                .filter(|(_, k)| is_prefix(k, &path))
                .map(|(r, _)| *r)
                .collect();
            let live: Vec<(&MapRecord, &Op)> = ops
                .into_iter()
                .filter(|(u, _)| match semantics {
                    MapSemantics::RecursiveReset => covering.iter().all(|r| !u.before(r)),
                    MapSemantics::RemoveWins => covering.iter().all(|r| r.before(u)),
                    MapSemantics::UpdateWins => cuts
                        .iter()
                        .filter(|(k, _)| is_prefix(k, &path))
                        .all(|(_, c)| c.as_ref().is_none_or(|c| c.iter().any(|r| r.before(u)))),
                })
                .collect();
            if live.is_empty() {
                continue;
            }
            out.insert((path, ty), fold_leaf(ty, &live));
        }
        Reading::from_leaves(out)
    }
}

fn fold_leaf(ty: LeafType, live: &[(&MapRecord, &Op)]) -> Reading {
    match ty {
        LeafType::Counter => Reading::Int(live.iter().fold(0i64, |acc, (_, op)| match op {
            Op::Inc(n) => acc.wrapping_add(*n as i64),
            Op::Dec(n) => acc.wrapping_sub(*n as i64),
            _ => acc,
        })),
        LeafType::Register => live
            .iter()
            .max_by(|a, b| a.0.ts.cmp(&b.0.ts))
            .and_then(|(_, op)| match op {
                Op::Wr(v) => Some(Reading::Scalar(v.clone())),
                _ => None,
            })
            .unwrap_or(Reading::Null),
        LeafType::Set => {
            let mut present = BTreeSet::new();
            for (a, op) in live {
                let Op::Add(e) = op else { continue };
                let removed = live
                    .iter()
                    .any(|(r, rop)| matches!(rop, Op::Rmv(x) if x == e) && a.before(r));
                if !removed {
                    present.insert(e.clone());
                }
            }
            Reading::Set(present)
        }
    }
}

/// Latest minimal vertex cut over removes `rs` and updates `us`.
///
/// The last remove on each maximal chain is found directly: a remove is
/// "last" when a chain leads from it to a maximal update through updates
/// only. The cut keeps the last removes reachable from a minimal element
/// without crossing another last remove.
pub(crate) fn latest_cut<'a>(rs: &[&'a MapRecord], us: &[&'a MapRecord]) -> Option<Vec<&'a MapRecord>> {
    if rs.is_empty() {
        return None;
    }
    let all: Vec<&MapRecord> = rs.iter().chain(us).copied().collect();
    let n = all.len();
    let before = |i: usize, j: usize| all[i].before(all[j]);
    let minimal: Vec<bool> = (0..n).map(|i| !(0..n).any(|j| before(j, i))).collect();
    let maximal: Vec<bool> = (0..n).map(|i| !(0..n).any(|j| before(i, j))).collect();
    let is_rmv = |i: usize| i < rs.len();

    // nodes reachable from `starts` along covering steps that never pass
    // through a blocked node; blocked nodes are reached but not expanded
    let reach = |starts: &[usize], blocked: &[bool]| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = starts.to_vec();
        while let Some(i) = stack.pop() {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            if blocked[i] && !starts.contains(&i) {
                continue;
            }
            for j in 0..n {
                if !seen[j] && before(i, j) && !(0..n).any(|c| blocked[c] && before(i, c) && before(c, j)) {
                    stack.push(j);
                }
            }
        }
        seen
    };

    let rmv_mask: Vec<bool> = (0..n).map(is_rmv).collect();
    let free_starts: Vec<usize> = (0..n).filter(|&i| minimal[i] && !is_rmv(i)).collect();
    let free = reach(&free_starts, &rmv_mask);
    if (0..n).any(|i| free[i] && maximal[i] && !is_rmv(i)) {
        return None;
    }

    let last: Vec<bool> = (0..n)
        .map(|i| {
            is_rmv(i) && (maximal[i] || {
                let r = reach(&[i], &rmv_mask);
                (0..n).any(|j| r[j] && maximal[j] && !is_rmv(j))
            })
        })
        .collect();
    let starts: Vec<usize> = (0..n).filter(|&i| minimal[i] && !last[i]).collect();
    let hit = reach(&starts, &last);
    Some(
        (0..n)
            .filter(|&i| last[i] && (minimal[i] || hit[i]))
            .map(|i| all[i])
            .collect(),
    )
}

/// State-based map of CRDTs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrMap {
    semantics: MapSemantics,
    log: MapLog,
    vv: VersionVector,
}

impl OrMap {
    pub fn new(semantics: MapSemantics) -> Self {
        Self { semantics, log: MapLog::default(), vv: VersionVector::new() }
    }

    /// Value of the leaf at `key` with embedded type `ty`, or `None` when
    /// the leaf is absent.
    pub fn get(&self, key: &[String], ty: LeafType) -> Option<Reading> {
        let mut node = &self.read();
        let (last, parents) = key.split_last()?;
        for p in parents {
            node = match node {
                Reading::Map(m) => m.get(p)?,
                _ => return None,
            };
        }
        let Reading::Map(m) = node else { return None };
        m.get(last)
            .or_else(|| m.get(&format!("{last}#{}", ty.tag())))
            .filter(|r| leaf_matches(r, ty))
            .cloned()
    }
}

fn leaf_matches(r: &Reading, ty: LeafType) -> bool {
    matches!(
        (r, ty),
        (Reading::Int(_), LeafType::Counter)
            | (Reading::Scalar(_) | Reading::Null, LeafType::Register)
            | (Reading::Set(_), LeafType::Set)
    )
}

impl StateCrdt for OrMap {
    fn kind(&self) -> CrdtKind {
        CrdtKind::Map(self.semantics)
    }

    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
        let rec = make_record(op, meta, self.vv.clone(), self.kind())?;
        self.log.insert(rec);
        self.vv.record(&meta.dot);
        Ok(None)
    }

    fn merge(&mut self, other: &Self) {
        debug_assert_eq!(self.semantics, other.semantics);
        self.log.union(&other.log);
        self.vv.merge(&other.vv);
    }

    fn read(&self) -> Reading {
        self.log.read(self.semantics)
    }

    fn dot_counts(&self) -> (usize, usize) {
        let t = self.log.tombstones();
        (self.log.len() - t, t)
    }

    fn vv_width(&self) -> usize {
        self.vv.width()
    }
}

/// A delta is the new record with the origin's context after the update.
/// Joining it is only sound where the receiver already holds every record
/// that context covers, as delta-interval exchange guarantees.
impl DeltaCrdt for OrMap {
    type Delta = OrMap;

    fn update_delta(&mut self, op: &Op, meta: &EventMeta) -> Result<(Option<Resolution>, OrMap), UpdateError> {
        let rec = make_record(op, meta, self.vv.clone(), self.kind())?;
        let mut delta = OrMap::new(self.semantics);
        delta.log.insert(rec.clone());
        self.log.insert(rec);
        self.vv.record(&meta.dot);
        delta.vv = self.vv.clone();
        Ok((None, delta))
    }

    fn join_delta(&mut self, delta: &OrMap) {
        self.merge(delta);
    }

    fn to_delta(&self) -> OrMap {
        self.clone()
    }

    fn join_deltas(a: &mut OrMap, b: &OrMap) {
        a.merge(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{cut_over, eval_map_crdt, ScriptedHistory, UpdateEvent, UpdateHistory};
    use crate::model::Value;
    use crate::state::testing::Run;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn k(parts: &[&str]) -> KeyPath {
        parts.iter().map(|s| s.to_string()).collect()
    }

    fn upd(key: &[&str], op: Op) -> Op {
        Op::Upd { key: k(key), op: Box::new(op) }
    }

    const ALL: [MapSemantics; 3] = [
        MapSemantics::RecursiveReset,
        MapSemantics::RemoveWins,
        MapSemantics::UpdateWins,
    ];

    fn inventory(sem: MapSemantics) -> Run<OrMap> {
        let mut run = Run::new(OrMap::new(sem));
        run.submit("A", upd(&["Alice", "Coin"], Op::Wr(10.into()))).unwrap();
        run.submit("A", upd(&["Alice", "Objects"], Op::Add("hammer".into()))).unwrap();
        run.sync_bi("A", "B");
        run.submit("A", upd(&["Alice", "Objects"], Op::Add("nail".into()))).unwrap();
        run.submit("B", Op::RmvKey(k(&["Alice"]))).unwrap();
        run.sync_bi("A", "B");
        run
    }

    #[test]
    fn shopping_cart_reset() {
        let mut run = Run::new(OrMap::new(MapSemantics::RecursiveReset));
        run.submit("A", upd(&["sugar"], Op::Inc(1))).unwrap();
        run.submit("A", upd(&["flour"], Op::Inc(1))).unwrap();
        run.submit("A", upd(&["flour"], Op::Inc(1))).unwrap();
        run.sync_bi("A", "B");
        run.submit("A", upd(&["flour"], Op::Inc(1))).unwrap();
        run.submit("B", Op::RmvKey(k(&["sugar"]))).unwrap();
        run.submit("B", Op::RmvKey(k(&["flour"]))).unwrap();
        run.sync_bi("A", "B");
        assert_eq!(run.read("A").to_json(), json!({"flour": 1}));
        assert_eq!(run.read("B"), run.read("A"));
    }

    #[test]
    fn inventory_under_each_semantics() {
        assert_eq!(inventory(MapSemantics::RemoveWins).read("A").to_json(), json!({}));
        let run = inventory(MapSemantics::UpdateWins);
        assert_eq!(
            run.read("B").to_json(),
            json!({"Alice": {"Coin": 10, "Objects": ["hammer", "nail"]}})
        );
        assert_eq!(run.state("A").get(&k(&["Alice", "Coin"]), LeafType::Register), Some(Reading::Scalar(10.into())));
        assert_eq!(run.state("A").get(&k(&["Alice", "Coin"]), LeafType::Counter), None);
        assert_eq!(run.state("A").get(&k(&["Bob"]), LeafType::Counter), None);
    }

    #[test]
    fn both_replicas_reset_then_write() {
        let mut run = Run::new(OrMap::new(MapSemantics::UpdateWins));
        run.submit("A", upd(&["Alice", "Coin"], Op::Wr(10.into()))).unwrap();
        run.submit("A", upd(&["Alice", "Objects"], Op::Add("hammer".into()))).unwrap();
        run.sync_bi("A", "B");
        for r in ["A", "B"] {
            run.submit(r, Op::RmvKey(k(&["Alice"]))).unwrap();
            run.submit(r, upd(&["Alice", "Coin"], Op::Wr(5.into()))).unwrap();
        }
        run.sync_bi("A", "B");
        assert_eq!(run.read("A").to_json(), json!({"Alice": {"Coin": 5}}));
    }

    #[test]
    fn invalid_ops_rejected() {
        let mut run = Run::new(OrMap::new(MapSemantics::UpdateWins));
        assert!(run.submit("A", Op::Inc(1)).is_err());
        assert!(run.submit("A", Op::RmvKey(vec![])).is_err());
        assert!(run.submit("A", upd(&["x"], Op::RmvAt(0))).is_err());
    }

    #[test]
    fn delta_is_the_new_record() {
        let meta = |c: u64| EventMeta {
            replica: "A".into(),
            dot: Dot::new("A", c),
            ts: Timestamp::new(c, "A"),
        };
        let mut a = OrMap::new(MapSemantics::UpdateWins);
        let mut b = OrMap::new(MapSemantics::UpdateWins);
        let (_, d1) = a.update_delta(&upd(&["x"], Op::Inc(2)), &meta(1)).unwrap();
        let (_, d2) = a.update_delta(&Op::RmvKey(k(&["x"])), &meta(2)).unwrap();
        assert_eq!((d1.log.len(), d2.log.len()), (1, 1));
        assert_eq!(d2.vv, a.vv);
        let mut group = d1.clone();
        OrMap::join_deltas(&mut group, &d2);
        b.join_delta(&group);
        assert_eq!(b, a);
        assert_eq!(b.read().to_json(), json!({}));
    }

    /// Random map history over a small key space, keeping removes rare.
    fn random_map_run(seed: u64, ops: usize, rmv_p: f64) -> ScriptedHistory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["A", "B", "C"];
        let keys = [vec!["x"], vec!["y"], vec!["x", "a"], vec!["x", "b"], vec!["y", "a"]];
        let mut s = ScriptedHistory::new();
        for _ in 0..ops {
            let r = names[rng.gen_range(0..3)];
            let key = &keys[rng.gen_range(0..keys.len())];
            let op = if rng.gen_bool(rmv_p) {
                Op::RmvKey(k(key))
            } else {
                let inner = match rng.gen_range(0..4) {
                    0 => Op::Inc(rng.gen_range(1..4)),
                    1 => Op::Wr(Value::Int(rng.gen_range(0..9))),
                    2 => Op::Add(Value::Int(rng.gen_range(0..3))),
                    _ => Op::Rmv(Value::Int(rng.gen_range(0..3))),
                };
                upd(key, inner)
            };
            s.submit(r, op);
            if rng.gen_bool(0.3) {
                let a = names[rng.gen_range(0..3)];
                let b = names[rng.gen_range(0..3)];
                s.sync(a, b);
            }
        }
        s
    }

    fn records(h: &UpdateHistory) -> Vec<MapRecord> {
        h.events()
            .map(|e| {
                let meta = EventMeta { replica: e.origin.clone(), dot: e.id.clone(), ts: e.ts.clone() };
                make_record(&e.op, &meta, e.context.clone(), CrdtKind::Map(MapSemantics::UpdateWins)).unwrap()
            })
            .collect()
    }

    #[test]
    fn direct_cut_agrees_with_exhaustive_search() {
        for seed in 0..300 {
            let s = random_map_run(seed, 24, 0.35);
            let h = s.history();
            let recs = records(h);
            let events: BTreeMap<&Dot, &UpdateEvent> = h.events().map(|e| (&e.id, e)).collect();
            for key in [k(&["x"]), k(&["y"]), k(&["x", "a"]), k(&["y", "a"])] {
                let rs: Vec<&MapRecord> = recs
                    .iter()
                    .filter(|r| matches!(&r.body, RecordBody::Rmv { key: p } if is_prefix(p, &key)))
                    .collect();
                let us: Vec<&MapRecord> = recs
                    .iter()
                    .filter(|r| matches!(&r.body, RecordBody::Upd { key: p, .. } if is_prefix(&key, p)))
                    .collect();
                let fast = latest_cut(&rs, &us).map(|c| c.iter().map(|r| r.dot.clone()).collect::<BTreeSet<_>>());
                let re: Vec<&UpdateEvent> = rs.iter().map(|r| events[&r.dot]).collect();
                let ue: Vec<&UpdateEvent> = us.iter().map(|r| events[&r.dot]).collect();
                let slow = cut_over(&re, &ue).unwrap();
                assert_eq!(fast, slow, "seed {seed} key {key:?}");
            }
        }
    }

    #[test]
    fn log_reading_agrees_with_oracle() {
        for seed in 0..200 {
            let s = random_map_run(seed, 40, 0.15);
            let h = s.history();
            let mut log = MapLog::default();
            for r in records(h) {
                log.insert(r);
            }
            for sem in ALL {
                assert_eq!(log.read(sem), eval_map_crdt(h, sem).unwrap(), "seed {seed} {sem:?}");
            }
        }
    }

    #[test]
    fn state_round_trips_through_json() {
        let run = inventory(MapSemantics::UpdateWins);
        let s = run.state("A");
        let back: OrMap = serde_json::from_str(&serde_json::to_string(s).unwrap()).unwrap();
        assert_eq!(&back, s);
    }
}
