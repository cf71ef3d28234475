//! Strong list specification check. A list has no closed-form value
//! oracle; instead every observation is tested against the history for
//! membership, a single global element order, and the origin's intent of
//! each insert.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::causality::{Dot, ReplicaId, VersionVector};
use crate::model::Op;

use super::history::{Resolution, UpdateHistory};
use super::OracleError;

/// One read of a list replica: the element ids in list order and the
/// replica's knowledge when reading.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListObservation {
    pub replica: ReplicaId,
    pub known: VersionVector,
    pub ids: Vec<Dot>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListVerdict {
    pub violations: Vec<String>,
}

impl ListVerdict {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_list(h: &UpdateHistory, observations: &[ListObservation]) -> Result<ListVerdict, OracleError> {
    let mut inserts: BTreeMap<&Dot, &[Dot]> = BTreeMap::new();
    let mut removes: Vec<(&Dot, &Dot)> = Vec::new();
    for e in h.events() {
        match (&e.op, &e.resolution) {
            (Op::Ins { pos, .. }, Some(Resolution::ListInsert { view })) => {
                if *pos > view.len() {
                    return Err(OracleError::BadResolution(e.id.clone()));
                }
                inserts.insert(&e.id, view);
            }
            (Op::RmvAt(_), Some(Resolution::ListRemove { target })) => {
                let t = h.get(target)?;
                if !matches!(t.op, Op::Ins { .. }) || !e.context.contains(target) {
                    return Err(OracleError::BadResolution(e.id.clone()));
                }
                removes.push((&e.id, target));
            }
            (Op::Ins { .. } | Op::RmvAt(_), _) => return Err(OracleError::BadResolution(e.id.clone())),
            _ => {
                return Err(OracleError::ForeignOp {
                    id: e.id.clone(),
                    op: e.op.name(),
                    expected: "ins or rmv_at",
                })
            }
        }
    }

    let mut verdict = ListVerdict::default();

    for obs in observations {
        let expected: BTreeSet<&Dot> = inserts
            .keys()
            .copied()
            .filter(|d| obs.known.contains(d))
            .filter(|d| !removes.iter().any(|(r, t)| t == d && obs.known.contains(r)))
            .collect();
        let seen: BTreeSet<&Dot> = obs.ids.iter().collect();
        if seen.len() != obs.ids.len() {
            verdict
                .violations
                .push(format!("{} shows an element twice", obs.replica));
        }
        if seen != expected {
            let missing: Vec<_> = expected.difference(&seen).collect();
            let extra: Vec<_> = seen.difference(&expected).collect();
            verdict.violations.push(format!(
                "{} membership: missing {missing:?}, unexpected {extra:?}",
                obs.replica
            ));
        }
    }

    // every observation and every origin view must agree with one order
    let mut edges: BTreeMap<&Dot, BTreeSet<&Dot>> = BTreeMap::new();
    for obs in observations {
        for w in obs.ids.windows(2) {
            edges.entry(&w[0]).or_default().insert(&w[1]);
        }
    }
    for e in h.events() {
        if let (Op::Ins { pos, .. }, Some(Resolution::ListInsert { view })) = (&e.op, &e.resolution) {
            for w in view.windows(2) {
                edges.entry(&w[0]).or_default().insert(&w[1]);
            }
            if *pos > 0 {
                edges.entry(&view[pos - 1]).or_default().insert(&e.id);
            }
            if *pos < view.len() {
                edges.entry(&e.id).or_default().insert(&view[*pos]);
            }
        }
    }
    if let Some(cycle) = find_cycle(&edges) {
        verdict
            .violations
            .push(format!("no single order satisfies every observation and insert: {cycle:?}"));
    }
    Ok(verdict)
}

fn find_cycle<'a>(edges: &BTreeMap<&'a Dot, BTreeSet<&'a Dot>>) -> Option<Vec<&'a Dot>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<&Dot, Mark> = BTreeMap::new();
    for &start in edges.keys() {
        if marks.contains_key(start) {
            continue;
        }
        let mut path: Vec<&Dot> = vec![start];
        let mut iters = vec![edges.get(start).into_iter().flatten()];
        marks.insert(start, Mark::Open);
        while let Some(it) = iters.last_mut() {
            match it.next() {
                Some(&next) => match marks.get(next) {
                    Some(Mark::Open) => {
                        let at = path.iter().position(|d| *d == next).unwrap();
                        return Some(path[at..].to_vec());
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Open);
                        path.push(next);
                        iters.push(edges.get(next).into_iter().flatten());
                    }
                },
                None => {
                    iters.pop();
                    let done = path.pop().unwrap();
                    marks.insert(done, Mark::Done);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Value;
    use crate::oracle::history::ScriptedHistory;

    /// Replays list ops at one replica over a plain vector to produce
    /// resolutions, as an implementation's origin would.
    struct Scripted {
        s: ScriptedHistory,
        views: BTreeMap<String, Vec<(Dot, Value)>>,
    }

    impl Scripted {
        fn new() -> Self {
            Self { s: ScriptedHistory::new(), views: BTreeMap::new() }
        }

        fn ins(&mut self, r: &str, pos: usize, elem: &str) -> Dot {
            let view = self.views.entry(r.into()).or_default();
            let ids = view.iter().map(|(d, _)| d.clone()).collect();
            let id = self.s.submit_resolved(
                r,
                Op::Ins { pos, elem: elem.into() },
                Some(Resolution::ListInsert { view: ids }),
            );
            self.views.get_mut(r).unwrap().insert(pos, (id.clone(), elem.into()));
            id
        }

        fn rmv(&mut self, r: &str, pos: usize) {
            let target = self.views[r][pos].0.clone();
            self.s
                .submit_resolved(r, Op::RmvAt(pos), Some(Resolution::ListRemove { target }));
            self.views.get_mut(r).unwrap().remove(pos);
        }

        fn obs(&self, r: &str, order: &[&Dot]) -> ListObservation {
            ListObservation {
                replica: r.into(),
                known: self.s.known(r),
                ids: order.iter().map(|d| (*d).clone()).collect(),
            }
        }
    }

    #[test]
    fn concurrent_inserts_keep_their_neighbours() {
        let mut t = Scripted::new();
        let base: Vec<Dot> = (0..6).map(|i| t.ins("A", i, &i.to_string())).collect();
        t.s.sync("A", "B");
        t.views.insert("B".into(), t.views["A"].clone());
        let x = t.ins("A", 2, "A");
        let y = t.ins("B", 4, "B");
        t.s.sync_bi("A", "B");

        let b = |i: usize| &base[i];
        // 0 1 A 2 3 B 4 5
        let good = [b(0), b(1), &x, b(2), b(3), &y, b(4), b(5)];
        let v = check_list(t.s.history(), &[t.obs("A", &good), t.obs("B", &good)]).unwrap();
        assert!(v.holds(), "{v:?}");

        // 0 1 A 2 B 3 4 5 puts B before 3, against its origin
        let bad = [b(0), b(1), &x, b(2), &y, b(3), b(4), b(5)];
        let v = check_list(t.s.history(), &[t.obs("A", &bad)]).unwrap();
        assert!(!v.holds());

        // replicas disagreeing on the order of concurrent inserts
        let mut t2 = Scripted::new();
        let p = t2.ins("A", 0, "p");
        let q = t2.ins("B", 0, "q");
        t2.s.sync_bi("A", "B");
        let v = check_list(t2.s.history(), &[t2.obs("A", &[&p, &q]), t2.obs("B", &[&q, &p])]).unwrap();
        assert!(!v.holds());
    }

    #[test]
    fn sequential_run_matches_a_vector() {
        let mut t = Scripted::new();
        let a = t.ins("A", 0, "a");
        let c = t.ins("A", 1, "c");
        let b = t.ins("A", 1, "b");
        t.rmv("A", 0);
        let d = t.ins("A", 2, "d");
        let v = check_list(t.s.history(), &[t.obs("A", &[&b, &c, &d])]).unwrap();
        assert!(v.holds(), "{v:?}");
        let v = check_list(t.s.history(), &[t.obs("A", &[&a, &b, &c, &d])]).unwrap();
        assert!(!v.holds());
        let v = check_list(t.s.history(), &[t.obs("A", &[&c, &b, &d])]).unwrap();
        assert!(!v.holds());
    }

    #[test]
    fn unresolved_insert_is_an_error() {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Ins { pos: 0, elem: "x".into() });
        assert!(matches!(check_list(s.history(), &[]), Err(OracleError::BadResolution(_))));
    }
}
