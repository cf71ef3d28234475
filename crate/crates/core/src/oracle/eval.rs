//! Reference evaluators: each computes a query result directly from the
//! update history, without any replica state.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{CounterWriteSemantics, Op, Reading, RegisterSemantics, SetSemantics, Value};

use super::history::{UpdateEvent, UpdateHistory};
use super::OracleError;

fn foreign(e: &UpdateEvent, expected: &'static str) -> OracleError {
    OracleError::ForeignOp {
        id: e.id.clone(),
        op: e.op.name(),
        expected,
    }
}

/// Sum of increments minus decrements over `(event, op)` pairs.
pub(crate) fn counter_sum<'a>(
    ops: impl IntoIterator<Item = (&'a UpdateEvent, &'a Op)>,
) -> Result<i64, OracleError> {
    let mut v: i64 = 0;
    for (e, op) in ops {
        v = match op {
            Op::Inc(n) => v.wrapping_add(*n as i64),
            Op::Dec(n) => v.wrapping_sub(*n as i64),
            _ => return Err(foreign(e, "inc or dec")),
        };
    }
    Ok(v)
}

/// The write with the greatest timestamp.
pub(crate) fn lww_value<'a>(
    ops: impl IntoIterator<Item = (&'a UpdateEvent, &'a Op)>,
) -> Result<Option<Value>, OracleError> {
    let mut best: Option<(&UpdateEvent, &Value)> = None;
    for (e, op) in ops {
        let Op::Wr(v) = op else {
            return Err(foreign(e, "wr"));
        };
        if best.is_none_or(|(b, _)| b.ts < e.ts) {
            best = Some((e, v));
        }
    }
    Ok(best.map(|(_, v)| v.clone()))
}

/// Set membership under the given conflict rule.
pub(crate) fn set_elements<'a>(
    ops: impl IntoIterator<Item = (&'a UpdateEvent, &'a Op)>,
    semantics: SetSemantics,
) -> Result<BTreeSet<Value>, OracleError> {
    let mut adds: BTreeMap<&Value, Vec<&UpdateEvent>> = BTreeMap::new();
    let mut rmvs: BTreeMap<&Value, Vec<&UpdateEvent>> = BTreeMap::new();
    for (e, op) in ops {
        match op {
            Op::Add(v) => adds.entry(v).or_default().push(e),
            Op::Rmv(v) => rmvs.entry(v).or_default().push(e),
            _ => return Err(foreign(e, "add or rmv")),
        }
    }
    let none = Vec::new();
    let mut out = BTreeSet::new();
    for (v, adds) in adds {
        let rmvs = rmvs.get(v).unwrap_or(&none);
        let present = adds.iter().any(|a| match semantics {
            SetSemantics::AddWins => !rmvs.iter().any(|r| a.happened_before(r)),
            SetSemantics::RemoveWins => rmvs.iter().all(|r| r.happened_before(a)),
            SetSemantics::Lww => rmvs.iter().all(|r| r.ts < a.ts),
        });
        if present {
            out.insert(v.clone());
        }
    }
    Ok(out)
}

fn all_ops(h: &UpdateHistory) -> impl Iterator<Item = (&UpdateEvent, &Op)> {
    h.events().map(|e| (e, &e.op))
}

pub fn eval_counter(h: &UpdateHistory) -> Result<Reading, OracleError> {
    counter_sum(all_ops(h)).map(Reading::Int)
}

/// Value of a bounded counter. Transfers move rights, not value.
pub fn eval_bounded_counter(h: &UpdateHistory) -> Result<Reading, OracleError> {
    counter_sum(all_ops(h).filter(|(_, op)| !matches!(op, Op::Transfer { .. }))).map(Reading::Int)
}

/// Multi-value register returns the set of concurrent latest writes; LWW
/// returns the single write with the greatest timestamp. Unwritten reads null.
pub fn eval_register(h: &UpdateHistory, semantics: RegisterSemantics) -> Result<Reading, OracleError> {
    match semantics {
        RegisterSemantics::Lww => Ok(lww_value(all_ops(h))?.map_or(Reading::Null, Reading::Scalar)),
        RegisterSemantics::Mv => {
            let mut out = BTreeSet::new();
            for e in h.frontier() {
                let Op::Wr(v) = &e.op else {
                    return Err(foreign(e, "wr"));
                };
                out.insert(v.clone());
            }
            Ok(Reading::Set(out))
        }
    }
}

/// Max register: the largest of the concurrent latest writes.
pub fn eval_max_register(h: &UpdateHistory) -> Result<Reading, OracleError> {
    let mut best: Option<i64> = None;
    for e in h.frontier() {
        let v = match &e.op {
            Op::Wr(v) => v.as_int().ok_or(OracleError::TypeMismatch(e.id.clone()))?,
            _ => return Err(foreign(e, "wr")),
        };
        best = Some(best.map_or(v, |b| b.max(v)));
    }
    Ok(best.map_or(Reading::Null, Reading::Int))
}

/// Counter that also accepts `wr(n)`. The initial state is an implicit
/// `wr(0)` preceding every event.
pub fn eval_counter_with_write(
    h: &UpdateHistory,
    semantics: CounterWriteSemantics,
) -> Result<Reading, OracleError> {
    let writes: Vec<&UpdateEvent> = h.events().filter(|e| matches!(e.op, Op::Wr(_))).collect();
    let latest: Vec<&UpdateEvent> = writes
        .iter()
        .copied()
        .filter(|w| !writes.iter().any(|o| w.happened_before(o)))
        .collect();
    // concurrent writes are arbitrated by timestamp
    let base = match latest.iter().max_by(|a, b| a.ts.cmp(&b.ts)) {
        Some(w) => {
            let Op::Wr(v) = &w.op else { unreachable!() };
            Some(v.as_int().ok_or(OracleError::TypeMismatch(w.id.clone()))?)
        }
        None => None,
    };
    let counted = h.events().filter(|e| match e.op {
        Op::Inc(_) | Op::Dec(_) => match semantics {
            CounterWriteSemantics::WriteWins => latest.iter().all(|w| w.happened_before(e)),
            CounterWriteSemantics::IncDecMerge => !latest.iter().any(|w| e.happened_before(w)),
        },
        _ => false,
    });
    Ok(Reading::Int(base.unwrap_or(0) + counter_sum(counted.map(|e| (e, &e.op)))?))
}

pub fn eval_set(h: &UpdateHistory, semantics: SetSemantics) -> Result<Reading, OracleError> {
    set_elements(all_ops(h), semantics).map(Reading::Set)
}

/// Map of plain values: `(k, v)` is present when some `put(k, v)` follows
/// every `rmv(k)` and is not overwritten by a later put on `k`.
pub fn eval_map_literal(h: &UpdateHistory) -> Result<Reading, OracleError> {
    let mut puts: BTreeMap<&str, Vec<(&UpdateEvent, &Value)>> = BTreeMap::new();
    let mut rmvs: BTreeMap<&str, Vec<&UpdateEvent>> = BTreeMap::new();
    for e in h.events() {
        match &e.op {
            Op::Put { key, value } => puts.entry(key).or_default().push((e, value)),
            Op::RmvKey(path) if path.len() == 1 => rmvs.entry(&path[0]).or_default().push(e),
            _ => return Err(foreign(e, "put or single-key rmv_key")),
        }
    }
    let mut out = BTreeMap::new();
    for (k, ps) in puts {
        let rs = rmvs.get(k).map(Vec::as_slice).unwrap_or(&[]);
        let values: BTreeSet<Value> = ps
            .iter()
            .filter(|(p, _)| rs.iter().all(|r| r.happened_before(p)))
            .filter(|(p, _)| !ps.iter().any(|(q, _)| p.happened_before(q)))
            .map(|(_, v)| (*v).clone())
            .collect();
        if !values.is_empty() {
            out.insert(k.to_owned(), Reading::Set(values));
        }
    }
    Ok(Reading::Map(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::history::ScriptedHistory;

    fn set(items: &[&str]) -> Reading {
        Reading::Set(items.iter().map(|&s| Value::from(s)).collect())
    }

    /// Both replicas start from {a}; A removes and re-adds a, B
    /// concurrently removes a.
    fn add_wins_run() -> ScriptedHistory {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Add("a".into()));
        s.sync_bi("A", "B");
        s.submit("A", Op::Rmv("a".into()));
        s.submit("A", Op::Add("a".into()));
        s.submit("B", Op::Rmv("a".into()));
        s.sync_bi("A", "B");
        s
    }

    #[test]
    fn set_semantics_on_concurrent_add_and_remove() {
        let h = add_wins_run().into_history();
        assert_eq!(eval_set(&h, SetSemantics::AddWins).unwrap(), set(&["a"]));
        assert_eq!(eval_set(&h, SetSemantics::RemoveWins).unwrap(), set(&[]));
        // A's re-add carries clock 3, B's remove clock 2
        assert_eq!(eval_set(&h, SetSemantics::Lww).unwrap(), set(&["a"]));
    }

    #[test]
    fn cross_removes_keep_both_elements() {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Add("a".into()));
        s.submit("A", Op::Rmv("b".into()));
        s.submit("B", Op::Add("b".into()));
        s.submit("B", Op::Rmv("a".into()));
        s.sync_bi("A", "B");
        let h = s.into_history();
        assert_eq!(eval_set(&h, SetSemantics::AddWins).unwrap(), set(&["a", "b"]));
        assert_eq!(eval_set(&h, SetSemantics::RemoveWins).unwrap(), set(&[]));
    }

    #[test]
    fn sequential_set_matches_plain_set() {
        let mut s = ScriptedHistory::new();
        for op in [
            Op::Add("x".into()),
            Op::Add("y".into()),
            Op::Rmv("x".into()),
            Op::Add("z".into()),
            Op::Rmv("q".into()),
        ] {
            s.submit("A", op);
        }
        let h = s.into_history();
        for sem in [SetSemantics::AddWins, SetSemantics::RemoveWins, SetSemantics::Lww] {
            assert_eq!(eval_set(&h, sem).unwrap(), set(&["y", "z"]));
        }
    }

    #[test]
    fn counter_sums() {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Inc(3));
        s.submit("B", Op::Dec(1));
        s.submit("C", Op::Inc(2));
        assert_eq!(eval_counter(s.history()).unwrap(), Reading::Int(4));
        s.submit("A", Op::Wr(1.into()));
        assert!(matches!(
            eval_counter(s.history()),
            Err(OracleError::ForeignOp { .. })
        ));
    }

    #[test]
    fn bounded_counter_ignores_transfers() {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Inc(10));
        s.submit("A", Op::Transfer { to: "B".into(), n: 4 });
        s.sync("A", "B");
        s.submit("B", Op::Dec(3));
        assert_eq!(eval_bounded_counter(s.history()).unwrap(), Reading::Int(7));
    }

    #[test]
    fn mv_and_lww_registers() {
        let mut s = ScriptedHistory::new();
        assert_eq!(eval_register(s.history(), RegisterSemantics::Lww).unwrap(), Reading::Null);
        s.submit("A", Op::Wr(1.into()));
        s.sync("A", "B");
        s.submit("A", Op::Wr(2.into()));
        s.submit("B", Op::Wr(3.into()));
        let h = s.history();
        assert_eq!(
            eval_register(h, RegisterSemantics::Mv).unwrap(),
            Reading::Set([2.into(), 3.into()].into_iter().collect())
        );
        // both writes carry clock 2; B wins the replica tiebreak
        assert_eq!(
            eval_register(h, RegisterSemantics::Lww).unwrap(),
            Reading::Scalar(3.into())
        );
    }

    /// A writes 4 while B writes 5; A reads 5 after syncing from B, then
    /// B writes 2 without having seen A's write. The converged value
    /// drops back to 4.
    #[test]
    fn max_register_is_unstable() {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Wr(4.into()));
        s.submit("B", Op::Wr(5.into()));
        s.sync("B", "A");
        let at_a = s.history().restrict(&s.known("A"));
        assert_eq!(eval_max_register(&at_a).unwrap(), Reading::Int(5));
        s.submit("B", Op::Wr(2.into()));
        s.sync_bi("A", "B");
        assert_eq!(eval_max_register(s.history()).unwrap(), Reading::Int(4));
    }

    #[test]
    fn counter_with_write_semantics() {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Wr(4.into()));
        s.submit("B", Op::Inc(1));
        s.sync_bi("A", "B");
        let h = s.history();
        assert_eq!(
            eval_counter_with_write(h, CounterWriteSemantics::WriteWins).unwrap(),
            Reading::Int(4)
        );
        assert_eq!(
            eval_counter_with_write(h, CounterWriteSemantics::IncDecMerge).unwrap(),
            Reading::Int(5)
        );

        // with no write both reduce to a plain counter
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Inc(2));
        s.submit("B", Op::Dec(1));
        for sem in [CounterWriteSemantics::WriteWins, CounterWriteSemantics::IncDecMerge] {
            assert_eq!(eval_counter_with_write(s.history(), sem).unwrap(), Reading::Int(1));
        }
    }

    #[test]
    fn literal_map_keeps_concurrent_puts() {
        let mut s = ScriptedHistory::new();
        s.submit("A", Op::Put { key: "k".into(), value: 1.into() });
        s.sync("A", "B");
        s.submit("A", Op::Put { key: "k".into(), value: 2.into() });
        s.submit("B", Op::Put { key: "k".into(), value: 3.into() });
        s.submit("B", Op::Put { key: "j".into(), value: 7.into() });
        s.submit("B", Op::RmvKey(vec!["j".into()]));
        s.sync_bi("A", "B");
        let r = eval_map_literal(s.history()).unwrap();
        assert_eq!(r.to_json(), serde_json::json!({"k": [2, 3]}));
    }

    #[test]
    fn evaluation_ignores_event_order() {
        let h = add_wins_run().into_history();
        let mut events: Vec<UpdateEvent> = h.events().cloned().collect();
        events.reverse();
        let again = UpdateHistory::from_events(events).unwrap();
        assert_eq!(
            eval_set(&again, SetSemantics::AddWins).unwrap(),
            eval_set(&h, SetSemantics::AddWins).unwrap()
        );
    }
}
