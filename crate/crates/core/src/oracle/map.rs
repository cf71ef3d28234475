//! Map of CRDTs: which embedded updates survive key removals, and the
//! vertex-cut rule behind update-wins.

use std::collections::{BTreeMap, BTreeSet};

use crate::causality::Dot;
use crate::model::{is_prefix, KeyPath, LeafKey, LeafType, MapSemantics, Op, Reading, SetSemantics};

use super::eval::{counter_sum, lww_value, set_elements};
use super::history::{UpdateEvent, UpdateHistory};
use super::OracleError;

/// Largest number of removes the exhaustive cut search will consider.
pub const MAX_CUT_CANDIDATES: usize = 20;

struct Split<'a> {
    upds: Vec<(&'a UpdateEvent, LeafKey, &'a Op)>,
    rmvs: Vec<(&'a UpdateEvent, &'a KeyPath)>,
}

fn split(h: &UpdateHistory) -> Result<Split<'_>, OracleError> {
    let mut upds = Vec::new();
    let mut rmvs = Vec::new();
    for e in h.events() {
        match &e.op {
            Op::Upd { key, op } if !key.is_empty() => {
                let ty = LeafType::of(op).ok_or_else(|| OracleError::ForeignOp {
                    id: e.id.clone(),
                    op: op.name(),
                    expected: "inc, dec, wr, add or rmv inside upd",
                })?;
                upds.push((e, (key.clone(), ty), op.as_ref()));
            }
            Op::RmvKey(key) if !key.is_empty() => rmvs.push((e, key)),
            _ => {
                return Err(OracleError::ForeignOp {
                    id: e.id.clone(),
                    op: e.op.name(),
                    expected: "upd or rmv_key",
                })
            }
        }
    }
    Ok(Split { upds, rmvs })
}

/// The latest minimal vertex cut for `key`: a set of removes of `key` or
/// of one of its prefixes that meets every maximal chain of the poset
/// formed by those removes and the updates under `key`. `None` when no
/// such cut exists.
///
/// Exhaustive search over subsets of removes; ties between incomparable
/// minimal cuts go to the cut whose timestamps are largest.
pub fn latest_vertex_cut(h: &UpdateHistory, key: &[String]) -> Result<Option<BTreeSet<Dot>>, OracleError> {
    let parts = split(h)?;
    let rmvs: Vec<&UpdateEvent> = parts
        .rmvs
        .iter()
        .filter(|(_, k)| is_prefix(k, key))
        .map(|(e, _)| *e)
        .collect();
    let upds: Vec<&UpdateEvent> = parts
        .upds
        .iter()
        .filter(|(_, (p, _), _)| is_prefix(key, p))
        .map(|(e, _, _)| *e)
        .collect();
    cut_over(&rmvs, &upds)
}

pub(crate) fn cut_over(
    rmvs: &[&UpdateEvent],
    upds: &[&UpdateEvent],
) -> Result<Option<BTreeSet<Dot>>, OracleError> {
    if rmvs.is_empty() {
        return Ok(None);
    }
    if rmvs.len() > MAX_CUT_CANDIDATES {
        return Err(OracleError::CutSearchTooLarge(rmvs.len()));
    }
    let poset: Vec<&UpdateEvent> = rmvs.iter().chain(upds).copied().collect();
    let n = poset.len();
    let mut succ = vec![Vec::new(); n];
    let mut has_pred = vec![false; n];
    for a in 0..n {
        for b in 0..n {
            if poset[a].happened_before(poset[b])
                && !poset
                    .iter()
                    .any(|c| poset[a].happened_before(c) && c.happened_before(poset[b]))
            {
                succ[a].push(b);
                has_pred[b] = true;
            }
        }
    }
    let is_cut = |mask: u32| {
        let in_cut = |i: usize| i < rmvs.len() && mask & (1 << i) != 0;
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&i| !has_pred[i] && !in_cut(i)).collect();
        while let Some(i) = stack.pop() {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            if succ[i].is_empty() {
                return false;
            }
            stack.extend(succ[i].iter().copied().filter(|&j| !in_cut(j)));
        }
        true
    };

    let mut minimal: Vec<u32> = Vec::new();
    let full: u32 = if rmvs.len() == 32 { u32::MAX } else { (1 << rmvs.len()) - 1 };
    let mut masks: Vec<u32> = (1..=full).collect();
    masks.sort_by_key(|m| m.count_ones());
    for m in masks {
        if minimal.iter().any(|&c| c & m == c) {
            continue;
        }
        if is_cut(m) {
            minimal.push(m);
        }
    }
    if minimal.is_empty() {
        return Ok(None);
    }

    let members = |m: u32| (0..rmvs.len()).filter(move |&i| m & (1 << i) != 0);
    let later = |m: u32, o: u32| {
        members(m).any(|i| members(o).any(|j| rmvs[i].happened_before(rmvs[j])))
    };
    let latest: Vec<u32> = minimal
        .iter()
        .copied()
        .filter(|&m| !minimal.iter().any(|&o| o != m && later(m, o)))
        .collect();
    let pool = if latest.is_empty() { &minimal } else { &latest };
    let ts_key = |m: u32| {
        let mut ts: Vec<_> = members(m).map(|i| rmvs[i].ts.clone()).collect();
        ts.sort_by(|a, b| b.cmp(a));
        ts
    };
    let best = pool.iter().copied().max_by_key(|&m| ts_key(m)).unwrap();
    Ok(Some(members(best).map(|i| rmvs[i].id.clone()).collect()))
}

/// Current value of a map of CRDTs. Counters, LWW registers and add-wins
/// sets are embedded; the leaf type is taken from the inner operation.
///
/// A leaf is present when at least one update on it survives removal:
/// - recursive-reset: an update is cancelled by any later remove of its key
///   or a prefix (a remove resets only what it observed);
/// - remove-wins: an update survives only if every remove of its key or a
///   prefix happened before it;
/// - update-wins: for every prefix with removes, the update must follow
///   some remove in that prefix's latest vertex cut; a prefix with no cut
///   does not constrain.
pub fn eval_map_crdt(h: &UpdateHistory, semantics: MapSemantics) -> Result<Reading, OracleError> {
    let parts = split(h)?;
    let mut leaves: BTreeMap<LeafKey, Vec<(&UpdateEvent, &Op)>> = BTreeMap::new();
    for (e, leaf, op) in &parts.upds {
        leaves.entry(leaf.clone()).or_default().push((e, op));
    }

    let mut cuts: BTreeMap<KeyPath, Option<BTreeSet<Dot>>> = BTreeMap::new();
    if semantics == MapSemantics::UpdateWins {
        let exact: BTreeSet<&KeyPath> = parts.rmvs.iter().map(|(_, k)| *k).collect();
        for key in exact {
            let rmvs: Vec<&UpdateEvent> = parts
                .rmvs
                .iter()
                .filter(|(_, k)| is_prefix(k, key))
                .map(|(e, _)| *e)
                .collect();
            let upds: Vec<&UpdateEvent> = parts
                .upds
                .iter()
                .filter(|(_, (p, _), _)| is_prefix(key, p))
                .map(|(e, _, _)| *e)
                .collect();
            cuts.insert(key.clone(), cut_over(&rmvs, &upds)?);
        }
    }

    let mut out = BTreeMap::new();
    for ((path, ty), ops) in leaves {
        let covering: Vec<(&UpdateEvent, &KeyPath)> = parts
            .rmvs
            .iter()
            .filter(|(_, k)| is_prefix(k, &path))
            .map(|(e, k)| (*e, *k))
            .collect();
        let effective: Vec<(&UpdateEvent, &Op)> = ops
            .into_iter()
            .filter(|(u, _)| match semantics {
                MapSemantics::RecursiveReset => !covering.iter().any(|(r, _)| u.happened_before(r)),
                MapSemantics::RemoveWins => covering.iter().all(|(r, _)| r.happened_before(u)),
                MapSemantics::UpdateWins => cuts
                    .iter()
                    .filter(|(k, _)| is_prefix(k, &path))
                    .all(|(_, cut)| match cut {
                        None => true,
                        Some(c) => c.iter().any(|d| u.context.contains(d)),
                    }),
            })
            .collect();
        if effective.is_empty() {
            continue;
        }
        let reading = match ty {
            LeafType::Counter => Reading::Int(counter_sum(effective)?),
            LeafType::Register => lww_value(effective)?.map_or(Reading::Null, Reading::Scalar),
            LeafType::Set => Reading::Set(set_elements(effective, SetSemantics::AddWins)?),
        };
        out.insert((path, ty), reading);
    }
    Ok(Reading::from_leaves(out))
}
