//! Random operations for fuzzing and property checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::causality::ReplicaId;
use crate::model::{CrdtKind, KeyPath, Op, Value};

const ELEMS: [&str; 4] = ["a", "b", "c", "d"];
const PATHS: [&[&str]; 4] = [&["x"], &["y"], &["p", "q"], &["p", "r"]];
const RMV_PATHS: [&[&str]; 4] = [&["x"], &["y"], &["p"], &["p", "q"]];

/// Live facts about the submitting replica that keep ops mostly valid.
#[derive(Clone, Debug, Default)]
pub struct OpContext {
    pub list_len: usize,
    pub replicas: Vec<ReplicaId>,
    pub origin: Option<ReplicaId>,
}

fn path(p: &[&str]) -> KeyPath {
    p.iter().map(|s| s.to_string()).collect()
}

fn elem(rng: &mut ChaCha8Rng) -> Value {
    if rng.gen_bool(0.75) {
        Value::Str(ELEMS[rng.gen_range(0..ELEMS.len())].into())
    } else {
        Value::Int(rng.gen_range(0..4))
    }
}

/// Probability of a key remove among map ops. Kept low so that few
/// removes compete for one key, which bounds the oracle's cut search.
pub const MAP_REMOVE_P: f64 = 0.05;

pub fn random_op(kind: CrdtKind, rng: &mut ChaCha8Rng, ctx: &OpContext) -> Op {
    match kind {
        CrdtKind::Counter => {
            if rng.gen_bool(0.6) {
                Op::Inc(rng.gen_range(1..5))
            } else {
                Op::Dec(rng.gen_range(1..5))
            }
        }
        CrdtKind::BoundedCounter => {
            let peers: Vec<&ReplicaId> = ctx.replicas.iter().filter(|r| Some(*r) != ctx.origin.as_ref()).collect();
            match rng.gen_range(0..10) {
                0..=3 => Op::Inc(rng.gen_range(1..4)),
                4..=7 => Op::Dec(rng.gen_range(1..4)),
                _ if !peers.is_empty() => Op::Transfer {
                    to: peers[rng.gen_range(0..peers.len())].clone(),
                    n: rng.gen_range(1..3),
                },
                _ => Op::Inc(1),
            }
        }
        CrdtKind::Register(_) | CrdtKind::MaxRegister => Op::Wr(Value::Int(rng.gen_range(0..20))),
        CrdtKind::Set(_) => {
            if rng.gen_bool(0.55) {
                Op::Add(elem(rng))
            } else {
                Op::Rmv(elem(rng))
            }
        }
        CrdtKind::List => {
            if ctx.list_len == 0 || rng.gen_bool(0.65) {
                Op::Ins { pos: rng.gen_range(0..=ctx.list_len), elem: elem(rng) }
            } else {
                Op::RmvAt(rng.gen_range(0..ctx.list_len))
            }
        }
        CrdtKind::Map(_) => {
            if rng.gen_bool(MAP_REMOVE_P) {
                return Op::RmvKey(path(RMV_PATHS[rng.gen_range(0..RMV_PATHS.len())]));
            }
            let key = path(PATHS[rng.gen_range(0..PATHS.len())]);
            let inner = match rng.gen_range(0..6) {
                0 => Op::Inc(rng.gen_range(1..3)),
                1 => Op::Dec(1),
                2 => Op::Wr(elem(rng)),
                3 | 4 => Op::Add(elem(rng)),
                _ => Op::Rmv(elem(rng)),
            };
            Op::Upd { key, op: Box::new(inner) }
        }
    }
}
