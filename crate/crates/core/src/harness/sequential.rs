//! Plain in-memory data types, the reference for runs whose history is
//! totally ordered.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{is_prefix, CrdtKind, LeafKey, LeafType, Op, Reading, RegisterSemantics, SyncModel, Value};
use crate::sim::{Network, SimConfig, SimError};
use crate::state::UpdateError;

use super::fuzz::replica_names;
use super::gen::{random_op, OpContext};

#[derive(Clone, Debug)]
enum Leaf {
    Counter(i64),
    Register(Option<Value>),
    Set(BTreeSet<Value>),
}

impl Leaf {
    fn apply(&mut self, op: &Op) {
        match (self, op) {
            (Leaf::Counter(v), Op::Inc(n)) => *v += *n as i64,
            (Leaf::Counter(v), Op::Dec(n)) => *v -= *n as i64,
            (Leaf::Register(v), Op::Wr(x)) => *v = Some(x.clone()),
            (Leaf::Set(s), Op::Add(x)) => {
                s.insert(x.clone());
            }
            (Leaf::Set(s), Op::Rmv(x)) => {
                s.remove(x);
            }
            _ => {}
        }
    }

    fn read(&self) -> Reading {
        match self {
            Leaf::Counter(v) => Reading::Int(*v),
            Leaf::Register(v) => v.clone().map_or(Reading::Null, Reading::Scalar),
            Leaf::Set(s) => Reading::Set(s.clone()),
        }
    }
}

/// The sequential data type behind each replicated type. Bounded-counter
/// rights are a replication concern, so only accepted ops should be fed.
#[derive(Clone, Debug)]
pub struct SeqAdt {
    kind: CrdtKind,
    int: i64,
    reg: Option<Value>,
    set: BTreeSet<Value>,
    list: Vec<Value>,
    map: BTreeMap<LeafKey, Leaf>,
}

impl SeqAdt {
    pub fn new(kind: CrdtKind) -> Self {
        SeqAdt { kind, int: 0, reg: None, set: BTreeSet::new(), list: Vec::new(), map: BTreeMap::new() }
    }

    pub fn apply(&mut self, op: &Op) -> Result<(), UpdateError> {
        match op {
            Op::Inc(n) => self.int += *n as i64,
            Op::Dec(n) => self.int -= *n as i64,
            Op::Transfer { .. } => {}
            Op::Wr(v) => self.reg = Some(v.clone()),
            Op::Add(v) => {
                self.set.insert(v.clone());
            }
            Op::Rmv(v) => {
                self.set.remove(v);
            }
            Op::Ins { pos, elem } => {
                if *pos > self.list.len() {
                    return Err(UpdateError::IndexOutOfRange { pos: *pos, len: self.list.len() });
                }
                self.list.insert(*pos, elem.clone());
            }
            Op::RmvAt(pos) => {
                if *pos >= self.list.len() {
                    return Err(UpdateError::IndexOutOfRange { pos: *pos, len: self.list.len() });
                }
                self.list.remove(*pos);
            }
            Op::Upd { key, op } => {
                let ty = LeafType::of(op).ok_or(UpdateError::InvalidOp { op: op.name(), kind: self.kind })?;
                self.map
                    .entry((key.clone(), ty))
                    .or_insert(match ty {
                        LeafType::Counter => Leaf::Counter(0),
                        LeafType::Register => Leaf::Register(None),
                        LeafType::Set => Leaf::Set(BTreeSet::new()),
                    })
                    .apply(op);
            }
            Op::RmvKey(key) => self.map.retain(|(p, _), _| !is_prefix(key, p)),
            Op::Put { .. } => return Err(UpdateError::InvalidOp { op: op.name(), kind: self.kind }),
        }
        Ok(())
    }

    pub fn read(&self) -> Reading {
        match self.kind {
            CrdtKind::Counter | CrdtKind::BoundedCounter => Reading::Int(self.int),
            CrdtKind::Register(RegisterSemantics::Lww) => self.reg.clone().map_or(Reading::Null, Reading::Scalar),
            CrdtKind::Register(RegisterSemantics::Mv) => Reading::Set(self.reg.iter().cloned().collect()),
            CrdtKind::MaxRegister => self.reg.as_ref().and_then(Value::as_int).map_or(Reading::Null, Reading::Int),
            CrdtKind::Set(_) => Reading::Set(self.set.clone()),
            CrdtKind::List => Reading::Seq(self.list.clone()),
            CrdtKind::Map(_) => Reading::from_leaves(self.map.iter().map(|(k, l)| (k.clone(), l.read())).collect()),
        }
    }
}

/// Runs `ops` random updates at random replicas of a `kind` network, with
/// a full exchange after every update so that each update causally
/// follows all earlier ones. After every update the origin's value must
/// equal the sequential type's; at the end every replica's must.
pub fn check_sequential(kind: CrdtKind, model: SyncModel, replicas: usize, ops: usize, seed: u64) -> Result<(), String> {
    let names = replica_names(replicas);
    let mut net = Network::new(SimConfig::new(kind, model, names.clone()));
    let mut adt = SeqAdt::new(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    for i in 0..ops {
        let r = names[rng.gen_range(0..names.len())].clone();
        let ctx = OpContext {
            list_len: net.list_ids(&r).ok().flatten().map_or(0, |v| v.len()),
            replicas: names.clone(),
            origin: Some(r.clone()),
        };
        let op = random_op(kind, &mut rng, &ctx);
        match net.submit(&r, op.clone()) {
            Ok(_) => {
                adt.apply(&op).map_err(|e| format!("op {i} {op:?}: replica accepted, sequential type refused: {e}"))?;
                accepted += 1;
            }
            Err(SimError::Update(UpdateError::InsufficientRights { .. })) => {}
            Err(e) => {
                if adt.clone().apply(&op).is_ok() {
                    return Err(format!("op {i} {op:?}: sequential type accepted, replica refused: {e}"));
                }
            }
        }
        let got = net.read(&r).map_err(|e| e.to_string())?;
        if got.as_ref() != Some(&adt.read()) {
            return Err(format!("after op {i} {op:?} at {r}: replica {got:?}, sequential {:?}", adt.read()));
        }
        for other in &names {
            if *other != r {
                net.sync(&r, other).map_err(|e| e.to_string())?;
                net.tick();
                net.sync(other, &r).map_err(|e| e.to_string())?;
                net.tick();
            }
        }
    }
    let events = net.history().events_by_ts();
    if events.len() != accepted {
        return Err(format!("history has {} events, {accepted} ops were accepted", events.len()));
    }
    for w in events.windows(2) {
        if !w[1].context.contains(&w[0].id) {
            return Err(format!("{} and {} are not ordered", w[0].id, w[1].id));
        }
    }
    for r in &names {
        let got = net.read(r).map_err(|e| e.to_string())?;
        if got.as_ref() != Some(&adt.read()) {
            return Err(format!("final value at {r}: {got:?}, sequential {:?}", adt.read()));
        }
    }
    Ok(())
}
