//! A deterministic discrete-event network of replicas.
//!
//! Time is a tick counter. Messages carry an integer delay drawn from a
//! seeded ChaCha stream, so a run is a pure function of its configuration
//! and the sequence of driver calls. Op-based replicas receive effectors
//! through a causal, exactly-once delivery layer; state and delta replicas
//! reconcile through pairwise anti-entropy sessions.
//!
//! The global [`UpdateHistory`] is recorded here, from the driver's point
//! of view, and never by the types under test.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::{next_dot, Dot, LamportClock, ReplicaId, VersionVector};
use crate::model::{CrdtKind, Op, Reading, SyncModel};
use crate::op::{Effector, OpState};
use crate::oracle::UpdateHistory;
use crate::state::{AnyDelta, AnyState, EventMeta, Metadata, UpdateError};

/// Upper bound on the extra delay a reordered message receives.
pub const MAX_EXTRA_DELAY: u64 = 4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPolicy {
    #[serde(default)]
    pub dup: f64,
    /// Applies to effector messages only; anti-entropy sessions are never
    /// dropped.
    #[serde(default)]
    pub drop: f64,
    #[serde(default)]
    pub reorder: f64,
}

impl FaultPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("dup", self.dup), ("drop", self.drop), ("reorder", self.reorder)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} probability {p} is outside [0, 1]"));
            }
        }
        if self.drop >= 1.0 {
            return Err("drop probability 1 would never deliver".into());
        }
        Ok(())
    }
}

/// Two replica groups that cannot talk during ticks `from..until`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub a: BTreeSet<ReplicaId>,
    pub b: BTreeSet<ReplicaId>,
    pub from: u64,
    pub until: u64,
}

impl Partition {
    fn separates(&self, x: &ReplicaId, y: &ReplicaId, tick: u64) -> bool {
        (self.from..self.until).contains(&tick)
            && ((self.a.contains(x) && self.b.contains(y)) || (self.a.contains(y) && self.b.contains(x)))
    }
}

/// Pairs that run anti-entropy every `period` ticks (0 disables the
/// periodic rounds). The pairs also form the final quiescence round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub pairs: Vec<(ReplicaId, ReplicaId)>,
    #[serde(default)]
    pub period: u64,
}

impl Schedule {
    pub fn all_pairs(replicas: &[ReplicaId]) -> Self {
        let mut pairs = Vec::new();
        for (i, a) in replicas.iter().enumerate() {
            for b in &replicas[i + 1..] {
                pairs.push((a.clone(), b.clone()));
            }
        }
        Schedule { pairs, period: 0 }
    }

    /// Whether the pairs connect every replica.
    pub fn connects(&self, replicas: &[ReplicaId]) -> bool {
        let Some(first) = replicas.first() else { return true };
        let mut seen = BTreeSet::from([first]);
        let mut stack = vec![first];
        while let Some(r) = stack.pop() {
            for (a, b) in &self.pairs {
                let next = if a == r { b } else if b == r { a } else { continue };
                if seen.insert(next) {
                    stack.push(next);
                }
            }
        }
        replicas.iter().all(|r| seen.contains(r))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub kind: CrdtKind,
    pub model: SyncModel,
    pub replicas: Vec<ReplicaId>,
    pub seed: u64,
    pub faults: FaultPolicy,
    pub schedule: Option<Schedule>,
    pub max_ticks: u64,
}

impl SimConfig {
    pub fn new(kind: CrdtKind, model: SyncModel, replicas: Vec<ReplicaId>) -> Self {
        SimConfig {
            kind,
            model,
            replicas,
            seed: 0,
            faults: FaultPolicy::none(),
            schedule: None,
            max_ticks: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown replica {0}")]
    UnknownReplica(ReplicaId),
    #[error("replica {0} is crashed")]
    Crashed(ReplicaId),
    #[error("replica {0} is not crashed")]
    NotCrashed(ReplicaId),
    #[error("a replica cannot synchronize with itself")]
    SelfSync,
    #[error("no live, reachable peer to recover {0} from")]
    NoLivePeer(ReplicaId),
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error("no quiescence within {0} ticks")]
    NotQuiescent(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncOutcome {
    Sent(usize),
    /// Nothing to send.
    Idle,
    Partitioned,
    Crashed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    Applied,
    Buffered,
    Duplicate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoverySource {
    Peer(ReplicaId),
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Effector(Effector),
    State {
        state: Arc<AnyState>,
        known: VersionVector,
        clock: u64,
    },
    Delta {
        delta: AnyDelta,
        known: VersionVector,
        clock: u64,
        epoch: u64,
        upto: u64,
    },
    Ack {
        epoch: u64,
        upto: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub src: ReplicaId,
    pub dst: ReplicaId,
    pub due: u64,
    pub payload: Payload,
}

/// Traffic counters for one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStats {
    pub messages_sent: u64,
    /// Serialized size of every message, protocol fields included.
    pub bytes_sent: u64,
    /// Serialized size of the replicated data alone: states, deltas and
    /// effectors.
    pub payload_bytes: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub delivered: u64,
    pub lost_at_crashed: u64,
    pub duplicates_discarded: u64,
    pub buffered: u64,
}

#[derive(Clone, Debug)]
enum Crdt {
    State(Arc<AnyState>),
    Op(OpState),
}

impl Crdt {
    fn new(kind: CrdtKind, model: SyncModel) -> Crdt {
        match model {
            SyncModel::Op => Crdt::Op(OpState::new(kind)),
            _ => Crdt::State(Arc::new(AnyState::new(kind))),
        }
    }

    fn read(&self) -> Reading {
        match self {
            Crdt::State(s) => s.read(),
            Crdt::Op(s) => s.read(),
        }
    }

    fn state(&self) -> &AnyState {
        match self {
            Crdt::State(s) => s,
            Crdt::Op(_) => unreachable!("state payloads are only built in state and delta modes"),
        }
    }

    /// Copies the state first if an in-flight message still shares it.
    fn state_mut(&mut self) -> &mut AnyState {
        match self {
            Crdt::State(s) => Arc::make_mut(s),
            Crdt::Op(_) => unreachable!("state payloads are only built in state and delta modes"),
        }
    }

    fn shared_state(&self) -> Arc<AnyState> {
        match self {
            Crdt::State(s) => Arc::clone(s),
            Crdt::Op(_) => unreachable!("state payloads are only built in state and delta modes"),
        }
    }

    fn op_mut(&mut self) -> &mut OpState {
        match self {
            Crdt::Op(s) => s,
            Crdt::State(_) => unreachable!("effectors are only delivered in op mode"),
        }
    }
}

/// What survives a crash: the state (state and delta modes) or every
/// applied effector (op mode). State replicas write through on every
/// change, so the snapshot is taken when the crash happens.
#[derive(Clone, Debug)]
struct Durable {
    state: Option<Arc<AnyState>>,
    known: VersionVector,
    clock: LamportClock,
    wal: Vec<Effector>,
}

#[derive(Clone, Debug)]
struct Replica {
    crdt: Crdt,
    known: VersionVector,
    clock: LamportClock,
    crashed: bool,
    inbox: Vec<Effector>,
    /// Op mode: applied effectors in application order.
    log: Vec<Effector>,
    dbuf: Vec<AnyDelta>,
    dbase: u64,
    epoch: u64,
    acks: BTreeMap<ReplicaId, u64>,
    durable: Durable,
}

impl Replica {
    fn new(kind: CrdtKind, model: SyncModel) -> Self {
        Replica {
            crdt: Crdt::new(kind, model),
            known: VersionVector::new(),
            clock: LamportClock::default(),
            crashed: false,
            inbox: Vec::new(),
            log: Vec::new(),
            dbuf: Vec::new(),
            dbase: 0,
            epoch: 0,
            acks: BTreeMap::new(),
            durable: Durable {
                state: None,
                known: VersionVector::new(),
                clock: LamportClock::default(),
                wal: Vec::new(),
            },
        }
    }

    fn seq(&self) -> u64 {
        self.dbase + self.dbuf.len() as u64
    }

    fn persist(&mut self) {
        if let Crdt::State(s) = &self.crdt {
            self.durable.state = Some(s.clone());
        }
        self.durable.known = self.known.clone();
        self.durable.clock = self.clock.clone();
    }
}

struct ByteCount(u64);

impl std::io::Write for ByteCount {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Length of the JSON encoding of `v`.
fn encoded_len<T: Serialize>(v: &T) -> u64 {
    let mut n = ByteCount(0);
    serde_json::to_writer(&mut n, v).map_or(0, |_| n.0)
}

pub struct Network {
    cfg: SimConfig,
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    replicas: BTreeMap<ReplicaId, Replica>,
    in_flight: BTreeMap<(u64, u64), Message>,
    partitions: Vec<Partition>,
    history: UpdateHistory,
    stats: NetStats,
    violations: Vec<String>,
}

impl Network {
    pub fn new(cfg: SimConfig) -> Self {
        let replicas = cfg
            .replicas
            .iter()
            .map(|r| (r.clone(), Replica::new(cfg.kind, cfg.model)))
            .collect();
        Network {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            now: 0,
            seq: 0,
            replicas,
            in_flight: BTreeMap::new(),
            partitions: Vec::new(),
            history: UpdateHistory::new(),
            stats: NetStats::default(),
            violations: Vec::new(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn history(&self) -> &UpdateHistory {
        &self.history
    }

    pub fn stats(&self) -> &NetStats {
        &self.stats
    }

    /// Delivery-contract and type-invariant violations observed so far.
    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn replica_ids(&self) -> impl Iterator<Item = &ReplicaId> {
        self.replicas.keys()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    fn get(&self, r: &ReplicaId) -> Result<&Replica, SimError> {
        self.replicas.get(r).ok_or_else(|| SimError::UnknownReplica(r.clone()))
    }

    fn get_mut(&mut self, r: &ReplicaId) -> Result<&mut Replica, SimError> {
        self.replicas.get_mut(r).ok_or_else(|| SimError::UnknownReplica(r.clone()))
    }

    fn live(&self, r: &ReplicaId) -> Result<&Replica, SimError> {
        let rep = self.get(r)?;
        if rep.crashed {
            return Err(SimError::Crashed(r.clone()));
        }
        Ok(rep)
    }

    pub fn is_crashed(&self, r: &ReplicaId) -> Result<bool, SimError> {
        Ok(self.get(r)?.crashed)
    }

    /// Current value at `r`, or `None` while it is crashed.
    pub fn read(&self, r: &ReplicaId) -> Result<Option<Reading>, SimError> {
        let rep = self.get(r)?;
        Ok((!rep.crashed).then(|| rep.crdt.read()))
    }

    /// The replica state in state and delta modes.
    pub fn state(&self, r: &ReplicaId) -> Result<Option<&AnyState>, SimError> {
        Ok(match &self.get(r)?.crdt {
            Crdt::State(s) => Some(s),
            Crdt::Op(_) => None,
        })
    }

    /// Events whose effects `r` has incorporated.
    pub fn known(&self, r: &ReplicaId) -> Result<&VersionVector, SimError> {
        Ok(&self.get(r)?.known)
    }

    pub fn list_ids(&self, r: &ReplicaId) -> Result<Option<Vec<Dot>>, SimError> {
        Ok(match &self.get(r)?.crdt {
            Crdt::State(s) => s.list_ids(),
            Crdt::Op(s) => s.list_ids(),
        })
    }

    /// Effectors applied at `r`, in order (op mode).
    pub fn applied(&self, r: &ReplicaId) -> Result<&[Effector], SimError> {
        Ok(&self.get(r)?.log)
    }

    pub fn metadata(&self, r: &ReplicaId) -> Result<Metadata, SimError> {
        let rep = self.get(r)?;
        Ok(match &rep.crdt {
            Crdt::State(s) => s.metadata(),
            Crdt::Op(s) => Metadata {
                state_bytes: s.state_bytes(),
                dots: 0,
                tombstones: 0,
                vv_width: rep.known.width(),
            },
        })
    }

    pub fn partitioned(&self, a: &ReplicaId, b: &ReplicaId) -> bool {
        self.partitions.iter().any(|p| p.separates(a, b, self.now))
    }

    /// Separates groups `a` and `b` for the next `duration` ticks.
    pub fn partition(&mut self, a: BTreeSet<ReplicaId>, b: BTreeSet<ReplicaId>, duration: u64) -> Result<(), SimError> {
        for r in a.iter().chain(&b) {
            self.get(r)?;
        }
        self.partitions.push(Partition { a, b, from: self.now, until: self.now + duration });
        Ok(())
    }

    pub fn submit(&mut self, r: &ReplicaId, op: Op) -> Result<Dot, SimError> {
        let model = self.cfg.model;
        let rep = self.live(r)?;
        let context = rep.known.clone();
        let meta = EventMeta {
            replica: r.clone(),
            dot: next_dot(r, &context),
            ts: rep.clock.clone().tick(r),
        };
        let resolution = if let Crdt::Op(s) = &rep.crdt {
            let (eff, res) = s.generate(&op, &meta, &context)?;
            self.get_mut(r)?.clock.tick(r);
            self.apply_effector(r, eff);
            res
        } else {
            let rep = self.get_mut(r)?;
            let s = rep.crdt.state_mut();
            let res = if model == SyncModel::Delta {
                let (res, d) = s.update_delta(&op, &meta)?;
                rep.dbuf.push(d);
                res
            } else {
                s.update(&op, &meta)?
            };
            rep.clock.tick(r);
            rep.known.record(&meta.dot);
            res
        };
        self.history
            .record_resolved(r, op, context, meta.ts, resolution)
            .expect("driver keeps contexts closed and timestamps ordered");
        self.check_invariants(r);
        Ok(meta.dot)
    }

    fn apply_effector(&mut self, r: &ReplicaId, eff: Effector) {
        let rep = self.replicas.get_mut(r).expect("checked by caller");
        if rep.known.contains(&eff.dot) {
            self.violations.push(format!("{r} applied {} twice", eff.dot));
        } else if !eff.context.le(&rep.known) {
            self.violations.push(format!("{r} applied {} before its causal past", eff.dot));
        }
        rep.crdt.op_mut().apply(&eff);
        rep.known.raise(&eff.dot.replica, eff.dot.counter);
        rep.clock.observe(&eff.ts);
        rep.durable.wal.push(eff.clone());
        rep.durable.known = rep.known.clone();
        rep.durable.clock = rep.clock.clone();
        rep.log.push(eff);
        self.check_invariants(r);
    }

    /// The causal delivery layer: applies `eff` once its causal past has
    /// been applied, buffers it otherwise, and discards duplicates.
    pub fn deliver_causal(&mut self, r: &ReplicaId, eff: Effector) -> Result<Delivery, SimError> {
        let rep = self.live(r)?;
        if rep.known.contains(&eff.dot) || rep.inbox.iter().any(|e| e.dot == eff.dot) {
            self.stats.duplicates_discarded += 1;
            return Ok(Delivery::Duplicate);
        }
        if !eff.context.le(&rep.known) {
            self.stats.buffered += 1;
            self.get_mut(r)?.inbox.push(eff);
            return Ok(Delivery::Buffered);
        }
        self.apply_effector(r, eff);
        loop {
            let rep = self.get_mut(r)?;
            let Some(i) = rep.inbox.iter().position(|e| e.context.le(&rep.known)) else { break };
            let next = rep.inbox.remove(i);
            self.apply_effector(r, next);
        }
        Ok(Delivery::Applied)
    }

    /// Applies `eff` at `r` without the delivery layer's checks. Used to
    /// inject middleware faults.
    pub fn inject_raw(&mut self, r: &ReplicaId, eff: Effector) -> Result<(), SimError> {
        self.live(r)?;
        self.apply_effector(r, eff);
        Ok(())
    }

    fn send(&mut self, src: &ReplicaId, dst: &ReplicaId, payload: Payload) {
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += encoded_len(&payload);
        self.stats.payload_bytes += match &payload {
            Payload::Effector(e) => encoded_len(e),
            Payload::State { state, .. } => encoded_len(state),
            Payload::Delta { delta, .. } => encoded_len(delta),
            Payload::Ack { .. } => 0,
        };
        let faults = self.cfg.faults.clone();
        if matches!(payload, Payload::Effector(_)) && self.rng.gen_bool(faults.drop) {
            self.stats.dropped += 1;
            return;
        }
        let copies = if self.rng.gen_bool(faults.dup) {
            self.stats.duplicated += 1;
            2
        } else {
            1
        };
        let mut payload = Some(payload);
        for copy in 0..copies {
            let extra = if self.rng.gen_bool(faults.reorder) {
                self.rng.gen_range(1..=MAX_EXTRA_DELAY)
            } else {
                0
            };
            let payload = if copy + 1 == copies { payload.take() } else { payload.clone() }.expect("one payload per copy");
            let msg = Message { src: src.clone(), dst: dst.clone(), due: self.now + 1 + extra, payload };
            self.in_flight.insert((msg.due, self.seq), msg);
            self.seq += 1;
        }
    }

    /// Starts a one-way anti-entropy session from `from` to `to`.
    pub fn sync(&mut self, from: &ReplicaId, to: &ReplicaId) -> Result<SyncOutcome, SimError> {
        if from == to {
            return Err(SimError::SelfSync);
        }
        let (src, dst) = (self.get(from)?, self.get(to)?);
        if src.crashed || dst.crashed {
            return Ok(SyncOutcome::Crashed);
        }
        if self.partitioned(from, to) {
            return Ok(SyncOutcome::Partitioned);
        }
        let payloads: Vec<Payload> = match self.cfg.model {
            SyncModel::State => vec![Payload::State {
                state: src.crdt.shared_state(),
                known: src.known.clone(),
                clock: src.clock.now(),
            }],
            SyncModel::Delta => {
                let delta = match src.acks.get(to) {
                    Some(&a) if a == src.seq() => None,
                    Some(&a) if a >= src.dbase => {
                        let mut it = src.dbuf[(a - src.dbase) as usize..].iter();
                        let mut group = it.next().expect("non-empty interval").clone();
                        for d in it {
                            group.join(d).expect("buffer holds one type");
                        }
                        Some(group)
                    }
                    _ => Some(src.crdt.state().to_delta()),
                };
                delta
                    .map(|delta| Payload::Delta {
                        delta,
                        known: src.known.clone(),
                        clock: src.clock.now(),
                        epoch: src.epoch,
                        upto: src.seq(),
                    })
                    .into_iter()
                    .collect()
            }
            SyncModel::Op => src
                .log
                .iter()
                .filter(|e| !dst.known.contains(&e.dot))
                .map(|e| Payload::Effector(e.clone()))
                .collect(),
        };
        if payloads.is_empty() {
            return Ok(SyncOutcome::Idle);
        }
        let n = payloads.len();
        for p in payloads {
            self.send(from, to, p);
        }
        Ok(SyncOutcome::Sent(n))
    }

    /// Advances one tick, delivering every message now due and running
    /// the periodic schedule.
    pub fn tick(&mut self) {
        self.now += 1;
        while let Some(entry) = self.in_flight.first_entry() {
            if entry.key().0 > self.now {
                break;
            }
            let msg = entry.remove();
            self.deliver(msg);
        }
        if let Some(s) = &self.cfg.schedule {
            if s.period > 0 && self.now % s.period == 0 {
                for (a, b) in s.pairs.clone() {
                    let _ = self.sync(&a, &b);
                    let _ = self.sync(&b, &a);
                }
            }
        }
    }

    fn deliver(&mut self, msg: Message) {
        let Some(dst) = self.replicas.get(&msg.dst) else { return };
        if dst.crashed {
            self.stats.lost_at_crashed += 1;
            return;
        }
        self.stats.delivered += 1;
        let peers = self.cfg.replicas.len() - 1;
        let dst = self.replicas.get_mut(&msg.dst).expect("looked up above");
        match msg.payload {
            Payload::Effector(eff) => {
                let _ = self.deliver_causal(&msg.dst, eff);
            }
            Payload::State { state, known, clock } => {
                dst.crdt.state_mut().merge(&state).expect("one type per network");
                dst.known.merge(&known);
                dst.clock.observe_clock(clock);
                self.check_invariants(&msg.dst);
            }
            Payload::Delta { delta, known, clock, epoch, upto } => {
                dst.crdt.state_mut().join_delta(&delta).expect("one type per network");
                dst.known.merge(&known);
                dst.clock.observe_clock(clock);
                dst.dbuf.push(delta);
                self.check_invariants(&msg.dst);
                self.send(&msg.dst, &msg.src, Payload::Ack { epoch, upto });
            }
            Payload::Ack { epoch, upto } => {
                if epoch == dst.epoch {
                    let a = dst.acks.entry(msg.src.clone()).or_insert(0);
                    *a = (*a).max(upto);
                    if dst.acks.len() == peers {
                        let min = dst.acks.values().copied().min().unwrap_or(0);
                        if min > dst.dbase {
                            dst.dbuf.drain(..(min - dst.dbase) as usize);
                            dst.dbase = min;
                        }
                    }
                }
            }
        }
    }

    fn check_invariants(&mut self, r: &ReplicaId) {
        if self.cfg.kind == CrdtKind::BoundedCounter {
            if let Ok(Some(Reading::Int(v))) = self.read(r) {
                if v < 0 {
                    self.violations.push(format!("bounded counter at {r} reads {v} at tick {}", self.now));
                }
            }
        }
    }

    pub fn crash(&mut self, r: &ReplicaId) -> Result<(), SimError> {
        self.live(r)?;
        let rep = self.get_mut(r)?;
        rep.persist();
        rep.crashed = true;
        Ok(())
    }

    /// Brings `r` back from its durable data, then merges a peer's state
    /// (state and delta modes) or copies it and replays the missing own
    /// effectors (op mode).
    pub fn recover(&mut self, r: &ReplicaId, source: &RecoverySource) -> Result<(), SimError> {
        if !self.get(r)?.crashed {
            return Err(SimError::NotCrashed(r.clone()));
        }
        if let RecoverySource::Peer(p) = source {
            let peer = self.get(p)?;
            if p == r || peer.crashed || self.partitioned(p, r) {
                return Err(SimError::NoLivePeer(r.clone()));
            }
        }
        let (kind, model) = (self.cfg.kind, self.cfg.model);
        let peer = match source {
            RecoverySource::Peer(p) => Some(self.get(p)?.clone()),
            RecoverySource::Log => None,
        };
        let rep = self.get_mut(r)?;
        let durable = rep.durable.clone();
        let mut fresh = Replica::new(kind, model);
        fresh.epoch = rep.epoch + 1;
        fresh.clock = durable.clock.clone();
        fresh.durable = durable.clone();
        match model {
            SyncModel::Op => {
                fresh.durable.wal.clear();
                *rep = fresh;
                let own = durable.wal;
                if let Some(peer) = peer {
                    let rep = self.get_mut(r)?;
                    rep.crdt = peer.crdt.clone();
                    rep.known = peer.known.clone();
                    rep.log = peer.log.clone();
                    rep.durable.wal = peer.log.clone();
                    rep.clock.observe_clock(peer.clock.now());
                }
                for eff in own {
                    if !self.get(r)?.known.contains(&eff.dot) {
                        self.apply_effector(r, eff);
                    }
                }
            }
            _ => {
                if let Some(s) = durable.state {
                    fresh.crdt = Crdt::State(s);
                }
                fresh.known = durable.known;
                if let Some(peer) = peer {
                    fresh.crdt.state_mut().merge(peer.crdt.state()).expect("one type per network");
                    fresh.known.merge(&peer.known);
                    fresh.clock.observe_clock(peer.clock.now());
                }
                *rep = fresh;
            }
        }
        for (id, other) in self.replicas.iter_mut() {
            if id != r {
                other.acks.remove(r);
            }
        }
        self.check_invariants(r);
        Ok(())
    }

    fn settled(&self) -> bool {
        let mut known = self.replicas.values().map(|r| &r.known);
        let first = known.next();
        known.all(|k| Some(k) == first) && self.replicas.values().all(|r| r.inbox.is_empty())
    }

    /// Recovers crashed replicas from their logs, waits out partitions and
    /// in-flight traffic, then runs full anti-entropy rounds over the
    /// schedule's pairs (all pairs by default) until every replica knows
    /// the same events. Returns the number of rounds.
    pub fn quiesce(&mut self) -> Result<u64, SimError> {
        let deadline = self.now + self.cfg.max_ticks;
        let crashed: Vec<ReplicaId> =
            self.replicas.iter().filter(|(_, r)| r.crashed).map(|(id, _)| id.clone()).collect();
        for r in crashed {
            self.recover(&r, &RecoverySource::Log)?;
        }
        let healed = self.partitions.iter().map(|p| p.until).max().unwrap_or(0);
        while self.now < healed || !self.in_flight.is_empty() {
            if self.now >= deadline {
                return Err(SimError::NotQuiescent(self.cfg.max_ticks));
            }
            self.tick();
        }
        let pairs = match &self.cfg.schedule {
            Some(s) => s.pairs.clone(),
            None => Schedule::all_pairs(&self.cfg.replicas).pairs,
        };
        let mut rounds = 0;
        loop {
            rounds += 1;
            for (a, b) in &pairs {
                self.sync(a, b)?;
                self.sync(b, a)?;
            }
            self.tick();
            while !self.in_flight.is_empty() {
                if self.now >= deadline {
                    return Err(SimError::NotQuiescent(self.cfg.max_ticks));
                }
                self.tick();
            }
            if self.settled() {
                return Ok(rounds);
            }
            if self.now >= deadline {
                return Err(SimError::NotQuiescent(self.cfg.max_ticks));
            }
        }
    }
}

#[cfg(test)]
mod tests;
