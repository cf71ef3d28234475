use super::*;
use crate::model::{MapSemantics, SetSemantics, Value};
use crate::oracle::evaluate;
use rand::Rng;

fn ids(names: &[&str]) -> Vec<ReplicaId> {
    names.iter().map(|n| ReplicaId::new(*n)).collect()
}

fn r(name: &str) -> ReplicaId {
    ReplicaId::new(name)
}

fn net(kind: CrdtKind, model: SyncModel, names: &[&str]) -> Network {
    Network::new(SimConfig::new(kind, model, ids(names)))
}

fn sync_now(n: &mut Network, a: &str, b: &str) {
    n.sync(&r(a), &r(b)).unwrap();
    n.tick();
}

fn sync_bi(n: &mut Network, a: &str, b: &str) {
    sync_now(n, a, b);
    sync_now(n, b, a);
}

fn read(n: &Network, name: &str) -> Reading {
    n.read(&r(name)).unwrap().unwrap()
}

fn oracle(n: &Network) -> Reading {
    evaluate(n.config().kind, n.history()).unwrap().unwrap()
}

#[test]
fn add_wins_run_in_every_model() {
    for model in SyncModel::ALL {
        let mut n = net(CrdtKind::Set(SetSemantics::AddWins), model, &["A", "B"]);
        n.submit(&r("A"), Op::Add("a".into())).unwrap();
        sync_bi(&mut n, "A", "B");
        n.submit(&r("A"), Op::Rmv("a".into())).unwrap();
        n.submit(&r("A"), Op::Add("a".into())).unwrap();
        n.submit(&r("B"), Op::Rmv("a".into())).unwrap();
        sync_bi(&mut n, "A", "B");
        assert_eq!(read(&n, "A"), Reading::Set([Value::from("a")].into()), "{model}");
        assert_eq!(read(&n, "B"), read(&n, "A"));
        assert_eq!(n.history().len(), 4);
        assert_eq!(oracle(&n), read(&n, "A"));
    }
}

#[test]
fn out_of_order_effectors_are_buffered() {
    let mut n = net(CrdtKind::Counter, SyncModel::Op, &["A", "B"]);
    n.submit(&r("A"), Op::Inc(1)).unwrap();
    n.submit(&r("A"), Op::Inc(2)).unwrap();
    let log = n.applied(&r("A")).unwrap().to_vec();
    assert_eq!(n.deliver_causal(&r("B"), log[1].clone()).unwrap(), Delivery::Buffered);
    assert_eq!(read(&n, "B"), Reading::Int(0));
    assert_eq!(n.deliver_causal(&r("B"), log[0].clone()).unwrap(), Delivery::Applied);
    let order: Vec<_> = n.applied(&r("B")).unwrap().iter().map(|e| e.dot.clone()).collect();
    assert_eq!(order, vec![log[0].dot.clone(), log[1].dot.clone()]);
    assert_eq!(read(&n, "B"), Reading::Int(3));

    assert_eq!(n.deliver_causal(&r("B"), log[0].clone()).unwrap(), Delivery::Duplicate);
    assert_eq!(read(&n, "B"), Reading::Int(3));
    assert!(n.violations().is_empty());
}

#[test]
fn bad_driver_calls_are_rejected() {
    let mut n = net(CrdtKind::Counter, SyncModel::State, &["A", "B"]);
    assert_eq!(n.sync(&r("A"), &r("A")), Err(SimError::SelfSync));
    assert_eq!(n.submit(&r("Z"), Op::Inc(1)), Err(SimError::UnknownReplica(r("Z"))));
    assert!(matches!(n.submit(&r("A"), Op::Add("x".into())), Err(SimError::Update(_))));
    assert!(n.history().is_empty());
}

#[test]
fn failed_decrement_leaves_no_trace() {
    for model in SyncModel::ALL {
        let mut n = net(CrdtKind::BoundedCounter, model, &["A", "B"]);
        n.submit(&r("A"), Op::Inc(2)).unwrap();
        let err = n.submit(&r("A"), Op::Dec(3)).unwrap_err();
        assert_eq!(err, SimError::Update(UpdateError::InsufficientRights { need: 3, have: 2 }));
        assert_eq!(read(&n, "A"), Reading::Int(2));
        assert_eq!(n.history().len(), 1);
    }
}

fn random_op(kind: CrdtKind, rng: &mut ChaCha8Rng) -> Op {
    let e = Value::Str(["a", "b"][rng.gen_range(0..2)].into());
    match kind {
        CrdtKind::Set(_) => {
            if rng.gen_bool(0.5) {
                Op::Add(e)
            } else {
                Op::Rmv(e)
            }
        }
        CrdtKind::Map(_) => {
            if rng.gen_bool(0.1) {
                Op::RmvKey(vec!["k".into()])
            } else {
                Op::Upd { key: vec!["k".into()], op: Box::new(Op::Add(e)) }
            }
        }
        _ => Op::Inc(rng.gen_range(1..4)),
    }
}

/// Random submits and syncs under faults, then quiescence.
fn faulty_run(kind: CrdtKind, model: SyncModel, seed: u64, faults: FaultPolicy) -> Network {
    let names = ["A", "B", "C"];
    let mut cfg = SimConfig::new(kind, model, ids(&names));
    cfg.seed = seed;
    cfg.faults = faults;
    let mut n = Network::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..60 {
        let a = r(names[rng.gen_range(0..3)]);
        if rng.gen_bool(0.3) {
            let b = r(names[rng.gen_range(0..3)]);
            if a != b {
                n.sync(&a, &b).unwrap();
            }
        } else {
            n.submit(&a, random_op(kind, &mut rng)).unwrap();
        }
        n.tick();
    }
    n.quiesce().unwrap();
    n
}

fn all_faults() -> FaultPolicy {
    FaultPolicy { dup: 0.3, drop: 0.2, reorder: 0.5 }
}

#[test]
fn causal_delivery_under_adversarial_schedules() {
    for seed in 0..20 {
        let n = faulty_run(CrdtKind::Counter, SyncModel::Op, seed, all_faults());
        assert!(n.violations().is_empty(), "{:?}", n.violations());
        let full = n.history().summary().clone();
        for id in ids(&["A", "B", "C"]) {
            assert_eq!(n.known(&id).unwrap(), &full);
            // each dot once, each after its causal past
            let mut seen = VersionVector::new();
            for e in n.applied(&id).unwrap() {
                assert!(!seen.contains(&e.dot));
                assert!(n.history().get(&e.dot).unwrap().context.le(&seen));
                seen.record(&e.dot);
            }
        }
        assert_eq!(read(&n, "A"), oracle(&n));
        assert!(n.stats().dropped > 0 || seed > 0);
    }
}

#[test]
fn every_model_converges_to_the_oracle_under_faults() {
    let kinds = [
        CrdtKind::Counter,
        CrdtKind::Set(SetSemantics::AddWins),
        CrdtKind::Set(SetSemantics::RemoveWins),
        CrdtKind::Map(MapSemantics::UpdateWins),
    ];
    for kind in kinds {
        for model in SyncModel::ALL {
            for seed in 0..5 {
                let n = faulty_run(kind, model, seed, all_faults());
                let want = oracle(&n);
                for id in ["A", "B", "C"] {
                    assert_eq!(read(&n, id), want, "{kind} {model} seed {seed}");
                }
                assert!(n.violations().is_empty());
            }
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let a = faulty_run(CrdtKind::Set(SetSemantics::AddWins), SyncModel::Delta, 9, all_faults());
    let b = faulty_run(CrdtKind::Set(SetSemantics::AddWins), SyncModel::Delta, 9, all_faults());
    assert_eq!(a.stats(), b.stats());
    assert_eq!(serde_json::to_string(a.history()).unwrap(), serde_json::to_string(b.history()).unwrap());
}

#[test]
fn delta_traffic_is_smaller_for_counters() {
    let mut bytes = BTreeMap::new();
    for model in [SyncModel::State, SyncModel::Delta] {
        let mut n = net(CrdtKind::Counter, model, &["A", "B", "C"]);
        for i in 0..100 {
            let at = ["A", "B", "C"][i % 3];
            n.submit(&r(at), Op::Inc(1)).unwrap();
            sync_now(&mut n, at, ["B", "C", "A"][i % 3]);
        }
        n.quiesce().unwrap();
        assert_eq!(read(&n, "C"), Reading::Int(100));
        bytes.insert(model, n.stats().payload_bytes);
    }
    assert!(bytes[&SyncModel::Delta] <= bytes[&SyncModel::State], "{bytes:?}");
}

#[test]
fn partition_blocks_sessions_until_healed() {
    let mut n = net(CrdtKind::Set(SetSemantics::AddWins), SyncModel::State, &["A", "B", "C"]);
    n.partition([r("A")].into(), [r("B"), r("C")].into(), 5).unwrap();
    n.submit(&r("A"), Op::Add("x".into())).unwrap();
    assert_eq!(n.sync(&r("A"), &r("B")).unwrap(), SyncOutcome::Partitioned);
    assert_eq!(n.sync(&r("B"), &r("C")).unwrap(), SyncOutcome::Sent(1));
    n.quiesce().unwrap();
    assert!(n.now() >= 5);
    assert_eq!(read(&n, "C"), Reading::Set([Value::from("x")].into()));
}

#[test]
fn crash_and_recover_from_peer() {
    for model in SyncModel::ALL {
        let mut n = net(CrdtKind::Set(SetSemantics::AddWins), model, &["A", "B"]);
        n.submit(&r("A"), Op::Add("a".into())).unwrap();
        n.submit(&r("B"), Op::Add("b".into())).unwrap();
        sync_bi(&mut n, "A", "B");
        n.submit(&r("B"), Op::Add("c".into())).unwrap();
        n.crash(&r("B")).unwrap();
        assert_eq!(n.read(&r("B")).unwrap(), None);
        assert_eq!(n.submit(&r("B"), Op::Add("d".into())), Err(SimError::Crashed(r("B"))));
        n.submit(&r("A"), Op::Rmv("a".into())).unwrap();
        n.recover(&r("B"), &RecoverySource::Peer(r("A"))).unwrap();
        n.submit(&r("B"), Op::Add("e".into())).unwrap();
        n.quiesce().unwrap();
        let want = Reading::Set(["b", "c", "e"].into_iter().map(Value::from).collect());
        assert_eq!(read(&n, "A"), want, "{model}");
        assert_eq!(read(&n, "B"), want);
        assert_eq!(oracle(&n), want);
    }
}

#[test]
fn recovery_needs_a_reachable_peer() {
    let mut n = net(CrdtKind::Counter, SyncModel::Op, &["A", "B", "C"]);
    n.crash(&r("A")).unwrap();
    n.crash(&r("B")).unwrap();
    assert_eq!(n.recover(&r("A"), &RecoverySource::Peer(r("B"))), Err(SimError::NoLivePeer(r("A"))));
    n.partition([r("A")].into(), [r("C")].into(), 3).unwrap();
    assert_eq!(n.recover(&r("A"), &RecoverySource::Peer(r("C"))), Err(SimError::NoLivePeer(r("A"))));
    n.recover(&r("B"), &RecoverySource::Peer(r("C"))).unwrap();
    assert_eq!(n.recover(&r("B"), &RecoverySource::Log), Err(SimError::NotCrashed(r("B"))));
    n.recover(&r("A"), &RecoverySource::Peer(r("B"))).unwrap();
}

#[test]
fn crash_recovery_from_log_under_faults() {
    for model in SyncModel::ALL {
        for seed in 0..5 {
            let names = ["A", "B", "C"];
            let mut cfg = SimConfig::new(CrdtKind::Set(SetSemantics::RemoveWins), model, ids(&names));
            cfg.seed = seed;
            cfg.faults = all_faults();
            let mut n = Network::new(cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for step in 0..80 {
                let a = r(names[rng.gen_range(0..3)]);
                match rng.gen_range(0..10) {
                    0 => {
                        let _ = n.crash(&a);
                    }
                    1 => {
                        let _ = n.recover(&a, &RecoverySource::Log);
                    }
                    2..=4 => {
                        let b = r(names[rng.gen_range(0..3)]);
                        if a != b {
                            n.sync(&a, &b).unwrap();
                        }
                    }
                    _ => {
                        let _ = n.submit(&a, random_op(CrdtKind::Set(SetSemantics::RemoveWins), &mut rng));
                    }
                }
                if step % 2 == 0 {
                    n.tick();
                }
            }
            n.quiesce().unwrap();
            let want = oracle(&n);
            for id in names {
                assert_eq!(read(&n, id), want, "{model} seed {seed}");
            }
            assert!(n.violations().is_empty(), "{:?}", n.violations());
        }
    }
}

#[test]
fn raw_duplicate_is_detected() {
    let mut n = net(CrdtKind::Counter, SyncModel::Op, &["A", "B"]);
    n.submit(&r("A"), Op::Inc(5)).unwrap();
    sync_now(&mut n, "A", "B");
    let eff = n.applied(&r("A")).unwrap()[0].clone();
    n.inject_raw(&r("B"), eff).unwrap();
    n.quiesce().unwrap();
    assert_eq!(read(&n, "B"), Reading::Int(10));
    assert_ne!(read(&n, "B"), oracle(&n));
    assert_eq!(n.violations().len(), 1);
}

#[test]
fn schedule_connectivity() {
    let rs = ids(&["A", "B", "C"]);
    assert!(Schedule::all_pairs(&rs).connects(&rs));
    let s = Schedule { pairs: vec![(r("A"), r("B"))], period: 0 };
    assert!(!s.connects(&rs));
}

#[test]
fn periodic_schedule_propagates_without_explicit_syncs() {
    let mut cfg = SimConfig::new(CrdtKind::Counter, SyncModel::Delta, ids(&["A", "B", "C"]));
    cfg.schedule = Some(Schedule { pairs: vec![(r("A"), r("B")), (r("B"), r("C"))], period: 2 });
    let mut n = Network::new(cfg);
    n.submit(&r("A"), Op::Inc(4)).unwrap();
    for _ in 0..8 {
        n.tick();
    }
    assert_eq!(read(&n, "C"), Reading::Int(4));
}
