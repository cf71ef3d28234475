//! Join-semilattice laws over randomly reached states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::causality::Dot;
use crate::model::{CrdtKind, Reading, SyncModel};
use crate::sim::{Network, SimConfig};
use crate::state::AnyState;

use super::fuzz::replica_names;
use super::gen::{random_op, OpContext};

/// What a client can observe of a state.
pub fn observe(s: &AnyState) -> (Reading, Option<Vec<Dot>>) {
    (s.read(), s.list_ids())
}

fn join(a: &AnyState, b: &AnyState) -> AnyState {
    a.merged(b).expect("states of one network share a type")
}

#[derive(Clone, Debug, Default)]
pub struct LawReport {
    pub triples: usize,
    pub updates: usize,
    pub failures: Vec<String>,
}

/// Checks commutativity, associativity and idempotence of merge, and
/// inflation of merge and of every update, on `triples` triples of states
/// reached by random runs of three replicas.
pub fn check_laws(kind: CrdtKind, triples: usize, seed: u64) -> LawReport {
    let mut report = LawReport::default();
    let names = replica_names(3);
    for t in 0..triples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(t as u64));
        let mut net = Network::new(SimConfig::new(kind, SyncModel::State, names.clone()));
        for _ in 0..rng.gen_range(3..25) {
            let r = names[rng.gen_range(0..3)].clone();
            if rng.gen_bool(0.3) {
                let to = names[rng.gen_range(0..3)].clone();
                if to != r {
                    net.sync(&r, &to).expect("declared replicas");
                    net.tick();
                }
                continue;
            }
            let before = net.state(&r).expect("declared").expect("state mode").clone();
            let ctx = OpContext {
                list_len: before.list_ids().map_or(0, |v| v.len()),
                replicas: names.clone(),
                origin: Some(r.clone()),
            };
            let op = random_op(kind, &mut rng, &ctx);
            if net.submit(&r, op.clone()).is_ok() {
                report.updates += 1;
                let after = net.state(&r).expect("declared").expect("state mode");
                if observe(&join(after, &before)) != observe(after) {
                    report.failures.push(format!("{kind} triple {t}: update {op:?} is not inflationary"));
                }
            }
        }
        let [x, y, z] = [0, 1, 2].map(|i| net.state(&names[i]).expect("declared").expect("state mode").clone());
        let mut fail = |law: &str| report.failures.push(format!("{kind} triple {t}: {law} fails"));
        if observe(&join(&x, &y)) != observe(&join(&y, &x)) {
            fail("commutativity");
        }
        if observe(&join(&join(&x, &y), &z)) != observe(&join(&x, &join(&y, &z))) {
            fail("associativity");
        }
        if observe(&join(&x, &x)) != observe(&x) {
            fail("idempotence");
        }
        let xy = join(&x, &y);
        if observe(&join(&xy, &x)) != observe(&xy) || observe(&join(&xy, &y)) != observe(&xy) {
            fail("inflation of merge");
        }
        report.triples += 1;
    }
    report
}
