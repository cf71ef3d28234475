//! Randomized runs with greedy shrinking of failures.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causality::ReplicaId;
use crate::model::{CrdtKind, SyncModel};
use crate::sim::{FaultPolicy, RecoverySource};

use super::gen::{random_op, OpContext};
use super::run::{run_scenario, Runner, TraceReport, Verdicts};
use super::scenario::{Direction, Scenario, Step};

/// Upper bound on reruns spent shrinking one failure.
pub const MAX_SHRINK_RERUNS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub kind: CrdtKind,
    pub model: SyncModel,
    pub replicas: usize,
    pub ops: usize,
    pub seed: u64,
    pub faults: FaultPolicy,
    pub partitions: bool,
    pub crashes: bool,
    /// Probability that a step is an anti-entropy session rather than a
    /// submit.
    pub sync_p: f64,
    /// Probability of an intermediate oracle checkpoint.
    pub checkpoint_p: f64,
}

impl FuzzConfig {
    pub fn new(kind: CrdtKind, model: SyncModel, replicas: usize, ops: usize, seed: u64) -> Self {
        FuzzConfig {
            kind,
            model,
            replicas,
            ops,
            seed,
            faults: FaultPolicy::none(),
            partitions: false,
            crashes: false,
            sync_p: 0.3,
            checkpoint_p: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FuzzOutcome {
    pub report: TraceReport,
    /// The generated script.
    pub scenario: Scenario,
    /// A shrunk script that fails the same way, for failing runs.
    pub replay: Option<Scenario>,
    pub shrink_reruns: usize,
}

pub fn replica_names(n: usize) -> Vec<ReplicaId> {
    (0..n)
        .map(|i| match u8::try_from(i).ok().filter(|i| *i < 26) {
            Some(i) => ReplicaId::new(((b'A' + i) as char).to_string()),
            None => ReplicaId::new(format!("R{i}")),
        })
        .collect()
}

/// Generates and runs a random script. Ops are chosen against the live
/// state of the submitting replica, so most of them are valid.
pub fn fuzz(cfg: &FuzzConfig) -> Result<FuzzOutcome, String> {
    if cfg.replicas == 0 || cfg.ops == 0 {
        return Err("replica and op counts must be at least 1".into());
    }
    cfg.faults.validate()?;
    let names = replica_names(cfg.replicas);
    let mut template = Scenario::new(cfg.kind, cfg.model, &[]);
    template.name = format!("fuzz-{}-{}-{}", cfg.kind, cfg.model, cfg.seed);
    template.replicas = names.clone();
    template.seed = cfg.seed;
    template.faults = cfg.faults.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut runner = Runner::new(&template, cfg.model);
    let pick = |rng: &mut ChaCha8Rng, from: &[ReplicaId]| from[rng.gen_range(0..from.len())].clone();
    let mut submitted = 0;
    while submitted < cfg.ops {
        let net = runner.network();
        let live: Vec<ReplicaId> = names.iter().filter(|r| !net.is_crashed(r).unwrap_or(true)).cloned().collect();
        let crashed: Vec<ReplicaId> = names.iter().filter(|r| !live.contains(r)).cloned().collect();
        let roll: f64 = rng.gen();
        let step = if !crashed.is_empty() && (live.is_empty() || roll < 0.04) {
            let r = pick(&mut rng, &crashed);
            let reachable: Vec<ReplicaId> = live.iter().filter(|p| !net.partitioned(p, &r)).cloned().collect();
            let from = if reachable.is_empty() || rng.gen_bool(0.5) {
                RecoverySource::Log
            } else {
                RecoverySource::Peer(pick(&mut rng, &reachable))
            };
            Step::Recover { replica: r, from, outcome: None }
        } else if cfg.crashes && live.len() > 1 && roll < 0.06 {
            Step::Crash(pick(&mut rng, &live))
        } else if cfg.partitions && names.len() > 1 && roll < 0.09 {
            let mut a = BTreeSet::new();
            let mut b = BTreeSet::new();
            for r in &names {
                if rng.gen_bool(0.5) {
                    a.insert(r.clone());
                } else {
                    b.insert(r.clone());
                }
            }
            if a.is_empty() || b.is_empty() {
                continue;
            }
            Step::Partition { a, b, ticks: rng.gen_range(2..30) }
        } else if names.len() > 1 && roll < 0.09 + cfg.sync_p {
            let a = pick(&mut rng, &names);
            let b = pick(&mut rng, &names);
            if a == b {
                continue;
            }
            let direction = if rng.gen_bool(0.5) { Direction::Uni } else { Direction::Bi };
            Step::Sync { a, b, direction }
        } else if roll < 0.09 + cfg.sync_p + cfg.checkpoint_p {
            Step::Checkpoint { replica: pick(&mut rng, &live), expect: None }
        } else {
            let r = pick(&mut rng, &live);
            let ctx = OpContext {
                list_len: net.list_ids(&r).ok().flatten().map_or(0, |v| v.len()),
                replicas: names.clone(),
                origin: Some(r.clone()),
            };
            submitted += 1;
            Step::Submit { replica: r, op: random_op(cfg.kind, &mut rng, &ctx), outcome: None }
        };
        runner.exec(step);
    }
    let scenario = runner.scenario().clone();
    let report = runner.finish();
    let (replay, shrink_reruns) = if report.verdict.passed() {
        (None, 0)
    } else {
        let (s, n) = shrink(&scenario, &report.verdicts);
        (Some(s), n)
    };
    Ok(FuzzOutcome { report, scenario, replay, shrink_reruns })
}

/// Greedy step removal: drops any step whose removal keeps the same set
/// of failed verdicts, until a full pass removes nothing or the rerun
/// budget is spent.
pub fn shrink(s: &Scenario, failed: &Verdicts) -> (Scenario, usize) {
    let mut best = s.clone();
    let mut reruns = 0;
    let mut changed = true;
    while changed && reruns < MAX_SHRINK_RERUNS {
        changed = false;
        let mut i = 0;
        while i < best.steps.len() && reruns < MAX_SHRINK_RERUNS {
            let mut candidate = best.clone();
            candidate.steps.remove(i);
            if candidate.validate().is_empty() {
                reruns += 1;
                let r = run_scenario(&candidate, None);
                if !r.verdict.passed() && r.verdicts == *failed {
                    best = candidate;
                    changed = true;
                    continue;
                }
            }
            i += 1;
        }
    }
    (best, reruns)
}
