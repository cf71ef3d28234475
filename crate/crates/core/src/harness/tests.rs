use serde_json::json;

use super::*;
use crate::model::{CrdtKind, MapSemantics, SetSemantics, SyncModel};
use crate::sim::FaultPolicy;

const FIG1: &str = include_str!("../../../../scenarios/fig1.json");
const FIG8: &str = include_str!("../../../../scenarios/fig8.json");

#[test]
fn bundled_script_parses() {
    let s = parse_scenario(FIG1).unwrap();
    assert_eq!(s.crdt, CrdtKind::Set(SetSemantics::AddWins));
    assert_eq!(s.steps.len(), 8);
    assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
}

#[test]
fn max_register_checkpoints() {
    let r = run_scenario(&parse_scenario(FIG8).unwrap(), None);
    assert!(r.verdict.passed(), "{}", r.to_json());
    assert_eq!(r.checkpoints[0].observed, json!(5));
    assert_eq!(r.final_values.values().cloned().collect::<Vec<_>>(), vec![json!(4), json!(4)]);
}

#[test]
fn undeclared_replica_is_reported_with_its_line() {
    let text = r#"{
  "version": 1,
  "crdt": {"type": "counter"},
  "replicas": ["A", "B"],
  "steps": [
    {"submit": {"replica": "A", "op": {"inc": 1}}},
    {"submit": {"replica": "Z", "op": {"inc": 1}}}
  ]
}"#;
    let err = parse_scenario(text).unwrap_err();
    assert_eq!(err.errors.len(), 1);
    assert_eq!(err.errors[0].line, 7);
    assert_eq!(err.errors[0].path, "steps[1].submit.replica");
}

#[test]
fn schema_errors() {
    let base = |steps: &str, crdt: &str| {
        format!(r#"{{"version":1,"crdt":{crdt},"replicas":["A","B"],"steps":[{steps}]}}"#)
    };
    let counter = r#"{"type":"counter"}"#;
    // unknown type
    assert!(parse_scenario(&base("", r#"{"type":"queue"}"#)).is_err());
    // bad arity
    let e = parse_scenario(&base(r#"{"submit":{"replica":"A","op":{"ins":2}}}"#, r#"{"type":"list"}"#)).unwrap_err();
    assert_eq!(e.errors[0].path, "steps[0]");
    // op of another type
    assert!(parse_scenario(&base(r#"{"submit":{"replica":"A","op":{"add":"x"}}}"#, counter)).is_err());
    // expectation of the wrong shape
    assert!(parse_scenario(&base(r#"{"checkpoint":{"replica":"A","expect":[1]}}"#, counter)).is_err());
    assert!(parse_scenario(&base(r#"{"sync":{"a":"A","b":"A"}}"#, counter)).is_err());
    assert!(parse_scenario("{").is_err());
    let two = parse_scenario(&base(
        r#"{"crash":"Q"},{"submit":{"replica":"R","op":{"inc":1}}}"#,
        counter,
    ))
    .unwrap_err();
    assert_eq!(two.errors.len(), 2);
}

#[test]
fn disconnected_schedule_is_rejected() {
    let text = r#"{"version":1,"crdt":{"type":"counter"},"replicas":["A","B","C"],
        "schedule":{"pairs":[["A","B"]],"period":3},"steps":[]}"#;
    let err = parse_scenario(text).unwrap_err();
    assert!(err.errors[0].message.contains("not connected"));
}

#[test]
fn empty_script_converges_trivially() {
    let s = parse_scenario(r#"{"version":1,"crdt":{"type":"set"},"replicas":["A","B"],"steps":[]}"#).unwrap();
    assert!(run_scenario(&s, None).verdict.passed());
    let c = compare_models(&s);
    assert!(c.identical && c.verdict.passed());
}

#[test]
fn wrong_expectation_fails() {
    let mut s = parse_scenario(FIG1).unwrap();
    s.expect_final = Some(json!([]));
    let r = run_scenario(&s, None);
    assert!(!r.verdict.passed());
    assert!(!r.verdicts.expected_final);
    assert!(r.verdicts.oracle);
}

#[test]
fn expectation_matching() {
    use crate::model::{Reading, Value};
    let set = Reading::Set([Value::from("a"), Value::Int(1)].into());
    assert!(matches_expectation(&set, &json!([1, "a"])));
    assert!(!matches_expectation(&set, &json!(["a"])));
    assert!(!matches_expectation(&set, &json!(["a", "a", 1])));
    let seq = Reading::Seq(vec![Value::from("a"), Value::Int(1)]);
    assert!(!matches_expectation(&seq, &json!([1, "a"])));
}

#[test]
fn crash_scenario_recovers_from_peer() {
    let text = r#"{"version":1,"crdt":{"type":"set"},"replicas":["A","B","C"],"steps":[
        {"submit":{"replica":"B","op":{"add":"b"}}},
        {"sync":{"a":"B","b":"A"}},
        {"crash":"B"},
        {"submit":{"replica":"B","op":{"add":"x"},"outcome":"fail"}},
        {"submit":{"replica":"A","op":{"add":"a"}}},
        {"partition":{"a":["A"],"b":["B","C"],"ticks":3}},
        {"recover":{"replica":"B","from":{"peer":"A"},"outcome":"fail"}},
        {"recover":{"replica":"B","from":{"peer":"C"}}},
        {"submit":{"replica":"B","op":{"add":"c"}}}
    ],"expect_final":["a","b","c"]}"#;
    for model in SyncModel::ALL {
        let r = run_scenario(&parse_scenario(text).unwrap(), Some(model));
        assert!(r.verdict.passed(), "{model}: {}", r.to_json());
    }
}

#[test]
fn fuzz_examples_pass() {
    let cfg = FuzzConfig::new(CrdtKind::Set(SetSemantics::AddWins), SyncModel::State, 3, 200, 7);
    assert!(fuzz(&cfg).unwrap().report.verdict.passed());
    let mut cfg = FuzzConfig::new(CrdtKind::Counter, SyncModel::Op, 5, 500, 1);
    cfg.faults = FaultPolicy { dup: 0.2, drop: 0.0, reorder: 0.3 };
    assert!(fuzz(&cfg).unwrap().report.verdict.passed());
}

#[test]
fn fuzz_is_deterministic() {
    let mut cfg = FuzzConfig::new(CrdtKind::Map(MapSemantics::UpdateWins), SyncModel::Delta, 3, 80, 4);
    cfg.faults = FaultPolicy { dup: 0.3, drop: 0.0, reorder: 0.3 };
    cfg.partitions = true;
    cfg.crashes = true;
    cfg.checkpoint_p = 0.05;
    let a = fuzz(&cfg).unwrap();
    let b = fuzz(&cfg).unwrap();
    assert!(a.report.verdict.passed(), "{}", a.report.to_json());
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(run_scenario(&a.scenario, None).to_json(), a.report.to_json());
}

#[test]
fn zero_counts_are_rejected() {
    assert!(fuzz(&FuzzConfig::new(CrdtKind::Counter, SyncModel::Op, 0, 5, 1)).is_err());
    assert!(fuzz(&FuzzConfig::new(CrdtKind::Counter, SyncModel::Op, 2, 0, 1)).is_err());
}

#[test]
fn shrinking_keeps_the_failure() {
    let cfg = FuzzConfig::new(CrdtKind::Counter, SyncModel::State, 3, 40, 3);
    let mut s = fuzz(&cfg).unwrap().scenario;
    // a wrong expectation makes the run fail
    s.expect_final = Some(json!(-12345));
    let r = run_scenario(&s, None);
    assert!(!r.verdict.passed());
    let (small, reruns) = shrink(&s, &r.verdicts);
    assert!(reruns <= MAX_SHRINK_RERUNS);
    assert!(small.steps.len() < s.steps.len());
    let again = run_scenario(&small, None);
    assert!(!again.verdict.passed());
    assert_eq!(again.verdicts, r.verdicts);
    let replay = parse_scenario(&small.to_json()).unwrap();
    assert_eq!(run_scenario(&replay, None).to_json(), again.to_json());
}

#[test]
fn recorded_trace_rechecks() {
    let r = run_scenario(&parse_scenario(FIG1).unwrap(), None);
    let back: TraceReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(recheck_trace(&back).0, Verdict::Pass);
    let mut tampered = back.clone();
    tampered.final_values.values_mut().for_each(|v| *v = json!([]));
    assert_eq!(recheck_trace(&tampered).0, Verdict::Fail);
}

#[test]
fn sequential_runs_match_plain_types() {
    for kind in CrdtKind::ALL {
        for model in SyncModel::ALL {
            check_sequential(kind, model, 3, 40, 11).unwrap_or_else(|e| panic!("{kind} {model}: {e}"));
        }
    }
}

#[test]
fn lattice_laws_hold_on_a_sample() {
    for kind in CrdtKind::ALL {
        let r = check_laws(kind, 20, 1);
        assert_eq!(r.triples, 20);
        assert!(r.failures.is_empty(), "{:?}", r.failures);
    }
}
