//! The published schemas list the same step kinds, ops and report keys
//! that the parser and runner use.

use std::collections::BTreeSet;

use crdtwb::harness::{parse_scenario, run_scenario};
use serde_json::Value;

fn load(name: &str) -> Value {
    let path = format!("{}/../../schema/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

const ALL_STEPS: &str = r#"{"version":1,"crdt":{"type":"bcounter"},"replicas":["A","B"],"steps":[
    {"submit":{"replica":"A","op":{"inc":3}}},
    {"submit":{"replica":"A","op":{"transfer":{"to":"B","n":1}},"outcome":"ok"}},
    {"sync":{"a":"A","b":"B","direction":"uni"}},
    {"partition":{"a":["A"],"b":["B"],"ticks":2}},
    {"crash":"B"},
    {"recover":{"replica":"B","from":"log"}},
    {"tick":3},
    {"checkpoint":{"replica":"A","expect":3}}
]}"#;

#[test]
fn scenario_schema_covers_every_step_kind() {
    let schema = load("scenario.schema.json");
    let steps = keys(&schema["$defs"]["step"]["properties"]);
    let s = parse_scenario(ALL_STEPS).unwrap();
    let used: BTreeSet<String> = serde_json::to_value(&s.steps)
        .unwrap()
        .as_array()
        .unwrap()
        .iter()
        .map(|st| st.as_object().map_or_else(|| st.as_str().unwrap().to_string(), |o| o.keys().next().unwrap().clone()))
        .collect();
    assert_eq!(used, steps);
    let ops = keys(&schema["$defs"]["op"]["properties"]);
    for op in ["inc", "dec", "wr", "add", "rmv", "ins", "rmv_at", "upd", "rmv_key", "transfer"] {
        assert!(ops.contains(op), "{op}");
    }
    let top = keys(&schema["properties"]);
    let printed = keys(&serde_json::from_str::<Value>(&s.to_json()).unwrap());
    assert!(printed.is_subset(&top), "{printed:?}");
}

#[test]
fn trace_schema_lists_every_report_key() {
    let schema = load("trace.schema.json");
    let r = run_scenario(&parse_scenario(ALL_STEPS).unwrap(), None);
    assert!(r.verdict.passed(), "{}", r.to_json());
    let report: Value = serde_json::from_str(&r.to_json()).unwrap();
    let declared = keys(&schema["properties"]);
    let required: BTreeSet<String> =
        schema["required"].as_array().unwrap().iter().map(|k| k.as_str().unwrap().to_string()).collect();
    assert!(keys(&report).is_subset(&declared));
    assert!(required.is_subset(&keys(&report)));
    let verdicts: BTreeSet<String> = schema["properties"]["verdicts"]["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|k| k.as_str().unwrap().to_string())
        .collect();
    assert_eq!(verdicts, keys(&report["verdicts"]));
}
