#![no_main]

use crdtwb::model::CrdtKind;
use crdtwb::op::{Effector, OpState};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((kind, effs)) = serde_json::from_slice::<(CrdtKind, Vec<Effector>)>(data) else { return };
    let mut state = OpState::new(kind);
    for e in &effs {
        state.apply(e);
    }
    let _ = state.read();
    let _ = state.list_ids();
    let _ = state.state_bytes();
});
