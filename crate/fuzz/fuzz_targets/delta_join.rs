#![no_main]

use crdtwb::state::{AnyDelta, AnyState};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((mut s, d, e)) = serde_json::from_slice::<(AnyState, AnyDelta, AnyDelta)>(data) else { return };
    let mut group = d.clone();
    if group.join(&e).is_ok() {
        let _ = s.clone().join_delta(&group);
    }
    if s.join_delta(&d).is_ok() {
        let _ = s.read();
    }
});
