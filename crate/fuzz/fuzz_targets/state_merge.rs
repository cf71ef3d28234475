#![no_main]

use crdtwb::state::AnyState;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((a, b)) = serde_json::from_slice::<(AnyState, AnyState)>(data) else { return };
    let Ok(ab) = a.merged(&b) else {
        assert!(b.merged(&a).is_err());
        return;
    };
    let _ = b.merged(&a).expect("merge is symmetric in what it accepts");
    let _ = ab.read();
    let _ = ab.metadata();
    let _ = ab.to_delta();
});
