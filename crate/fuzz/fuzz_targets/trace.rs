#![no_main]

use crdtwb::harness::{recheck_trace, TraceReport};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(report) = serde_json::from_slice::<TraceReport>(data) else { return };
    // the oracle is exponential in the worst case
    if report.history.len() > 64 {
        return;
    }
    let _ = recheck_trace(&report);
    let _ = report.to_json();
});
