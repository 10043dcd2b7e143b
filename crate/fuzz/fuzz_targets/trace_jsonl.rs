#![no_main]

use acabe::protocol::Trace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Trace::from_jsonl(text) {
        assert_eq!(Trace::from_jsonl(&t.to_jsonl()).unwrap(), t);
    }
});
