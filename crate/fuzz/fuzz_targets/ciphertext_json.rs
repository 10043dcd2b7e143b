#![no_main]

use acabe::cpabe::{global_setup, HybridCiphertext};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(hc) = serde_json::from_slice::<HybridCiphertext>(data) else { return };
    let gp = global_setup("bn254").unwrap();
    let _ = hc.abe.validate(&gp);
    let _ = hc.abe.encoded_len();
});
