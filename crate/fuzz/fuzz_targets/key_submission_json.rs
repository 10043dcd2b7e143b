#![no_main]

use acabe_cli::envelope::VerifyEnvelope;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(env) = VerifyEnvelope::from_json(text) else { return };
    let Ok(gp) = env.params() else { return };
    assert!(env.verify(&gp).agree(), "verifiers disagree");
});
