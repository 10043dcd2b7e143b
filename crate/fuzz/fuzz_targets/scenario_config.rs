#![no_main]

use acabe::protocol::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ScenarioConfig::from_json(text) {
        let again = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&again).unwrap(), cfg);
    }
});
