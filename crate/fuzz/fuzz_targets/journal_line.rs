#![no_main]

use acabe::cpabe::global_setup;
use acabe::ledger::{read_journal, Ledger};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(journal) = read_journal(data) else { return };
    let gp = global_setup("bn254").unwrap();
    if let Ok(l) = Ledger::replay(gp, &journal) {
        if let Some(total) = l.genesis_total() {
            assert_eq!(l.total_funds(), total);
        }
    }
});
