#![no_main]

use acabe::policy::{eval_ast_oracle, judge_attrs, parse_policy, policy_to_lsss, reconstruction_coeffs, AttributeSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ast) = parse_policy(text) else { return };
    assert_eq!(parse_policy(&ast.to_string()).unwrap(), ast);

    // Every leaf held, then every other leaf held.
    let leaves = ast.leaves();
    for set in [
        leaves.iter().copied().collect::<AttributeSet>(),
        leaves.iter().step_by(2).copied().collect::<AttributeSet>(),
    ] {
        let sat = eval_ast_oracle(&set, &ast);
        assert_eq!(judge_attrs(&set, text).unwrap(), sat);
        if leaves.len() <= 16 {
            assert_eq!(reconstruction_coeffs(&policy_to_lsss(&ast), &set).is_some(), sat);
        }
    }
});
