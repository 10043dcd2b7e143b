#![no_main]

use acabe::algebra::{decode, decode_scalar, encode, encode_scalar, G1, G2};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = decode::<G1>(data, "g1") {
        assert_eq!(encode(&p), data);
    }
    if let Ok(q) = decode::<G2>(data, "g2") {
        assert_eq!(encode(&q), data);
    }
    if let Ok(s) = decode_scalar(data) {
        assert_eq!(encode_scalar(&s).as_slice(), data);
    }
});
