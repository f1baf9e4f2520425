#![no_main]

use libfuzzer_sys::fuzz_target;
use xdc::synthdata::Dataset;

fuzz_target!(|data: &[u8]| {
    // anything that decodes must survive a re-encode unchanged
    if let Ok(d) = Dataset::decode_binary(data) {
        let again = Dataset::decode_binary(&d.encode_binary()).expect("re-encoded dataset decodes");
        assert_eq!(d, again);
    }
});
