#![no_main]

use libfuzzer_sys::fuzz_target;
use xdc::synthdata::Dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = Dataset::decode_csv(text) {
        let again = Dataset::decode_csv(&d.encode_csv()).expect("re-encoded csv parses");
        assert_eq!(d, again);
    }
});
