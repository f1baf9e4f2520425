#![no_main]

use libfuzzer_sys::fuzz_target;
use xdc::runner::{decode_checkpoint, decode_tensors, encode_checkpoint, encode_tensors};

fuzz_target!(|data: &[u8]| {
    // the tensor layer is canonical: accepted bytes re-encode to themselves
    if let Ok(tensors) = decode_tensors(data) {
        assert_eq!(encode_tensors(&tensors), data);
    }
    if let Ok(encoders) = decode_checkpoint(data) {
        let again = decode_checkpoint(&encode_checkpoint(&encoders)).expect("re-encoded checkpoint decodes");
        assert_eq!(encoders, again);
    }
});
