#![no_main]

use econgrasp::label_store::{decode_dense, encode_dense};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = decode_dense(data) {
        let bytes = encode_dense(&labels).expect("decoded labels re-encode");
        assert_eq!(bytes, data);
    }
});
